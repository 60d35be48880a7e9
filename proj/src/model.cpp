#include "fedecho/model.hpp"

#include <sstream>

namespace fedecho {
namespace {

using RowMap = Eigen::Map<const DenseMatrix>;
using VecMap = Eigen::Map<const DenseVector>;

struct MlpView {
  RowMap w1;
  VecMap b1;
  RowMap w2;
  VecMap b2;
};

MlpView mlp_view(const ModelParams& m) {
  const auto& a = m.arch;
  const double* p = m.theta.data();
  const Index w1 = a.inputs * a.hidden;
  const Index w2 = a.hidden * a.classes;
  return {RowMap(p, a.inputs, a.hidden), VecMap(p + w1, a.hidden),
          RowMap(p + w1 + a.hidden, a.hidden, a.classes),
          VecMap(p + w1 + a.hidden + w2, a.classes)};
}

void check_inputs(const ModelParams& m, const DenseMatrix& inputs) {
  if (inputs.cols() != m.arch.inputs) {
    throw ConfigError("model expects " + std::to_string(m.arch.inputs) + " input features, got " +
                      std::to_string(inputs.cols()));
  }
  if (m.theta.size() != m.arch.parameter_count()) {
    throw ConfigError("parameter vector length does not match " + m.arch.describe());
  }
}

}  // namespace

Index Architecture::parameter_count() const {
  switch (kind) {
    case ArchKind::LinearSoftmax:
      return inputs * classes;
    case ArchKind::Mlp:
      return inputs * hidden + hidden + hidden * classes + classes;
  }
  return 0;
}

std::string Architecture::describe() const {
  std::ostringstream os;
  if (kind == ArchKind::LinearSoftmax) {
    os << "LinearSoftmax(d=" << inputs << ", K=" << classes << ")";
  } else {
    os << "Mlp(d=" << inputs << ", h=" << hidden << ", K=" << classes << ")";
  }
  return os.str();
}

ModelParams::ModelParams(Architecture a, DenseVector t) : arch(a), theta(std::move(t)) {
  if (theta.size() != arch.parameter_count()) {
    throw ConfigError("parameter vector of length " + std::to_string(theta.size()) +
                      " does not match " + arch.describe());
  }
}

ModelParams::ModelParams(Architecture a) : arch(a), theta(DenseVector::Zero(a.parameter_count())) {}

Batch Batch::subset(std::span<const Index> rows) const {
  Batch out;
  out.inputs.resize(static_cast<Index>(rows.size()), inputs.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.inputs.row(static_cast<Index>(i)) = inputs.row(rows[i]);
    out.labels.push_back(labels[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

void validate_batch(const Batch& batch, Index classes) {
  if (batch.inputs.rows() < 1) throw ConfigError("batch is empty");
  if (static_cast<std::size_t>(batch.inputs.rows()) != batch.labels.size()) {
    throw ConfigError("batch has " + std::to_string(batch.inputs.rows()) + " rows but " +
                      std::to_string(batch.labels.size()) + " labels");
  }
  for (int y : batch.labels) {
    if (y < 0 || y >= classes) throw ConfigError("label " + std::to_string(y) + " out of range");
  }
}

Logits forward_logits(const ModelParams& m, const DenseMatrix& inputs) {
  check_inputs(m, inputs);
  if (m.arch.kind == ArchKind::LinearSoftmax) {
    return inputs * RowMap(m.theta.data(), m.arch.inputs, m.arch.classes);
  }
  const MlpView v = mlp_view(m);
  DenseMatrix hidden = inputs * v.w1;
  hidden.rowwise() += v.b1.transpose();
  hidden = hidden.cwiseMax(0.0);
  DenseMatrix z = hidden * v.w2;
  z.rowwise() += v.b2.transpose();
  return z;
}

DenseVector backward_logits(const ModelParams& m, const DenseMatrix& inputs,
                            const DenseMatrix& upstream) {
  check_inputs(m, inputs);
  DenseVector grad(m.theta.size());
  if (m.arch.kind == ArchKind::LinearSoftmax) {
    Eigen::Map<DenseMatrix>(grad.data(), m.arch.inputs, m.arch.classes) =
        inputs.transpose() * upstream;
    return grad;
  }
  const auto& a = m.arch;
  const MlpView v = mlp_view(m);
  DenseMatrix pre = inputs * v.w1;
  pre.rowwise() += v.b1.transpose();
  const DenseMatrix hidden = pre.cwiseMax(0.0);

  DenseMatrix d_hidden = upstream * v.w2.transpose();
  d_hidden = (pre.array() > 0.0).select(d_hidden, 0.0);

  double* g = grad.data();
  Eigen::Map<DenseMatrix>(g, a.inputs, a.hidden) = inputs.transpose() * d_hidden;
  g += a.inputs * a.hidden;
  Eigen::Map<DenseVector>(g, a.hidden) = d_hidden.colwise().sum().transpose();
  g += a.hidden;
  Eigen::Map<DenseMatrix>(g, a.hidden, a.classes) = hidden.transpose() * upstream;
  g += a.hidden * a.classes;
  Eigen::Map<DenseVector>(g, a.classes) = upstream.colwise().sum().transpose();
  return grad;
}

LossGrad ce_loss_and_grad(const ModelParams& m, const Batch& batch) {
  validate_batch(batch, m.arch.classes);
  const Logits z = forward_logits(m, batch.inputs);
  const DenseMatrix log_q = log_softmax_rows(z);
  DenseMatrix dz = log_q.array().exp().matrix();
  const double n = static_cast<double>(z.rows());
  double loss = 0.0;
  for (Index r = 0; r < z.rows(); ++r) {
    const Index y = batch.labels[static_cast<std::size_t>(r)];
    loss += -log_q(r, y);
    dz(r, y) -= 1.0;
  }
  dz /= n;
  return {loss / n, backward_logits(m, batch.inputs, dz)};
}

Evaluation evaluate(const ModelParams& m, const Batch& test) {
  validate_batch(test, m.arch.classes);
  const Logits z = forward_logits(m, test.inputs);
  const DenseMatrix log_q = log_softmax_rows(z);
  Index correct = 0;
  double loss = 0.0;
  for (Index r = 0; r < z.rows(); ++r) {
    const Index y = test.labels[static_cast<std::size_t>(r)];
    if (argmax(z.row(r)) == y) ++correct;
    loss += -log_q(r, y);
  }
  const double n = static_cast<double>(z.rows());
  return {static_cast<double>(correct) / n, loss / n};
}

ModelParams init_params(const Architecture& arch, RngStream& rng) {
  ModelParams m(arch);
  auto fill = [&](double* p, Index count, Index fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Index i = 0; i < count; ++i) p[i] = rng.uniform(-bound, bound);
  };
  double* p = m.theta.data();
  if (arch.kind == ArchKind::LinearSoftmax) {
    fill(p, arch.inputs * arch.classes, arch.inputs);
    return m;
  }
  fill(p, arch.inputs * arch.hidden, arch.inputs);
  p += arch.inputs * arch.hidden;
  fill(p, arch.hidden, arch.inputs);
  p += arch.hidden;
  fill(p, arch.hidden * arch.classes, arch.hidden);
  p += arch.hidden * arch.classes;
  fill(p, arch.classes, arch.hidden);
  return m;
}

}  // namespace fedecho
