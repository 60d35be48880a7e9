#include "fedecho/gradient_identity.hpp"

#include <algorithm>

#include "fedecho/distill.hpp"

namespace fedecho {
namespace {

void check_shared_arch(const ModelParams& student, std::span<const ModelParams> teachers,
                       ArchKind required) {
  if (student.arch.kind != required) {
    throw ConfigError("identity check requires a " +
                      std::string(required == ArchKind::Mlp ? "Mlp" : "LinearSoftmax") +
                      " student, got " + student.arch.describe());
  }
  if (teachers.empty()) throw ConfigError("identity check needs at least one teacher");
  for (const auto& t : teachers) {
    if (!(t.arch == student.arch)) {
      throw ConfigError("teacher " + t.arch.describe() + " does not match student " +
                        student.arch.describe());
    }
  }
}

// Teacher logits whose softmax is exactly the soft-label distribution s_n.
Logits soft_labels_as_logits(const DenseMatrix& s) { return s.array().log().matrix(); }

Batch single(const DenseMatrix& inputs, std::span<const int> labels, Index r) {
  Batch b;
  b.inputs = inputs.row(r);
  b.labels = {labels[static_cast<std::size_t>(r)]};
  return b;
}

}  // namespace

DenseMatrix teacher_soft_labels(std::span<const ModelParams> teachers, const DenseMatrix& inputs) {
  DenseMatrix s;
  for (const auto& t : teachers) {
    const DenseMatrix p = softmax_rows(forward_logits(t, inputs));
    if (s.size() == 0) {
      s = p;
    } else {
      s += p;
    }
  }
  return s / static_cast<double>(teachers.size());
}

double verify_identity_linear(const ModelParams& student, std::span<const ModelParams> teachers,
                              const DenseMatrix& inputs, std::span<const int> labels) {
  check_shared_arch(student, teachers, ArchKind::LinearSoftmax);
  Batch all;
  all.inputs = inputs;
  all.labels.assign(labels.begin(), labels.end());
  validate_batch(all, student.arch.classes);

  const double n_teachers = static_cast<double>(teachers.size());
  auto rhs = [&](const Batch& b) {
    DenseVector teacher_mean = DenseVector::Zero(student.theta.size());
    for (const auto& t : teachers) teacher_mean += ce_loss_and_grad(t, b).grad;
    return DenseVector(ce_loss_and_grad(student, b).grad - teacher_mean / n_teachers);
  };
  auto lhs = [&](const Batch& b) {
    const Logits teacher = soft_labels_as_logits(teacher_soft_labels(teachers, b.inputs));
    return distill_loss_and_grad(student, b.inputs, teacher, 1.0).grad;
  };

  double worst = 0.0;
  for (Index r = 0; r < inputs.rows(); ++r) {
    const Batch b = single(inputs, labels, r);
    worst = std::max(worst, (lhs(b) - rhs(b)).cwiseAbs().maxCoeff());
  }
  worst = std::max(worst, (lhs(all) - rhs(all)).cwiseAbs().maxCoeff());
  return worst;
}

DenseMatrix mlp_logit_jacobian(const ModelParams& model, const DenseVector& input) {
  const auto& a = model.arch;
  if (a.kind != ArchKind::Mlp) throw ConfigError("mlp_logit_jacobian requires an Mlp");
  if (input.size() != a.inputs) throw ConfigError("mlp_logit_jacobian: input size mismatch");
  const Index d = a.inputs, h = a.hidden, k_count = a.classes;
  const double* w1 = model.theta.data();
  const double* b1 = w1 + d * h;
  const double* w2 = b1 + h;
  const Index off_b1 = d * h, off_w2 = d * h + h, off_b2 = d * h + h + h * k_count;

  std::vector<double> pre(static_cast<std::size_t>(h));
  for (Index j = 0; j < h; ++j) {
    double s = b1[j];
    for (Index i = 0; i < d; ++i) s += input(i) * w1[i * h + j];
    pre[static_cast<std::size_t>(j)] = s;
  }

  DenseMatrix jac = DenseMatrix::Zero(k_count, a.parameter_count());
  for (Index k = 0; k < k_count; ++k) {
    for (Index j = 0; j < h; ++j) {
      const double p = pre[static_cast<std::size_t>(j)];
      const double active = p > 0.0 ? 1.0 : 0.0;
      for (Index i = 0; i < d; ++i) jac(k, i * h + j) = w2[j * k_count + k] * active * input(i);
      jac(k, off_b1 + j) = w2[j * k_count + k] * active;
      jac(k, off_w2 + j * k_count + k) = p > 0.0 ? p : 0.0;
    }
    jac(k, off_b2 + k) = 1.0;
  }
  return jac;
}

double verify_identity_generic(const ModelParams& student, std::span<const ModelParams> teachers,
                               const DenseMatrix& inputs, std::span<const int> labels) {
  check_shared_arch(student, teachers, ArchKind::Mlp);
  Batch all;
  all.inputs = inputs;
  all.labels.assign(labels.begin(), labels.end());
  validate_batch(all, student.arch.classes);

  const DenseMatrix s = teacher_soft_labels(teachers, inputs);
  const DenseMatrix q = softmax_rows(forward_logits(student, inputs));
  const Index n = inputs.rows();

  double worst = 0.0;
  DenseVector mean_explicit = DenseVector::Zero(student.theta.size());
  for (Index r = 0; r < n; ++r) {
    const DenseVector a = inputs.row(r).transpose();
    const DenseVector residual = (q.row(r) - s.row(r)).transpose();
    const DenseVector explicit_grad = mlp_logit_jacobian(student, a).transpose() * residual;
    mean_explicit += explicit_grad;

    const DenseMatrix row = inputs.row(r);
    const DenseVector backprop =
        distill_loss_and_grad(student, row, soft_labels_as_logits(s.row(r)), 1.0).grad;
    worst = std::max(worst, (backprop - explicit_grad).cwiseAbs().maxCoeff());
  }
  mean_explicit /= static_cast<double>(n);
  const DenseVector backprop_mean =
      distill_loss_and_grad(student, inputs, soft_labels_as_logits(s), 1.0).grad;
  worst = std::max(worst, (backprop_mean - mean_explicit).cwiseAbs().maxCoeff());
  return worst;
}

}  // namespace fedecho
