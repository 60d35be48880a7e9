#ifndef FEDECHO_MODEL_HPP
#define FEDECHO_MODEL_HPP

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "fedecho/rng.hpp"
#include "fedecho/tensor.hpp"

namespace fedecho {

enum class ArchKind { LinearSoftmax, Mlp };

// Shape metadata for a flat parameter vector.
//
// LinearSoftmax(d, K): theta = W (d x K, row-major); logits = a^T W.
// Mlp(d, h, K): theta = [W1 (d x h) | b1 (h) | W2 (h x K) | b2 (K)];
//   logits = relu(a^T W1 + b1) W2 + b2.
struct Architecture {
  ArchKind kind = ArchKind::LinearSoftmax;
  Index inputs = 0;
  Index hidden = 0;
  Index classes = 0;

  static Architecture linear(Index d, Index k) { return {ArchKind::LinearSoftmax, d, 0, k}; }
  static Architecture mlp(Index d, Index h, Index k) { return {ArchKind::Mlp, d, h, k}; }

  Index parameter_count() const;
  std::string describe() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct ModelParams {
  Architecture arch;
  DenseVector theta;

  ModelParams() = default;
  ModelParams(Architecture a, DenseVector t);
  explicit ModelParams(Architecture a);  // zero-initialized
};

struct Batch {
  DenseMatrix inputs;       // n x d
  std::vector<int> labels;  // n entries in [0, K)

  Index size() const { return inputs.rows(); }
  Batch subset(std::span<const Index> rows) const;
};

// Throws ConfigError when the batch is empty, ragged or has labels outside [0, classes).
void validate_batch(const Batch& batch, Index classes);

struct LossGrad {
  double loss = 0.0;
  DenseVector grad;
};

struct Evaluation {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

// Numerically stable softmax of each row (max-subtracted).
template <typename Derived>
Matrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> out = z;
  for (Index r = 0; r < out.rows(); ++r) {
    const Scalar peak = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - peak).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

template <typename Derived>
RowVector<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& row) {
  RowVector<typename Derived::Scalar> out = row;
  out = (out.array() - out.maxCoeff()).exp().matrix();
  return out / out.sum();
}

template <typename Derived>
Matrix<typename Derived::Scalar> log_softmax_rows(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> out = z;
  for (Index r = 0; r < out.rows(); ++r) {
    const Scalar peak = out.row(r).maxCoeff();
    const Scalar lse = peak + std::log((out.row(r).array() - peak).exp().sum());
    out.row(r).array() -= lse;
  }
  return out;
}

// Index of the largest entry; ties go to the lowest index.
template <typename Derived>
Index argmax(const Eigen::MatrixBase<Derived>& row) {
  Index best = 0;
  for (Index c = 1; c < row.size(); ++c) {
    if (row(c) > row(best)) best = c;
  }
  return best;
}

Logits forward_logits(const ModelParams& model, const DenseMatrix& inputs);

// Gradient w.r.t. theta of sum_{n,k} upstream(n,k) * logits(n,k), i.e. the
// vector-Jacobian product of the logit map, by backpropagation.
DenseVector backward_logits(const ModelParams& model, const DenseMatrix& inputs,
                            const DenseMatrix& upstream);

// Mean cross-entropy with hard labels and its gradient.
LossGrad ce_loss_and_grad(const ModelParams& model, const Batch& batch);

Evaluation evaluate(const ModelParams& model, const Batch& test);

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
ModelParams init_params(const Architecture& arch, RngStream& rng);

}  // namespace fedecho

#endif  // FEDECHO_MODEL_HPP
