#ifndef FEDECHO_GRADIENT_IDENTITY_HPP
#define FEDECHO_GRADIENT_IDENTITY_HPP

#include <span>

#include "fedecho/model.hpp"

namespace fedecho {

// Mean of the teachers' softmax outputs, s_n = (1/N) sum_i softmax(psi(x_i; a_n)).
DenseMatrix teacher_soft_labels(std::span<const ModelParams> teachers, const DenseMatrix& inputs);

// Linear-softmax distillation gradient identity.
//
// Left side: gradient of the soft-label cross-entropy l(softmax(x^T a_n), s_n)
// taken through the distillation loss (alpha = 1, teacher logits log s_n).
// Right side: grad f(x) - (1/N) sum_i grad f(x_i), each a hard-label
// cross-entropy gradient on the ground-truth labels b_n.
// Checked per sample and for the batch mean; returns the largest absolute
// elementwise discrepancy.
double verify_identity_linear(const ModelParams& student, std::span<const ModelParams> teachers,
                              const DenseMatrix& inputs, std::span<const int> labels);

// Explicit Jacobian d psi(a) / d theta (K x P) of an Mlp at a single input row,
// assembled entry by entry from the closed-form partial derivatives.
DenseMatrix mlp_logit_jacobian(const ModelParams& model, const DenseVector& input);

// Generic-architecture identity: backprop through the distillation loss equals
// J_psi(x)^T (softmax(psi(x)) - s_n), the latter assembled from explicit
// Jacobians. Per sample and batch mean; returns the largest absolute error.
double verify_identity_generic(const ModelParams& student, std::span<const ModelParams> teachers,
                               const DenseMatrix& inputs, std::span<const int> labels);

}  // namespace fedecho

#endif  // FEDECHO_GRADIENT_IDENTITY_HPP
