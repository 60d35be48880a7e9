#ifndef FEDECHO_VERIFY_HPP
#define FEDECHO_VERIFY_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "fedecho/tensor.hpp"

namespace fedecho {

enum class VerifyKind { GradFd, IdentityLinear, IdentityGeneric, Clip, Entropy };

std::optional<VerifyKind> parse_verify_kind(const std::string& name);
std::string to_string(VerifyKind kind);

struct VerifyReport {
  VerifyKind kind = VerifyKind::GradFd;
  int trials = 0;
  double max_error = 0.0;
  double threshold = 0.0;
  bool passed = false;
  std::string detail;
};

// Randomized property suites over `trials` instances drawn from `seed`:
//   grad-fd           CE and distillation gradients (alpha 0, 0.5, 1) vs central
//                     differences, h = 1e-5, relative error < 1e-6
//   identity-linear   linear-softmax distillation gradient identity, < 1e-10
//   identity-generic  backprop vs explicit Jacobian residual form, < 1e-8
//                     (plus a finite-difference check of the loss, < 1e-6)
//   clip              post-clip norm <= nu, direction preserved
//   entropy           normalized entropy range/endpoints and alpha endpoints
VerifyReport run_verify(VerifyKind kind, int trials, std::uint64_t seed);

// Largest |analytic - numeric| / max(1, |analytic|, |numeric|) over all
// coordinates, numeric being the central difference with step h.
double max_fd_relative_error(const std::function<double(const DenseVector&)>& loss,
                             const DenseVector& at, const DenseVector& analytic, double h = 1e-5);

}  // namespace fedecho

#endif  // FEDECHO_VERIFY_HPP
