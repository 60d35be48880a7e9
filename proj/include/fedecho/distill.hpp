#ifndef FEDECHO_DISTILL_HPP
#define FEDECHO_DISTILL_HPP

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedecho/model.hpp"
#include "fedecho/rng.hpp"
#include "fedecho/tensor.hpp"

namespace fedecho {

class NoTeacherAvailable : public std::runtime_error {
 public:
  NoTeacherAvailable() : std::runtime_error("no client logits cached yet") {}
};

// Latest raw logits of every client over the full unlabeled pool.
// A slot is filled once the client has delivered its first update and is
// overwritten by every later one.
class LogitsCache {
 public:
  LogitsCache() = default;
  explicit LogitsCache(std::size_t clients) : slots_(clients) {}

  void store(std::size_t client, Logits logits);
  bool has(std::size_t client) const { return slots_.at(client).has_value(); }
  const Logits& at(std::size_t client) const;

  std::size_t clients() const { return slots_.size(); }
  std::size_t available() const;
  bool empty() const { return available() == 0; }

 private:
  std::vector<std::optional<Logits>> slots_;
};

enum class DistillOptimizer { Sgd, Adam };

struct DistillConfig {
  double alpha_min = 0.2;
  double alpha_max = 0.8;
  // When set, alpha is held at this value instead of following the entropy.
  std::optional<double> fixed_alpha;
  double nu = 5.0;  // +inf disables clipping
  double eta_d = 1e-3;
  // Distillation steps per round; unset means one pass over the pool.
  std::optional<int> steps;
  int batch_size = 50;
  DistillOptimizer optimizer = DistillOptimizer::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
  int resolved_steps(Index pool_size) const;
};

struct EntropyStats {
  DenseVector per_sample;  // H^u in nats
  double normalized = 0.0; // mean H^u / ln K, in [0, 1]
};

// Element-wise mean of the cached logits over clients that have a slot,
// restricted to the given pool rows. Clients are summed in ascending id order.
Logits ensemble_teacher_logits(const LogitsCache& cache, std::span<const Index> rows);

EntropyStats batch_entropy(const Logits& teacher, Index classes);

double interpolate_alpha(double normalized_entropy, const DistillConfig& cfg);

// alpha * KL(softmax(teacher) || softmax(student)) + (1 - alpha) * CE(student, argmax teacher),
// averaged over rows; the gradient is taken w.r.t. the student parameters only.
LossGrad distill_loss_and_grad(const ModelParams& student, const DenseMatrix& inputs,
                               const Logits& teacher, double alpha);

// Rescales g onto the ball of radius nu when it lies outside.
template <typename Derived>
Vector<typename Derived::Scalar> clip_gradient(const Eigen::MatrixBase<Derived>& g,
                                               typename Derived::Scalar nu) {
  using Scalar = typename Derived::Scalar;
  if (!(nu > Scalar(0))) throw ConfigError("clip threshold must be positive");
  Vector<Scalar> out = g;
  const Scalar norm = out.norm();
  if (std::isinf(nu) || norm <= nu) return out;
  Scalar scale = nu / norm;
  out = g * scale;
  while (out.norm() > nu) {
    scale = std::nextafter(scale, Scalar(0));
    out = g * scale;
  }
  return out;
}

// First/second moment state for the distillation optimizer. An empty state is
// lazily sized on the first step.
struct OptimizerState {
  DenseVector first_moment;
  DenseVector second_moment;
  long steps = 0;
};

// theta <- theta - eta * update(grad) for SGD or bias-corrected Adam.
void optimizer_step(DenseVector& theta, const DenseVector& grad, const DistillConfig& cfg,
                    OptimizerState& state);

struct DistillReport {
  int steps = 0;
  double mean_alpha = std::numeric_limits<double>::quiet_NaN();
  double mean_entropy = std::numeric_limits<double>::quiet_NaN();
  double mean_loss = std::numeric_limits<double>::quiet_NaN();
  int clipped = 0;
  bool skipped = false;  // empty cache
};

struct DistillOutcome {
  ModelParams student;
  DistillReport report;
};

// One server distillation round: Q mini-batches drawn without replacement
// from the pool (reshuffled every pass), each running ensemble -> entropy ->
// alpha -> grad -> clip -> optimizer step. With a null state, a fresh
// optimizer state is used for this round only.
DistillOutcome distillation_round(const ModelParams& student, const DenseMatrix& pool,
                                  const LogitsCache& cache, const DistillConfig& cfg,
                                  RngStream& rng, OptimizerState* state = nullptr);

}  // namespace fedecho

#endif  // FEDECHO_DISTILL_HPP
