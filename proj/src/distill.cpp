#include "fedecho/distill.hpp"

#include <algorithm>
#include <numeric>

namespace fedecho {

void LogitsCache::store(std::size_t client, Logits logits) {
  if (!all_finite(logits)) throw NumericalError("non-finite client logits", -1);
  slots_.at(client) = std::move(logits);
}

const Logits& LogitsCache::at(std::size_t client) const {
  const auto& slot = slots_.at(client);
  if (!slot) throw NoTeacherAvailable();
  return *slot;
}

std::size_t LogitsCache::available() const {
  return static_cast<std::size_t>(
      std::count_if(slots_.begin(), slots_.end(), [](const auto& s) { return s.has_value(); }));
}

void DistillConfig::validate() const {
  if (!(alpha_min >= 0.0 && alpha_min <= alpha_max && alpha_max <= 1.0)) {
    throw ConfigError("distill: require 0 <= alpha_min <= alpha_max <= 1");
  }
  if (fixed_alpha && !(*fixed_alpha >= 0.0 && *fixed_alpha <= 1.0)) {
    throw ConfigError("distill.alpha: fixed alpha must lie in [0, 1]");
  }
  if (!(nu > 0.0)) throw ConfigError("distill.nu: clip threshold must be positive");
  if (!(eta_d >= 0.0) || !std::isfinite(eta_d)) {
    throw ConfigError("distill.lr: learning rate must be finite and non-negative");
  }
  if (steps && *steps < 1) throw ConfigError("distill.steps: must be at least 1");
  if (batch_size < 1) throw ConfigError("distill.batch: must be at least 1");
  if (optimizer == DistillOptimizer::Adam &&
      !(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
    throw ConfigError("distill: Adam requires beta1, beta2 in [0, 1) and epsilon > 0");
  }
}

int DistillConfig::resolved_steps(Index pool_size) const {
  if (steps) return *steps;
  return static_cast<int>((pool_size + batch_size - 1) / batch_size);
}

Logits ensemble_teacher_logits(const LogitsCache& cache, std::span<const Index> rows) {
  Logits sum;
  std::size_t count = 0;
  for (std::size_t c = 0; c < cache.clients(); ++c) {
    if (!cache.has(c)) continue;
    const Logits& y = cache.at(c);
    if (count == 0) sum = Logits::Zero(static_cast<Index>(rows.size()), y.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      sum.row(static_cast<Index>(r)) += y.row(rows[r]);
    }
    ++count;
  }
  if (count == 0) throw NoTeacherAvailable();
  return sum / static_cast<double>(count);
}

EntropyStats batch_entropy(const Logits& teacher, Index classes) {
  if (classes < 2) throw ConfigError("entropy normalization needs at least two classes");
  if (teacher.cols() != classes || teacher.rows() < 1) {
    throw ConfigError("batch_entropy: teacher logits must be n x K with n >= 1");
  }
  const DenseMatrix p = softmax_rows(teacher);
  const DenseMatrix log_p = log_softmax_rows(teacher);
  EntropyStats out;
  out.per_sample.resize(teacher.rows());
  for (Index r = 0; r < p.rows(); ++r) {
    double h = 0.0;
    for (Index c = 0; c < classes; ++c) {
      if (p(r, c) > 0.0) h -= p(r, c) * log_p(r, c);
    }
    out.per_sample(r) = h;
  }
  const double mean = out.per_sample.mean();
  out.normalized = std::clamp(mean / std::log(static_cast<double>(classes)), 0.0, 1.0);
  return out;
}

double interpolate_alpha(double normalized_entropy, const DistillConfig& cfg) {
  if (cfg.fixed_alpha) return *cfg.fixed_alpha;
  const double h = std::clamp(normalized_entropy, 0.0, 1.0);
  const double alpha = h * cfg.alpha_max + (1.0 - h) * cfg.alpha_min;
  return std::clamp(alpha, cfg.alpha_min, cfg.alpha_max);
}

LossGrad distill_loss_and_grad(const ModelParams& student, const DenseMatrix& inputs,
                               const Logits& teacher, double alpha) {
  const Logits z = forward_logits(student, inputs);
  if (teacher.rows() != z.rows() || teacher.cols() != z.cols()) {
    throw ConfigError("distill_loss_and_grad: teacher/student logit shapes differ");
  }
  const DenseMatrix log_q = log_softmax_rows(z);
  const DenseMatrix q = log_q.array().exp().matrix();
  const DenseMatrix log_p = log_softmax_rows(teacher);
  const DenseMatrix p = log_p.array().exp().matrix();

  DenseMatrix soft = q - p;
  DenseMatrix hard = q;
  double loss = 0.0;
  for (Index r = 0; r < z.rows(); ++r) {
    double kl = 0.0;
    for (Index c = 0; c < z.cols(); ++c) {
      if (p(r, c) > 0.0) kl += p(r, c) * (log_p(r, c) - log_q(r, c));
    }
    const Index y = argmax(teacher.row(r));
    hard(r, y) -= 1.0;
    loss += alpha * kl + (1.0 - alpha) * -log_q(r, y);
  }
  const double n = static_cast<double>(z.rows());
  DenseMatrix dz = alpha * soft + (1.0 - alpha) * hard;
  dz /= n;
  return {loss / n, backward_logits(student, inputs, dz)};
}

void optimizer_step(DenseVector& theta, const DenseVector& grad, const DistillConfig& cfg,
                    OptimizerState& state) {
  if (cfg.optimizer == DistillOptimizer::Sgd) {
    theta -= cfg.eta_d * grad;
    ++state.steps;
    return;
  }
  if (state.first_moment.size() != grad.size()) {
    state.first_moment = DenseVector::Zero(grad.size());
    state.second_moment = DenseVector::Zero(grad.size());
    state.steps = 0;
  }
  ++state.steps;
  state.first_moment = cfg.beta1 * state.first_moment + (1.0 - cfg.beta1) * grad;
  state.second_moment =
      cfg.beta2 * state.second_moment + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.steps));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.steps));
  const DenseVector m_hat = state.first_moment / c1;
  const DenseVector v_hat = state.second_moment / c2;
  theta -= (cfg.eta_d * m_hat.array() / (v_hat.array().sqrt() + cfg.epsilon)).matrix();
}

DistillOutcome distillation_round(const ModelParams& student, const DenseMatrix& pool,
                                  const LogitsCache& cache, const DistillConfig& cfg,
                                  RngStream& rng, OptimizerState* state) {
  cfg.validate();
  DistillOutcome out{student, {}};
  if (cache.empty()) {
    out.report.skipped = true;
    return out;
  }
  OptimizerState local;
  OptimizerState& opt = state ? *state : local;

  const Index pool_size = pool.rows();
  const Index batch = std::min<Index>(cfg.batch_size, pool_size);
  const int steps = cfg.resolved_steps(pool_size);

  std::vector<Index> order(static_cast<std::size_t>(pool_size));
  std::iota(order.begin(), order.end(), Index{0});
  Index cursor = pool_size;  // forces a shuffle before the first batch

  double alpha_sum = 0.0;
  double entropy_sum = 0.0;
  double loss_sum = 0.0;
  for (int q = 0; q < steps; ++q) {
    if (cursor + batch > pool_size) {
      rng.shuffle(std::span<Index>(order));
      cursor = 0;
    }
    const std::span<const Index> rows(order.data() + cursor, static_cast<std::size_t>(batch));
    cursor += batch;

    DenseMatrix inputs(batch, pool.cols());
    for (Index r = 0; r < batch; ++r) inputs.row(r) = pool.row(rows[static_cast<std::size_t>(r)]);

    const Logits teacher = ensemble_teacher_logits(cache, rows);
    const EntropyStats entropy = batch_entropy(teacher, teacher.cols());
    const double alpha = interpolate_alpha(entropy.normalized, cfg);
    const LossGrad lg = distill_loss_and_grad(out.student, inputs, teacher, alpha);
    if (lg.grad.norm() > cfg.nu) ++out.report.clipped;
    const DenseVector g = clip_gradient(lg.grad, cfg.nu);
    optimizer_step(out.student.theta, g, cfg, opt);

    alpha_sum += alpha;
    entropy_sum += entropy.normalized;
    loss_sum += lg.loss;
  }
  out.report.steps = steps;
  out.report.mean_alpha = alpha_sum / steps;
  out.report.mean_entropy = entropy_sum / steps;
  out.report.mean_loss = loss_sum / steps;
  return out;
}

}  // namespace fedecho
