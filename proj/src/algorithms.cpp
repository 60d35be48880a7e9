#include "fedecho/algorithms.hpp"

#include <numeric>

namespace fedecho {

void LocalConfig::validate() const {
  if (!(eta_l >= 0.0) || !std::isfinite(eta_l)) throw ConfigError("local.lr: must be finite and >= 0");
  if (amount < 1) throw ConfigError("local: epochs/steps must be at least 1");
  if (batch < 1) throw ConfigError("local.batch: must be at least 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("local.weight_decay: must be >= 0");
}

DenseVector local_sgd(const ModelParams& dispatched, const Batch& shard, const LocalConfig& cfg,
                      RngStream& rng, DenseVector* final_theta) {
  cfg.validate();
  validate_batch(shard, dispatched.arch.classes);
  const Index n = shard.size();
  const Index batch = std::min<Index>(cfg.batch, n);

  DenseVector delta = DenseVector::Zero(dispatched.theta.size());
  ModelParams current = dispatched;
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});

  auto sgd_step = [&](std::span<const Index> rows) {
    current.theta = dispatched.theta + delta;
    DenseVector g = ce_loss_and_grad(current, shard.subset(rows)).grad;
    if (cfg.weight_decay > 0.0) g += cfg.weight_decay * current.theta;
    delta -= cfg.eta_l * g;
  };

  if (cfg.work == LocalWork::Epochs) {
    for (int e = 0; e < cfg.amount; ++e) {
      rng.shuffle(std::span<Index>(order));
      for (Index start = 0; start < n; start += batch) {
        const Index len = std::min(batch, n - start);
        sgd_step(std::span<const Index>(order.data() + start, static_cast<std::size_t>(len)));
      }
    }
  } else {
    Index cursor = n;
    for (int s = 0; s < cfg.amount; ++s) {
      if (cursor >= n) {
        rng.shuffle(std::span<Index>(order));
        cursor = 0;
      }
      const Index len = std::min(batch, n - cursor);
      sgd_step(std::span<const Index>(order.data() + cursor, static_cast<std::size_t>(len)));
      cursor += len;
    }
  }
  if (final_theta) *final_theta = dispatched.theta + delta;
  return delta;
}

DenseVector buffered_mean(std::span<const ClientUpdate> buffered) {
  if (buffered.empty()) throw ConfigError("aggregation needs at least one buffered update");
  DenseVector sum = DenseVector::Zero(buffered.front().delta.size());
  for (const auto& u : buffered) {
    if (u.delta.size() != sum.size()) throw ConfigError("buffered deltas differ in length");
    sum += u.delta;
  }
  return sum / static_cast<double>(buffered.size());
}

ModelParams fedbuff_update(const ModelParams& current, std::span<const ClientUpdate> buffered,
                           double eta) {
  ModelParams next = current;
  next.theta += eta * buffered_mean(buffered);
  return next;
}

void cache_client_logits(const ModelParams& dispatched, const ClientUpdate& update,
                         LogitsCache& cache, const DenseMatrix& pool) {
  const ModelParams client(dispatched.arch, dispatched.theta + update.delta);
  cache.store(static_cast<std::size_t>(update.client_id), forward_logits(client, pool));
}

DistillOutcome fedecho_update(const ModelParams& current, std::span<const ClientUpdate> buffered,
                              const LogitsCache& cache, const DenseMatrix& pool, double eta,
                              const DistillConfig& cfg, RngStream& rng, OptimizerState* state) {
  const ModelParams student = fedbuff_update(current, buffered, eta);
  return distillation_round(student, pool, cache, cfg, rng, state);
}

void AdaptiveConfig::validate() const {
  if (!(eta > 0.0)) throw ConfigError("server.lr: must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("server: beta1 and beta2 must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("server.epsilon: must be positive");
}

ModelParams adaptive_server_update(const ModelParams& current,
                                   std::span<const ClientUpdate> buffered,
                                   const AdaptiveConfig& cfg, ServerAdamState& state) {
  const DenseVector d = buffered_mean(buffered);
  if (state.first_moment.size() != d.size()) {
    state.first_moment = DenseVector::Zero(d.size());
    state.second_moment = DenseVector::Zero(d.size());
    state.steps = 0;
  }
  ++state.steps;
  state.first_moment = cfg.beta1 * state.first_moment + (1.0 - cfg.beta1) * d;
  state.second_moment = cfg.beta2 * state.second_moment + (1.0 - cfg.beta2) * d.cwiseProduct(d);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.steps));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.steps));
  ModelParams next = current;
  next.theta.array() += cfg.eta * (state.first_moment.array() / c1) /
                        ((state.second_moment.array() / c2).sqrt() + cfg.epsilon);
  return next;
}

RoundOutcome FedBuffServer::aggregate(const ModelParams& current,
                                      std::span<const ClientUpdate> buffered, std::int64_t) {
  return {fedbuff_update(current, buffered, eta_)};
}

FedEchoServer::FedEchoServer(double eta, DistillConfig cfg, DenseMatrix pool, std::size_t clients,
                             std::uint64_t seed)
    : eta_(eta), cfg_(std::move(cfg)), pool_(std::move(pool)), cache_(clients), seed_(seed) {
  cfg_.validate();
}

void FedEchoServer::on_arrival(const ClientUpdate& update, const ModelParams& dispatched) {
  cache_client_logits(dispatched, update, cache_, pool_);
}

RoundOutcome FedEchoServer::aggregate(const ModelParams& current,
                                      std::span<const ClientUpdate> buffered, std::int64_t round) {
  RngStream rng = RngStream::named(seed_, "distill-batches", static_cast<std::uint64_t>(round));
  DistillOutcome d = fedecho_update(current, buffered, cache_, pool_, eta_, cfg_, rng, &optimizer_);
  if (d.report.skipped) ++skipped_;
  RoundOutcome out{std::move(d.student)};
  out.mean_alpha = d.report.mean_alpha;
  out.mean_entropy = d.report.mean_entropy;
  out.distill_skipped = d.report.skipped;
  return out;
}

RoundOutcome AdaptiveServer::aggregate(const ModelParams& current,
                                       std::span<const ClientUpdate> buffered, std::int64_t) {
  return {adaptive_server_update(current, buffered, cfg_, state_)};
}

}  // namespace fedecho
