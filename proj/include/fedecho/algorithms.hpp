#ifndef FEDECHO_ALGORITHMS_HPP
#define FEDECHO_ALGORITHMS_HPP

#include <span>

#include "fedecho/distill.hpp"
#include "fedecho/model.hpp"
#include "fedecho/simulator.hpp"

namespace fedecho {

enum class LocalWork { Epochs, Steps };

struct LocalConfig {
  double eta_l = 0.05;
  LocalWork work = LocalWork::Epochs;
  int amount = 2;  // epochs or steps, depending on `work`
  int batch = 50;
  double weight_decay = 1e-4;

  void validate() const;
};

// Mini-batch SGD with L2 weight decay (g + wd * theta) on a copy of the
// dispatched model. Parameters are carried as dispatched + delta, so the
// server-side reconstruction dispatched + delta is bit-identical to the
// client's final model. Epoch mode reshuffles the shard every epoch; steps
// mode cycles through reshuffled epochs until `amount` steps are taken.
DenseVector local_sgd(const ModelParams& dispatched, const Batch& shard, const LocalConfig& cfg,
                      RngStream& rng, DenseVector* final_theta = nullptr);

// Sum of buffered deltas in arrival order, divided by their count.
DenseVector buffered_mean(std::span<const ClientUpdate> buffered);

// x_{t+1} = x_t + eta * mean(delta).
ModelParams fedbuff_update(const ModelParams& current, std::span<const ClientUpdate> buffered,
                           double eta);

// Reconstructs x^i = x_{t-tau} + delta and stores its raw logits over the pool.
void cache_client_logits(const ModelParams& dispatched, const ClientUpdate& update,
                         LogitsCache& cache, const DenseMatrix& pool);

// FedBuff step followed by a distillation round on the cached teacher logits.
DistillOutcome fedecho_update(const ModelParams& current, std::span<const ClientUpdate> buffered,
                              const LogitsCache& cache, const DenseMatrix& pool, double eta,
                              const DistillConfig& cfg, RngStream& rng,
                              OptimizerState* state = nullptr);

struct AdaptiveConfig {
  double eta = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;

  void validate() const;
};

struct ServerAdamState {
  DenseVector first_moment;
  DenseVector second_moment;
  long steps = 0;
};

// Adam on the server with the buffered mean delta as pseudo-gradient (ascent
// direction): x_{t+1} = x_t + eta * m_hat / (sqrt(v_hat) + eps). An
// approximation of adaptive asynchronous baselines, not a reproduction of any.
ModelParams adaptive_server_update(const ModelParams& current,
                                   std::span<const ClientUpdate> buffered,
                                   const AdaptiveConfig& cfg, ServerAdamState& state);

class FedBuffServer : public AlgorithmHook {
 public:
  explicit FedBuffServer(double eta) : eta_(eta) {}
  RoundOutcome aggregate(const ModelParams& current, std::span<const ClientUpdate> buffered,
                         std::int64_t round) override;

 private:
  double eta_;
};

class FedEchoServer : public AlgorithmHook {
 public:
  FedEchoServer(double eta, DistillConfig cfg, DenseMatrix pool, std::size_t clients,
                std::uint64_t seed);

  void on_arrival(const ClientUpdate& update, const ModelParams& dispatched) override;
  RoundOutcome aggregate(const ModelParams& current, std::span<const ClientUpdate> buffered,
                         std::int64_t round) override;

  const LogitsCache& cache() const { return cache_; }
  int skipped_rounds() const { return skipped_; }

 private:
  double eta_;
  DistillConfig cfg_;
  DenseMatrix pool_;
  LogitsCache cache_;
  std::uint64_t seed_;
  OptimizerState optimizer_;
  int skipped_ = 0;
};

class AdaptiveServer : public AlgorithmHook {
 public:
  explicit AdaptiveServer(AdaptiveConfig cfg) : cfg_(cfg) {}
  RoundOutcome aggregate(const ModelParams& current, std::span<const ClientUpdate> buffered,
                         std::int64_t round) override;

 private:
  AdaptiveConfig cfg_;
  ServerAdamState state_;
};

}  // namespace fedecho

#endif  // FEDECHO_ALGORITHMS_HPP
