#ifndef FEDECHO_SIMULATOR_HPP
#define FEDECHO_SIMULATOR_HPP

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fedecho/model.hpp"
#include "fedecho/rng.hpp"

namespace fedecho {

enum class RuntimeCategory { Short = 0, Medium = 1, Long = 2 };
enum class RuntimeMode { PerDispatch, PerClient };

std::string to_string(RuntimeCategory c);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Runtime tiers in table units (unit_seconds each). The tier of a client is
// picked from its sample count; gamma softens that dependence.
struct DelayProfile {
  Interval short_tier{1.0, 2.0};
  Interval medium_tier{3.0, 5.0};
  Interval long_tier{50.0, 80.0};
  double unit_seconds = 10.0;
  double gamma = 1.0;
  double max_long_fraction = 0.10;
  double medium_fraction = 0.30;

  static DelayProfile large();
  static DelayProfile mild();

  const Interval& tier(RuntimeCategory c) const;
  void validate() const;
};

// Ranks clients by score = w * r_i + (1 - w) * u_i, with r_i the mid-rank of
// the client's sample count scaled to [0, 1], u_i ~ U(0, 1) and
// w = 1 / (1 + gamma). The top floor(max_long_fraction * N) scores are Long,
// the next round(medium_fraction * (N - n_long)) are Medium, the rest Short.
std::vector<RuntimeCategory> assign_categories(std::span<const std::size_t> sample_counts,
                                               const DelayProfile& profile, RngStream& rng);

// Uniform draw from the category interval, in seconds.
double sample_runtime(RuntimeCategory category, const DelayProfile& profile, RngStream& rng);

struct ClientUpdate {
  int client_id = 0;
  DenseVector delta;  // x^i_{t-tau,K} - x_{t-tau}
  std::int64_t dispatch_round = 0;
};

struct PendingTask {
  int client_id = 0;
  std::int64_t dispatch_round = 0;  // also the checkpoint version
  double dispatch_time = 0.0;
  double finish_time = 0.0;
  std::uint64_t serial = 0;  // global dispatch counter
};

struct RoundOutcome {
  ModelParams model;
  double mean_alpha = std::numeric_limits<double>::quiet_NaN();
  double mean_entropy = std::numeric_limits<double>::quiet_NaN();
  bool distill_skipped = false;
};

// Server-side algorithm plugged into the event loop.
class AlgorithmHook {
 public:
  virtual ~AlgorithmHook() = default;
  // Called for every received update with the model the client started from.
  virtual void on_arrival(const ClientUpdate& update, const ModelParams& dispatched) {
    (void)update;
    (void)dispatched;
  }
  // Called when the buffer holds M updates; returns x_{t+1}.
  virtual RoundOutcome aggregate(const ModelParams& current, std::span<const ClientUpdate> buffered,
                                 std::int64_t round) = 0;
};

// Runs local training for one dispatch and returns the model delta.
using ClientTrainer =
    std::function<DenseVector(int client, const ModelParams& dispatched, std::uint64_t serial)>;

struct SimulatorConfig {
  int clients = 1;
  int concurrency = 1;
  int buffer_size = 1;
  DelayProfile delay;
  RuntimeMode runtime_mode = RuntimeMode::PerDispatch;
  std::vector<RuntimeCategory> categories;  // one per client
  std::uint64_t seed = 0;

  void validate() const;
};

struct EventRecord {
  std::uint64_t index = 0;
  double clock = 0.0;
  int client = 0;
  std::int64_t tau = 0;
  int buffer_fill = 0;     // m after accumulating this update
  std::int64_t round = 0;  // t at arrival
  bool global_update = false;
  std::size_t active = 0;       // in-flight tasks after this event's dispatches
  std::size_t checkpoints = 0;  // retained checkpoints after this event
};

struct RoundRecord {
  std::int64_t round = 0;  // index of the completed round, starting at 1
  double clock = 0.0;
  std::int64_t max_tau = 0;
  double mean_alpha = std::numeric_limits<double>::quiet_NaN();
  double mean_entropy = std::numeric_limits<double>::quiet_NaN();
  bool distill_skipped = false;
};

struct ServerState {
  double clock = 0.0;
  std::int64_t round = 0;
  ModelParams global;
  std::vector<ClientUpdate> buffer;  // size is the fill counter m
  std::vector<PendingTask> pending;  // min-heap on (finish_time, client_id)
  std::map<std::int64_t, ModelParams> checkpoints;
  std::vector<bool> active;
  std::vector<std::int64_t> taus;           // every processed update
  std::vector<std::int64_t> round_max_tau;  // one per completed round
  std::uint64_t events = 0;
  std::uint64_t dispatches = 0;
  std::size_t max_checkpoints = 0;

  std::size_t active_count() const;
};

struct DelayStats {
  std::int64_t tau_max = 0;
  double tau_avg = 0.0;
};

struct StepResult {
  std::vector<EventRecord> events;
  std::vector<RoundRecord> rounds;
  bool complete = false;  // queue was empty
};

// Deterministic discrete-event engine for buffered asynchronous FL.
//
// One step() processes every task finishing at the earliest pending instant,
// in client-id order. Each arrival: local training result is formed against
// the dispatched checkpoint, the hook sees it, it enters the buffer, and a
// global update fires when the buffer reaches M. Once the instant is done,
// unreferenced checkpoints are dropped and each finished task is replaced by
// a client drawn uniformly from the idle set, starting from the latest model.
class Simulator {
 public:
  Simulator(SimulatorConfig cfg, ModelParams initial, ClientTrainer trainer, AlgorithmHook& hook);

  // Stops processing arrivals once `round_limit` global rounds have completed.
  StepResult step(std::int64_t round_limit = std::numeric_limits<std::int64_t>::max());

  const ServerState& state() const { return state_; }
  const SimulatorConfig& config() const { return cfg_; }
  DelayStats delay_stats() const;

  // Invoked after every global update, with the new model already installed.
  std::function<void(const ServerState&, const RoundRecord&)> on_round;

 private:
  void dispatch(double now);
  PendingTask pop_earliest();
  void collect_checkpoints();

  SimulatorConfig cfg_;
  ClientTrainer trainer_;
  AlgorithmHook& hook_;
  ServerState state_;
  RngStream dispatch_rng_;
  std::vector<double> fixed_runtime_;
};

DelayStats delay_stats(const ServerState& state);

}  // namespace fedecho

#endif  // FEDECHO_SIMULATOR_HPP
