#include "fedecho/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace fedecho {

std::string to_string(RuntimeCategory c) {
  switch (c) {
    case RuntimeCategory::Short:
      return "short";
    case RuntimeCategory::Medium:
      return "medium";
    case RuntimeCategory::Long:
      return "long";
  }
  return "unknown";
}

DelayProfile DelayProfile::large() { return DelayProfile{}; }

DelayProfile DelayProfile::mild() {
  DelayProfile p;
  p.long_tier = {10.0, 20.0};
  return p;
}

const Interval& DelayProfile::tier(RuntimeCategory c) const {
  switch (c) {
    case RuntimeCategory::Short:
      return short_tier;
    case RuntimeCategory::Medium:
      return medium_tier;
    case RuntimeCategory::Long:
      return long_tier;
  }
  throw ConfigError("unknown runtime category");
}

void DelayProfile::validate() const {
  for (const Interval* t : {&short_tier, &medium_tier, &long_tier}) {
    if (!(t->lo <= t->hi) || !(t->lo > 0.0)) {
      throw ConfigError("delay: every tier needs 0 < lo <= hi");
    }
  }
  if (!(unit_seconds > 0.0)) throw ConfigError("delay.unit_seconds: must be positive");
  if (!(gamma >= 0.0)) throw ConfigError("delay.gamma: must be non-negative");
  if (!(max_long_fraction > 0.0 && max_long_fraction <= 1.0)) {
    throw ConfigError("delay.max_long_fraction: must lie in (0, 1]");
  }
  if (!(medium_fraction >= 0.0 && medium_fraction <= 1.0)) {
    throw ConfigError("delay.medium_fraction: must lie in [0, 1]");
  }
}

std::vector<RuntimeCategory> assign_categories(std::span<const std::size_t> sample_counts,
                                               const DelayProfile& profile, RngStream& rng) {
  profile.validate();
  const std::size_t n = sample_counts.size();
  std::vector<RuntimeCategory> out(n, RuntimeCategory::Short);
  if (n == 0) return out;

  const double weight = std::isinf(profile.gamma) ? 0.0 : 1.0 / (1.0 + profile.gamma);
  std::vector<double> score(n);
  for (std::size_t i = 0; i < n; ++i) {
    double below = 0.0, tied = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (sample_counts[j] < sample_counts[i]) below += 1.0;
      if (sample_counts[j] == sample_counts[i]) tied += 1.0;
    }
    const double rank = n > 1 ? (below + 0.5 * tied) / static_cast<double>(n - 1) : 0.5;
    score[i] = weight * rank + (1.0 - weight) * rng.uniform01();
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });

  const auto n_long = static_cast<std::size_t>(
      std::floor(profile.max_long_fraction * static_cast<double>(n) + 1e-9));
  const auto n_medium = static_cast<std::size_t>(
      std::lround(profile.medium_fraction * static_cast<double>(n - n_long)));
  for (std::size_t k = 0; k < n; ++k) {
    if (k < n_long) {
      out[order[k]] = RuntimeCategory::Long;
    } else if (k < n_long + n_medium) {
      out[order[k]] = RuntimeCategory::Medium;
    }
  }
  return out;
}

double sample_runtime(RuntimeCategory category, const DelayProfile& profile, RngStream& rng) {
  const Interval& t = profile.tier(category);
  return rng.uniform(t.lo, t.hi) * profile.unit_seconds;
}

void SimulatorConfig::validate() const {
  if (clients < 1) throw ConfigError("run.clients: need at least one client");
  if (buffer_size < 1) throw ConfigError("run.buffer: must be at least 1");
  if (!(buffer_size <= concurrency && concurrency <= clients)) {
    throw ConfigError("run: require buffer <= concurrency <= clients");
  }
  if (categories.size() != static_cast<std::size_t>(clients)) {
    throw ConfigError("simulator: need one runtime category per client");
  }
  delay.validate();
}

std::size_t ServerState::active_count() const {
  return static_cast<std::size_t>(std::count(active.begin(), active.end(), true));
}

namespace {

bool later(const PendingTask& a, const PendingTask& b) {
  if (a.finish_time != b.finish_time) return a.finish_time > b.finish_time;
  return a.client_id > b.client_id;
}

}  // namespace

Simulator::Simulator(SimulatorConfig cfg, ModelParams initial, ClientTrainer trainer,
                     AlgorithmHook& hook)
    : cfg_(std::move(cfg)),
      trainer_(std::move(trainer)),
      hook_(hook),
      dispatch_rng_(RngStream::named(cfg_.seed, "dispatch")) {
  cfg_.validate();
  state_.global = std::move(initial);
  state_.active.assign(static_cast<std::size_t>(cfg_.clients), false);
  if (cfg_.runtime_mode == RuntimeMode::PerClient) {
    fixed_runtime_.resize(static_cast<std::size_t>(cfg_.clients));
    for (int c = 0; c < cfg_.clients; ++c) {
      RngStream rng = RngStream::named(cfg_.seed, "runtimes-client", static_cast<std::uint64_t>(c));
      fixed_runtime_[static_cast<std::size_t>(c)] =
          sample_runtime(cfg_.categories[static_cast<std::size_t>(c)], cfg_.delay, rng);
    }
  }
  for (int i = 0; i < cfg_.concurrency; ++i) dispatch(0.0);
}

void Simulator::dispatch(double now) {
  std::vector<int> idle;
  for (int c = 0; c < cfg_.clients; ++c) {
    if (!state_.active[static_cast<std::size_t>(c)]) idle.push_back(c);
  }
  if (idle.empty()) throw std::logic_error("dispatch with no idle client");
  const int client = idle[static_cast<std::size_t>(dispatch_rng_.uniform_index(idle.size()))];

  PendingTask task;
  task.client_id = client;
  task.dispatch_round = state_.round;
  task.dispatch_time = now;
  task.serial = state_.dispatches++;
  double runtime;
  if (cfg_.runtime_mode == RuntimeMode::PerClient) {
    runtime = fixed_runtime_[static_cast<std::size_t>(client)];
  } else {
    RngStream rng = RngStream::named(cfg_.seed, "runtimes", task.serial);
    runtime = sample_runtime(cfg_.categories[static_cast<std::size_t>(client)], cfg_.delay, rng);
  }
  task.finish_time = now + runtime;

  state_.active[static_cast<std::size_t>(client)] = true;
  state_.checkpoints.try_emplace(state_.round, state_.global);
  state_.max_checkpoints = std::max(state_.max_checkpoints, state_.checkpoints.size());
  state_.pending.push_back(task);
  std::push_heap(state_.pending.begin(), state_.pending.end(), later);
}

PendingTask Simulator::pop_earliest() {
  std::pop_heap(state_.pending.begin(), state_.pending.end(), later);
  PendingTask t = state_.pending.back();
  state_.pending.pop_back();
  return t;
}

void Simulator::collect_checkpoints() {
  std::set<std::int64_t> referenced;
  for (const auto& t : state_.pending) referenced.insert(t.dispatch_round);
  std::erase_if(state_.checkpoints,
                [&](const auto& kv) { return !referenced.contains(kv.first); });
}

StepResult Simulator::step(std::int64_t round_limit) {
  StepResult result;
  if (state_.pending.empty()) {
    result.complete = true;
    return result;
  }
  const double now = state_.pending.front().finish_time;
  state_.clock = now;

  int finished = 0;
  while (!state_.pending.empty() && state_.pending.front().finish_time == now &&
         state_.round < round_limit) {
    const PendingTask task = pop_earliest();
    state_.active[static_cast<std::size_t>(task.client_id)] = false;
    ++finished;

    auto it = state_.checkpoints.find(task.dispatch_round);
    if (it == state_.checkpoints.end()) {
      throw std::logic_error("checkpoint for round " + std::to_string(task.dispatch_round) +
                             " was collected while still referenced");
    }
    const ModelParams& dispatched = it->second;

    ClientUpdate update;
    update.client_id = task.client_id;
    update.dispatch_round = task.dispatch_round;
    update.delta = trainer_(task.client_id, dispatched, task.serial);
    if (update.delta.size() != dispatched.theta.size()) {
      throw std::logic_error("client delta has the wrong length");
    }
    hook_.on_arrival(update, dispatched);

    const std::int64_t tau = state_.round - task.dispatch_round;
    state_.taus.push_back(tau);

    EventRecord ev;
    ev.index = state_.events++;
    ev.clock = now;
    ev.client = task.client_id;
    ev.tau = tau;
    ev.round = state_.round;
    state_.buffer.push_back(std::move(update));
    ev.buffer_fill = static_cast<int>(state_.buffer.size());

    if (static_cast<int>(state_.buffer.size()) == cfg_.buffer_size) {
      ev.global_update = true;
      RoundOutcome outcome = hook_.aggregate(state_.global, state_.buffer, state_.round);
      if (!all_finite(outcome.model.theta)) {
        throw NumericalError("global model became non-finite", state_.round + 1);
      }
      std::int64_t max_tau = 0;
      for (const auto& u : state_.buffer) max_tau = std::max(max_tau, state_.round - u.dispatch_round);
      state_.global = std::move(outcome.model);
      state_.buffer.clear();
      ++state_.round;
      state_.round_max_tau.push_back(max_tau);

      RoundRecord rr;
      rr.round = state_.round;
      rr.clock = now;
      rr.max_tau = max_tau;
      rr.mean_alpha = outcome.mean_alpha;
      rr.mean_entropy = outcome.mean_entropy;
      rr.distill_skipped = outcome.distill_skipped;
      if (on_round) on_round(state_, rr);
      result.rounds.push_back(rr);
    }
    result.events.push_back(ev);
  }

  collect_checkpoints();
  for (int i = 0; i < finished; ++i) dispatch(now);
  for (auto& ev : result.events) {
    ev.active = state_.active_count();
    ev.checkpoints = state_.checkpoints.size();
  }
  return result;
}

DelayStats delay_stats(const ServerState& state) {
  DelayStats s;
  if (!state.taus.empty()) s.tau_max = *std::max_element(state.taus.begin(), state.taus.end());
  if (!state.round_max_tau.empty()) {
    double sum = 0.0;
    for (auto t : state.round_max_tau) sum += static_cast<double>(t);
    s.tau_avg = sum / static_cast<double>(state.round_max_tau.size());
  }
  return s;
}

DelayStats Simulator::delay_stats() const { return fedecho::delay_stats(state_); }

}  // namespace fedecho
