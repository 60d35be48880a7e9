#include "fedecho/runner.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "fedecho/algorithms.hpp"
#include "fedecho/data.hpp"

namespace fedecho {
namespace {

using nlohmann::json;

std::string fmt_double(double x) {
  if (std::isnan(x)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

json num_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << text;
}

json run_metadata(const RunConfig& cfg) {
  std::ostringstream tier;
  tier << "score = w*midrank(sample_count) + (1-w)*U(0,1), w = 1/(1+gamma), gamma = "
       << cfg.delay.gamma << "; top floor(" << cfg.delay.max_long_fraction
       << "*N) long, next round(" << cfg.delay.medium_fraction << "*rest) medium";
  return {
      {"dirichlet_scheme", "per-class proportions, cumulative-quantile split, empty clients "
                           "repaired from the largest"},
      {"runtime_tier_map", tier.str()},
      {"runtime_mode", cfg.runtime_mode == RuntimeMode::PerClient ? "per_client" : "per_dispatch"},
      {"alpha_schedule", cfg.distill.fixed_alpha ? "fixed" : "recomputed per distillation batch"},
      {"teacher_ensemble", "mean of raw logits over clients with a cached slot"},
      {"teacher_refresh", "only when the client delivers a new update"},
      {"replacement_dispatch", "after the instant's arrivals and global updates"},
  };
}

json stats_json(const RunStats& s) {
  return {
      {"final_test_accuracy", s.final_accuracy},
      {"final_test_loss", s.final_loss},
      {"final_clock", s.final_clock},
      {"rounds", s.rounds},
      {"events", s.events},
      {"tau_max", s.tau_max},
      {"tau_avg", s.tau_avg},
      {"max_checkpoints", s.max_checkpoints},
      {"distill_skipped_rounds", s.distill_skipped},
      {"mean_alpha", num_or_null(s.mean_alpha)},
      {"runtime_categories",
       {{"short", s.category_counts[0]}, {"medium", s.category_counts[1]}, {"long", s.category_counts[2]}}},
  };
}

json config_json(const RunConfig& cfg) {
  json c = json::object();
  for (const auto& [k, v] : cfg.entries) c[k] = v;
  return c;
}

Dataset load_dataset(const RunConfig& cfg, std::uint64_t seed) {
  if (cfg.dataset_file) return read_dataset(*cfg.dataset_file);
  DatasetSpec spec = cfg.dataset;
  spec.seed = seed;
  return generate(spec);
}

}  // namespace

ExperimentResult run_experiment(const RunConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const Dataset data = load_dataset(cfg, seed);
  const Architecture arch = cfg.architecture(static_cast<int>(data.train.inputs.cols()), data.classes);

  RngStream partition_rng = RngStream::named(seed, "partition");
  const Partition partition = dirichlet_partition(data.train.labels, cfg.clients, cfg.alpha_dir, partition_rng);
  std::vector<Batch> shards;
  shards.reserve(partition.clients());
  for (const auto& idx : partition.client_indices) shards.push_back(data.train.subset(idx));

  RngStream category_rng = RngStream::named(seed, "categories");
  const auto sizes = partition.sizes();
  SimulatorConfig sim_cfg;
  sim_cfg.clients = cfg.clients;
  sim_cfg.concurrency = cfg.concurrency;
  sim_cfg.buffer_size = cfg.buffer;
  sim_cfg.delay = cfg.delay;
  sim_cfg.runtime_mode = cfg.runtime_mode;
  sim_cfg.categories = assign_categories(sizes, cfg.delay, category_rng);
  sim_cfg.seed = seed;

  RngStream init_rng = RngStream::named(seed, "init");
  ModelParams initial = init_params(arch, init_rng);

  std::unique_ptr<AlgorithmHook> hook;
  FedEchoServer* fedecho = nullptr;
  switch (cfg.algorithm) {
    case AlgorithmKind::FedBuff:
      hook = std::make_unique<FedBuffServer>(cfg.eta);
      break;
    case AlgorithmKind::FedEcho: {
      auto s = std::make_unique<FedEchoServer>(cfg.eta, cfg.distill, data.unlabeled,
                                               static_cast<std::size_t>(cfg.clients), seed);
      fedecho = s.get();
      hook = std::move(s);
      break;
    }
    case AlgorithmKind::Adaptive:
      hook = std::make_unique<AdaptiveServer>(cfg.adaptive);
      break;
  }

  const LocalConfig local = cfg.local;
  ClientTrainer trainer = [&shards, local, seed](int client, const ModelParams& dispatched,
                                                 std::uint64_t serial) {
    RngStream rng = RngStream::named(seed, "local-batches", serial);
    return local_sgd(dispatched, shards[static_cast<std::size_t>(client)], local, rng);
  };

  ExperimentResult result;
  result.seed = seed;
  Simulator sim(sim_cfg, std::move(initial), trainer, *hook);

  double alpha_sum = 0.0;
  int alpha_rounds = 0;
  std::int64_t tau_so_far = 0;
  sim.on_round = [&](const ServerState& st, const RoundRecord& rr) {
    tau_so_far = std::max(tau_so_far, rr.max_tau);
    if (!std::isnan(rr.mean_alpha)) {
      alpha_sum += rr.mean_alpha;
      ++alpha_rounds;
    }
    if (rr.round % cfg.eval_every != 0 && rr.round != cfg.rounds) return;
    const Evaluation ev = evaluate(st.global, data.test);
    MetricsRecord m;
    m.round = rr.round;
    m.clock = rr.clock;
    m.test_accuracy = ev.accuracy;
    m.test_loss = ev.mean_loss;
    m.train_grad_norm = ce_loss_and_grad(st.global, data.train).grad.norm();
    m.tau_max = tau_so_far;
    m.round_tau = rr.max_tau;
    m.alpha_mean = rr.mean_alpha;
    m.entropy_mean = rr.mean_entropy;
    m.buffer_events = st.events;
    m.checkpoints = st.checkpoints.size();
    result.metrics.push_back(m);
  };

  while (sim.state().round < cfg.rounds) {
    StepResult step = sim.step(cfg.rounds);
    if (step.complete) break;
    for (auto& e : step.events) result.events.push_back(e);
  }

  const ServerState& st = sim.state();
  const Evaluation final_eval = evaluate(st.global, data.test);
  const DelayStats ds = sim.delay_stats();
  RunStats& s = result.stats;
  s.final_accuracy = final_eval.accuracy;
  s.final_loss = final_eval.mean_loss;
  s.final_clock = st.clock;
  s.rounds = st.round;
  s.tau_max = ds.tau_max;
  s.tau_avg = ds.tau_avg;
  s.events = st.events;
  s.max_checkpoints = st.max_checkpoints;
  s.distill_skipped = fedecho ? fedecho->skipped_rounds() : 0;
  s.mean_alpha = alpha_rounds > 0 ? alpha_sum / alpha_rounds : std::numeric_limits<double>::quiet_NaN();
  for (auto c : sim_cfg.categories) ++s.category_counts[static_cast<std::size_t>(c)];
  result.final_model = st.global;
  return result;
}

std::filesystem::path resolve_output_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  if (p.is_relative()) {
    if (const char* root = std::getenv("FEDECHO_OUTPUT_ROOT"); root && *root) {
      return std::filesystem::path(root) / p;
    }
  }
  return p;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& rows) {
  std::ostringstream os;
  os << "round,clock,test_accuracy,test_loss,train_grad_norm,tau_max,round_tau,alpha_mean,"
        "entropy_mean,buffer_events,checkpoints\r\n";
  for (const auto& r : rows) {
    os << r.round << ',' << fmt_double(r.clock) << ',' << fmt_double(r.test_accuracy) << ','
       << fmt_double(r.test_loss) << ',' << fmt_double(r.train_grad_norm) << ',' << r.tau_max << ','
       << r.round_tau << ',' << fmt_double(r.alpha_mean) << ',' << fmt_double(r.entropy_mean) << ','
       << r.buffer_events << ',' << r.checkpoints << "\r\n";
  }
  write_text(path, os.str());
}

void write_events_csv(const std::filesystem::path& path, const std::vector<EventRecord>& rows) {
  std::ostringstream os;
  os << "event,clock,client,tau,buffer_fill,round,global_update,active,checkpoints\r\n";
  for (const auto& e : rows) {
    os << e.index << ',' << fmt_double(e.clock) << ',' << e.client << ',' << e.tau << ','
       << e.buffer_fill << ',' << e.round << ',' << (e.global_update ? 1 : 0) << ',' << e.active
       << ',' << e.checkpoints << "\r\n";
  }
  write_text(path, os.str());
}

namespace {

void write_seed_outputs(const RunConfig& cfg, const ExperimentResult& r,
                        const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_metrics_csv(dir / "metrics.csv", r.metrics);
  write_events_csv(dir / "events.csv", r.events);
  if (cfg.export_dataset && !cfg.dataset_file) {
    DatasetSpec spec = cfg.dataset;
    spec.seed = r.seed;
    write_dataset(dir / "dataset.bin", generate(spec));
  }
  json summary = {
      {"schema_version", kSummarySchemaVersion},
      {"code_version", kCodeVersion},
      {"algorithm", to_string(cfg.algorithm)},
      {"seed", r.seed},
      {"stats", stats_json(r.stats)},
      {"metadata", run_metadata(cfg)},
      {"config", config_json(cfg)},
  };
  write_text(dir / "summary.json", summary.dump(2) + "\n");
}

SeedAggregate aggregate(std::vector<std::uint64_t> seeds, std::vector<RunStats> stats) {
  SeedAggregate a;
  a.seeds = std::move(seeds);
  a.per_seed = std::move(stats);
  const double n = static_cast<double>(a.per_seed.size());
  for (const auto& s : a.per_seed) a.accuracy_mean += s.final_accuracy;
  a.accuracy_mean /= n;
  if (a.per_seed.size() > 1) {
    double ss = 0.0;
    for (const auto& s : a.per_seed) ss += (s.final_accuracy - a.accuracy_mean) * (s.final_accuracy - a.accuracy_mean);
    a.accuracy_std = std::sqrt(ss / (n - 1.0));
  }
  return a;
}

}  // namespace

SeedAggregate run_to_directory(const RunConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  if (cfg.seeds.empty()) {
    const ExperimentResult r = run_experiment(cfg, cfg.seed);
    write_seed_outputs(cfg, r, dir);
    return aggregate({cfg.seed}, {r.stats});
  }
  std::vector<RunStats> stats;
  json per_seed = json::array();
  for (auto seed : cfg.seeds) {
    const ExperimentResult r = run_experiment(cfg, seed);
    write_seed_outputs(cfg, r, dir / ("seed_" + std::to_string(seed)));
    stats.push_back(r.stats);
    json entry = stats_json(r.stats);
    entry["seed"] = seed;
    per_seed.push_back(entry);
  }
  SeedAggregate a = aggregate(cfg.seeds, stats);
  double tau_max = 0.0, tau_avg = 0.0;
  for (const auto& s : stats) {
    tau_max = std::max(tau_max, static_cast<double>(s.tau_max));
    tau_avg += s.tau_avg / static_cast<double>(stats.size());
  }
  json summary = {
      {"schema_version", kSummarySchemaVersion},
      {"code_version", kCodeVersion},
      {"algorithm", to_string(cfg.algorithm)},
      {"seeds", cfg.seeds},
      {"final_test_accuracy", {{"mean", a.accuracy_mean}, {"std", a.accuracy_std}}},
      {"tau_max", tau_max},
      {"tau_avg_mean", tau_avg},
      {"per_seed", per_seed},
      {"metadata", run_metadata(cfg)},
      {"config", config_json(cfg)},
  };
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  return a;
}

GridAxis parse_grid_axis(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("grid '" + spec + "': expected key=v1,v2,...");
  }
  GridAxis axis;
  axis.key = spec.substr(0, eq);
  std::stringstream ss(spec.substr(eq + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) axis.values.push_back(item);
  }
  if (axis.values.empty()) throw ConfigError("grid '" + spec + "': no values");
  return axis;
}

std::vector<SweepRow> run_sweep(const boost::property_tree::ptree& base,
                                const std::vector<GridAxis>& grid,
                                const std::filesystem::path& dir, unsigned workers) {
  // Expand and validate every combination before running anything.
  std::vector<std::vector<std::string>> combos{{}};
  for (const auto& axis : grid) {
    std::vector<std::vector<std::string>> next;
    for (const auto& prefix : combos) {
      for (const auto& v : axis.values) {
        auto c = prefix;
        c.push_back(v);
        next.push_back(std::move(c));
      }
    }
    combos = std::move(next);
  }
  std::vector<SweepRow> rows(combos.size());
  std::vector<RunConfig> configs;
  for (std::size_t i = 0; i < combos.size(); ++i) {
    auto tree = base;
    for (std::size_t a = 0; a < grid.size(); ++a) apply_override(tree, grid[a].key, combos[i][a]);
    configs.push_back(build_config(tree));
    char name[32];
    std::snprintf(name, sizeof name, "run_%03zu", i);
    rows[i].values = combos[i];
    rows[i].dir = dir / name;
  }

  std::filesystem::create_directories(dir);
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(rows.size()));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < rows.size(); i = next++) {
      try {
        rows[i].result = run_to_directory(configs[i], rows[i].dir);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);

  std::ostringstream os;
  os << "run";
  for (const auto& axis : grid) os << ',' << csv_field(axis.key);
  os << ",final_accuracy_mean,final_accuracy_std,tau_max,tau_avg,mean_alpha\r\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    os << csv_field(r.dir.filename().string());
    for (const auto& v : r.values) os << ',' << csv_field(v);
    std::int64_t tau_max = 0;
    double tau_avg = 0.0, alpha = 0.0;
    for (const auto& s : r.result.per_seed) {
      tau_max = std::max(tau_max, s.tau_max);
      tau_avg += s.tau_avg / static_cast<double>(r.result.per_seed.size());
      alpha += s.mean_alpha / static_cast<double>(r.result.per_seed.size());
    }
    os << ',' << fmt_double(r.result.accuracy_mean) << ',' << fmt_double(r.result.accuracy_std) << ','
       << tau_max << ',' << fmt_double(tau_avg) << ',' << fmt_double(alpha) << "\r\n";
  }
  write_text(dir / "aggregate.csv", os.str());
  return rows;
}

}  // namespace fedecho
