#ifndef FEDECHO_RUNNER_HPP
#define FEDECHO_RUNNER_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <boost/property_tree/ptree.hpp>

#include "fedecho/config.hpp"
#include "fedecho/simulator.hpp"

namespace fedecho {

inline constexpr const char* kCodeVersion = "0.3.0";
inline constexpr int kSummarySchemaVersion = 1;

struct MetricsRecord {
  std::int64_t round = 0;
  double clock = 0.0;
  double test_accuracy = 0.0;
  double test_loss = 0.0;
  double train_grad_norm = 0.0;
  std::int64_t tau_max = 0;    // so far
  std::int64_t round_tau = 0;  // max delay inside this round
  double alpha_mean = 0.0;     // NaN when no distillation ran
  double entropy_mean = 0.0;
  std::uint64_t buffer_events = 0;  // updates received so far
  std::size_t checkpoints = 0;
};

struct RunStats {
  double final_accuracy = 0.0;
  double final_loss = 0.0;
  double final_clock = 0.0;
  std::int64_t rounds = 0;
  std::int64_t tau_max = 0;
  double tau_avg = 0.0;
  std::uint64_t events = 0;
  std::size_t max_checkpoints = 0;
  int distill_skipped = 0;
  double mean_alpha = 0.0;  // over rounds that distilled; NaN otherwise
  std::array<int, 3> category_counts{};  // short, medium, long
};

struct ExperimentResult {
  std::uint64_t seed = 0;
  std::vector<MetricsRecord> metrics;
  std::vector<EventRecord> events;
  RunStats stats;
  ModelParams final_model;
};

// Runs one seed end to end in memory. Throws NumericalError if the global
// model stops being finite.
ExperimentResult run_experiment(const RunConfig& cfg, std::uint64_t seed);

// Resolves run.output_dir against $FEDECHO_OUTPUT_ROOT when that is set and
// the directory is relative.
std::filesystem::path resolve_output_dir(const std::string& dir);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& rows);
void write_events_csv(const std::filesystem::path& path, const std::vector<EventRecord>& rows);

struct SeedAggregate {
  std::vector<RunStats> per_seed;
  std::vector<std::uint64_t> seeds;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;  // sample standard deviation, 0 for one seed
};

// Executes the configured seed(s) and writes metrics.csv, events.csv,
// summary.json (and dataset.bin) into `dir`. Multi-seed configs write one
// seed_<s>/ subdirectory per seed and an aggregate summary.json in `dir`.
SeedAggregate run_to_directory(const RunConfig& cfg, const std::filesystem::path& dir);

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

// Parses "key=v1,v2,...".
GridAxis parse_grid_axis(const std::string& spec);

struct SweepRow {
  std::vector<std::string> values;  // one per axis
  std::filesystem::path dir;
  SeedAggregate result;
};

// Cross product of the axes over a base config, one run directory per
// combination under `dir`, plus aggregate.csv. An empty grid runs the base.
std::vector<SweepRow> run_sweep(const boost::property_tree::ptree& base,
                                const std::vector<GridAxis>& grid,
                                const std::filesystem::path& dir, unsigned workers = 0);

}  // namespace fedecho

#endif  // FEDECHO_RUNNER_HPP
