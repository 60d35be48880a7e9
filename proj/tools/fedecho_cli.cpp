// fedecho: experiment runner for the asynchronous FL simulator.
//
//   fedecho run <config>
//   fedecho verify <kind> [--trials N] [--seed S]
//   fedecho sweep <config> --grid key=v1,v2 [--grid key=...]
//
// Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure,
// 4 verification failure.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedecho/config.hpp"
#include "fedecho/runner.hpp"
#include "fedecho/verify.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitVerify = 4;

int cmd_run(const std::string& config_path) {
  const fedecho::RunConfig cfg = fedecho::load_config(config_path);
  const auto dir = fedecho::resolve_output_dir(cfg.output_dir);
  const auto agg = fedecho::run_to_directory(cfg, dir);
  std::cout << "algorithm " << fedecho::to_string(cfg.algorithm) << ", " << agg.seeds.size()
            << " seed(s): final test accuracy " << agg.accuracy_mean;
  if (agg.seeds.size() > 1) std::cout << " +/- " << agg.accuracy_std;
  std::cout << "\nwrote " << dir.string() << "\n";
  return 0;
}

int cmd_verify(const std::string& kind_name, int trials, std::uint64_t seed) {
  const auto kind = fedecho::parse_verify_kind(kind_name);
  if (!kind) {
    std::cerr << "unknown verify kind '" << kind_name
              << "' (expected grad-fd, identity-linear, identity-generic, clip, entropy)\n";
    return kExitConfig;
  }
  const auto rep = fedecho::run_verify(*kind, trials, seed);
  std::printf("%s: %d trials, max error %.3e, threshold %.1e -> %s\n", fedecho::to_string(rep.kind).c_str(),
              rep.trials, rep.max_error, rep.threshold, rep.passed ? "PASS" : "FAIL");
  if (!rep.detail.empty()) std::printf("  %s\n", rep.detail.c_str());
  return rep.passed ? 0 : kExitVerify;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& grid_specs) {
  const auto tree = fedecho::read_config_file(config_path);
  const fedecho::RunConfig base = fedecho::build_config(tree);
  std::vector<fedecho::GridAxis> grid;
  for (const auto& spec : grid_specs) grid.push_back(fedecho::parse_grid_axis(spec));
  const auto dir = fedecho::resolve_output_dir(base.output_dir);
  const auto rows = fedecho::run_sweep(tree, grid, dir);
  for (const auto& r : rows) {
    std::cout << r.dir.filename().string();
    for (std::size_t i = 0; i < grid.size(); ++i) std::cout << "  " << grid[i].key << "=" << r.values[i];
    std::cout << "  accuracy " << r.result.accuracy_mean << "\n";
  }
  std::cout << "wrote " << (dir / "aggregate.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Asynchronous federated learning simulator with server-side distillation"};
  app.require_subcommand(1);

  std::string run_config;
  auto* run = app.add_subcommand("run", "run the experiment described by a config file");
  run->add_option("config", run_config, "config file")->required();

  std::string kind;
  int trials = 50;
  std::uint64_t seed = 0;
  auto* verify = app.add_subcommand("verify", "run a randomized verification suite");
  verify->add_option("kind", kind, "grad-fd | identity-linear | identity-generic | clip | entropy")->required();
  verify->add_option("--trials", trials, "number of random instances")->check(CLI::PositiveNumber);
  verify->add_option("--seed", seed, "seed for the random instances");

  std::string sweep_config;
  std::vector<std::string> grids;
  auto* sweep = app.add_subcommand("sweep", "run the cross product of override grids");
  sweep->add_option("config", sweep_config, "base config file")->required();
  sweep->add_option("--grid", grids, "key=v1,v2,... (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_config);
    if (*verify) return cmd_verify(kind, trials, seed);
    if (*sweep) return cmd_sweep(sweep_config, grids);
  } catch (const fedecho::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fedecho::NumericalError& e) {
    std::cerr << "numerical failure at round " << e.round() << ": " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitConfig;
}
