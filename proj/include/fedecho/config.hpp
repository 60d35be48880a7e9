#ifndef FEDECHO_CONFIG_HPP
#define FEDECHO_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>

#include "fedecho/algorithms.hpp"
#include "fedecho/data.hpp"
#include "fedecho/distill.hpp"
#include "fedecho/simulator.hpp"

namespace fedecho {

enum class AlgorithmKind { FedEcho, FedBuff, Adaptive };

std::string to_string(AlgorithmKind k);

// Everything needed to reproduce one experiment. Loaded from an INI-style
// file ("key = value" under [section] headers); see config_keys() for the
// accepted keys and their defaults.
struct RunConfig {
  DatasetSpec dataset;
  std::optional<std::filesystem::path> dataset_file;
  double alpha_dir = 0.1;

  ArchKind model = ArchKind::LinearSoftmax;
  int hidden = 32;

  int clients = 50;
  int concurrency = 25;
  int buffer = 5;
  std::int64_t rounds = 200;
  int eval_every = 10;

  LocalConfig local;
  AlgorithmKind algorithm = AlgorithmKind::FedEcho;
  double eta = 1.0;
  AdaptiveConfig adaptive;
  DistillConfig distill;

  std::string delay_name = "large";
  DelayProfile delay = DelayProfile::large();
  RuntimeMode runtime_mode = RuntimeMode::PerDispatch;

  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds;  // multi-seed run when non-empty
  std::string output_dir = "out";
  bool export_dataset = true;

  // Resolved "section.key" -> value strings, defaults included.
  std::map<std::string, std::string> entries;

  Architecture architecture(int dims, int classes) const;
  void validate() const;
};

struct ConfigKey {
  std::string name;           // "section.key"
  std::string default_value;  // empty: unset
  std::string help;
};

const std::vector<ConfigKey>& config_keys();

// Parses INI text; unknown sections or keys are configuration errors.
boost::property_tree::ptree parse_config_text(const std::string& text);
boost::property_tree::ptree read_config_file(const std::filesystem::path& path);

// Sets "section.key" to value; throws ConfigError for unknown keys.
void apply_override(boost::property_tree::ptree& tree, const std::string& key,
                    const std::string& value);

// Converts and validates. Errors name the offending field.
RunConfig build_config(const boost::property_tree::ptree& tree);

RunConfig load_config(const std::filesystem::path& path);

}  // namespace fedecho

#endif  // FEDECHO_CONFIG_HPP
