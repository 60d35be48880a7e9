#ifndef FEDECHO_DATA_HPP
#define FEDECHO_DATA_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "fedecho/model.hpp"
#include "fedecho/rng.hpp"

namespace fedecho {

// K isotropic Gaussian clusters in d dimensions. Class centers are drawn once
// from N(0, center_scale^2 I); samples add N(0, spread^2 I) noise.
struct GaussianMixture {
  int classes = 10;
  int dims = 20;
  double spread = 1.0;
  double center_scale = 1.0;
};

// Two interleaved planar spirals, labels {0, 1}.
struct TwoSpirals {
  double noise = 0.1;
};

enum class PoolMode {
  InDistribution,
  // Pool drawn with every class center offset by one spread unit along a fixed
  // direction, emulating an out-of-distribution distillation set.
  Shifted,
};

struct DatasetSpec {
  std::variant<GaussianMixture, TwoSpirals> kind = GaussianMixture{};
  Index n_train = 5000;
  Index n_test = 1000;
  Index n_unlabeled = 2000;
  std::uint64_t seed = 0;
  PoolMode pool = PoolMode::InDistribution;

  int classes() const;
  int dims() const;
  void validate() const;
};

struct Dataset {
  Batch train;
  Batch test;
  DenseMatrix unlabeled;
  int classes = 0;
};

Dataset generate(const DatasetSpec& spec);

struct Partition {
  std::vector<std::vector<Index>> client_indices;

  std::size_t clients() const { return client_indices.size(); }
  std::vector<std::size_t> sizes() const;
};

// Per-class Dirichlet split: each class's (shuffled) samples are cut across
// clients at the cumulative quantiles of p ~ Dir(alpha_dir 1_N). Empty clients
// are then filled by moving one sample from the currently largest client.
Partition dirichlet_partition(std::span<const int> labels, int clients, double alpha_dir,
                              RngStream& rng);

// Flat little-endian binary: "FEDD" magic, u32 version, then u32 d, K,
// n_train, n_test, n_unlabeled, followed by train features (f64), train
// labels (u32), test features, test labels, unlabeled features.
void write_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& path);

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

}  // namespace fedecho

#endif  // FEDECHO_DATA_HPP
