#ifndef FEDECHO_RNG_HPP
#define FEDECHO_RNG_HPP

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace fedecho {

// Reproducible random stream identified by (seed, stream_id).
//
// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard. All conversions to floating point and integer ranges are done
// here rather than through <random> distributions, whose algorithms are
// implementation-defined, so draws are identical across toolchains.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  // Named substream of a root seed, e.g. named(seed, "runtimes", client).
  static RngStream named(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  // Child stream, independent of this one and of its siblings.
  RngStream split(std::uint64_t child) const;

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform01();

  // Uniform in [lo, hi); lo == hi returns lo. Throws ConfigError if lo > hi.
  double uniform(double lo, double hi);

  // Uniform integer in [0, n). Unbiased (rejection sampling).
  std::uint64_t uniform_index(std::uint64_t n);

  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Gamma(shape, 1) via Marsaglia-Tsang, with the u^(1/shape) boost for shape < 1.
  double gamma(double shape);

  // Dirichlet(concentration * 1_n).
  std::vector<double> dirichlet(double concentration, std::size_t n);

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
};

double draw_uniform(RngStream& rng, double lo, double hi);

// SplitMix64 finalizer; used to derive substream seeds.
std::uint64_t mix64(std::uint64_t x);

// 64-bit FNV-1a of a stream name.
std::uint64_t stream_hash(std::string_view name);

}  // namespace fedecho

#endif  // FEDECHO_RNG_HPP
