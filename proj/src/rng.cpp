#include "fedecho/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "fedecho/tensor.hpp"

namespace fedecho {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_hash(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(mix64(mix64(seed) ^ mix64(~stream_id))) {}

RngStream RngStream::named(std::uint64_t seed, std::string_view name, std::uint64_t index) {
  return RngStream(seed, mix64(stream_hash(name) ^ mix64(index)));
}

RngStream RngStream::split(std::uint64_t child) const {
  return RngStream(seed_, mix64(stream_id_ + mix64(child + 0x632be59bd9b4e019ULL)));
}

std::uint64_t RngStream::next_u64() { return engine_(); }

double RngStream::uniform01() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  if (!(lo <= hi)) {
    throw ConfigError("uniform: lower bound " + std::to_string(lo) + " exceeds upper bound " +
                      std::to_string(hi));
  }
  if (lo == hi) return lo;
  double v = lo + (hi - lo) * uniform01();
  if (v >= hi) v = std::nextafter(hi, lo);
  return v;
}

std::uint64_t RngStream::uniform_index(std::uint64_t n) {
  if (n == 0) throw ConfigError("uniform_index: empty range");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double RngStream::normal() {
  // Box-Muller, one output per pair; u1 in (0, 1].
  const double u1 = 1.0 - uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RngStream::gamma(double shape) {
  if (!(shape > 0.0)) throw ConfigError("gamma: shape must be positive");
  if (shape < 1.0) {
    const double g = gamma(shape + 1.0);
    const double u = 1.0 - uniform01();
    return g * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = 1.0 - uniform01();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::vector<double> RngStream::dirichlet(double concentration, std::size_t n) {
  std::vector<double> p(n);
  double total = 0.0;
  for (auto& x : p) {
    x = gamma(concentration);
    total += x;
  }
  if (total > 0.0) {
    for (auto& x : p) x /= total;
  } else {
    // Every gamma draw underflowed; the limit is a point mass on one coordinate.
    p[static_cast<std::size_t>(uniform_index(n))] = 1.0;
  }
  return p;
}

double draw_uniform(RngStream& rng, double lo, double hi) { return rng.uniform(lo, hi); }

}  // namespace fedecho
