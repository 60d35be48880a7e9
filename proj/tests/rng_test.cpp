#include <algorithm>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "fedecho/rng.hpp"
#include "fedecho/tensor.hpp"

namespace fedecho {
namespace {

TEST(Rng, DegenerateIntervalReturnsBound) {
  RngStream rng(1, 0);
  EXPECT_EQ(draw_uniform(rng, 3.0, 3.0), 3.0);
}

TEST(Rng, InvertedIntervalThrows) {
  RngStream rng(1, 0);
  EXPECT_THROW(draw_uniform(rng, 2.0, 1.0), ConfigError);
}

TEST(Rng, UniformMean) {
  RngStream rng(42, 0);
  double sum = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) sum += rng.uniform01();
  EXPECT_NEAR(sum / n, 0.5, 0.003);
}

TEST(Rng, UniformStaysInRange) {
  RngStream rng(5, 0);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform(-2.0, 7.0);
    ASSERT_GE(u, -2.0);
    ASSERT_LT(u, 7.0);
  }
}

TEST(Rng, SameSeedSameStream) {
  RngStream a = RngStream::named(9, "runtimes", 4), b = RngStream::named(9, "runtimes", 4);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, NamesAndIndicesSeparateStreams) {
  RngStream a = RngStream::named(9, "runtimes", 0);
  RngStream b = RngStream::named(9, "runtimes", 1);
  RngStream c = RngStream::named(9, "dispatch", 0);
  const auto x = a.next_u64();
  EXPECT_NE(x, b.next_u64());
  EXPECT_NE(x, c.next_u64());
}

TEST(Rng, SplitIsReproducible) {
  RngStream root(7, 0);
  RngStream c1 = root.split(3), c2 = root.split(3), c3 = root.split(4);
  const auto x = c1.next_u64();
  EXPECT_EQ(x, c2.next_u64());
  EXPECT_NE(x, c3.next_u64());
}

TEST(Rng, UniformIndexCoversRange) {
  RngStream rng(2, 0);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 70000; ++i) ++hits[rng.uniform_index(7)];
  for (int h : hits) EXPECT_NEAR(h, 10000, 500);
}

TEST(Rng, NormalMoments) {
  RngStream rng(8, 0);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, GammaMean) {
  for (double shape : {0.1, 0.7, 1.0, 3.5}) {
    RngStream rng(13, 0);
    const int n = 200000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += rng.gamma(shape);
    EXPECT_NEAR(s / n, shape, 0.03 * std::max(1.0, shape)) << "shape " << shape;
  }
}

TEST(Rng, DirichletOnSimplex) {
  RngStream rng(4, 0);
  for (double c : {0.01, 0.1, 1.0, 100.0}) {
    const auto p = rng.dirichlet(c, 8);
    ASSERT_EQ(p.size(), 8u);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    for (double v : p) EXPECT_GE(v, 0.0);
  }
}

TEST(Rng, ShuffleIsPermutation) {
  RngStream rng(6, 0);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  rng.shuffle(std::span<int>(v));
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_FALSE(std::is_sorted(v.begin(), v.end()));
}

}  // namespace
}  // namespace fedecho
