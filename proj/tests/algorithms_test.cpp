#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "fedecho/algorithms.hpp"

namespace fedecho {
namespace {

DenseMatrix random_matrix(RngStream& rng, Index r, Index c) {
  DenseMatrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

ModelParams random_model(const Architecture& arch, RngStream& rng) {
  DenseVector theta(arch.parameter_count());
  for (Index i = 0; i < theta.size(); ++i) theta(i) = rng.normal();
  return {arch, theta};
}

ClientUpdate update(int client, DenseVector delta, std::int64_t round = 0) {
  return {client, std::move(delta), round};
}

// Plain softmax-regression gradient written out per sample.
DenseVector naive_linear_grad(const DenseVector& w, const DenseMatrix& a, const std::vector<int>& y,
                              std::span<const Index> rows, Index k) {
  const Index d = a.cols();
  DenseVector g = DenseVector::Zero(d * k);
  for (Index r : rows) {
    std::vector<double> z(static_cast<std::size_t>(k), 0.0);
    double peak = -1e300;
    for (Index c = 0; c < k; ++c) {
      for (Index i = 0; i < d; ++i) z[c] += a(r, i) * w(i * k + c);
      peak = std::max(peak, z[c]);
    }
    double denom = 0.0;
    for (double v : z) denom += std::exp(v - peak);
    for (Index c = 0; c < k; ++c) {
      const double q = std::exp(z[c] - peak) / denom - (c == y[r] ? 1.0 : 0.0);
      for (Index i = 0; i < d; ++i) g(i * k + c) += a(r, i) * q;
    }
  }
  return g / static_cast<double>(rows.size());
}

TEST(LocalSgd, ZeroRateGivesZeroDelta) {
  RngStream rng(1, 0);
  const ModelParams m = random_model(Architecture::linear(3, 2), rng);
  Batch shard{random_matrix(rng, 10, 3), std::vector<int>(10, 1)};
  LocalConfig cfg;
  cfg.eta_l = 0.0;
  EXPECT_EQ(local_sgd(m, shard, cfg, rng), DenseVector::Zero(6));
}

TEST(LocalSgd, SingleFullBatchStepIsNegativeScaledGradient) {
  RngStream rng(2, 0);
  const ModelParams m = random_model(Architecture::linear(3, 2), rng);
  Batch shard{random_matrix(rng, 4, 3), {0, 1, 1, 0}};
  LocalConfig cfg;
  cfg.eta_l = 0.1;
  cfg.work = LocalWork::Steps;
  cfg.amount = 1;
  cfg.batch = 4;
  cfg.weight_decay = 0.0;
  const DenseVector delta = local_sgd(m, shard, cfg, rng);
  EXPECT_LT((delta + 0.1 * ce_loss_and_grad(m, shard).grad).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(LocalSgd, HandSteppedEpochs) {
  RngStream rng(3, 0);
  const Index d = 2, k = 3;
  const ModelParams m = random_model(Architecture::linear(d, k), rng);
  Batch shard{random_matrix(rng, 4, d), {0, 2, 1, 2}};
  LocalConfig cfg;
  cfg.eta_l = 0.2;
  cfg.amount = 2;
  cfg.batch = 2;
  cfg.weight_decay = 0.01;

  RngStream mirror = rng;
  DenseVector w = m.theta;
  std::vector<Index> order{0, 1, 2, 3};
  for (int e = 0; e < 2; ++e) {
    mirror.shuffle(std::span<Index>(order));
    for (Index start = 0; start < 4; start += 2) {
      const std::span<const Index> rows(order.data() + start, 2);
      w -= 0.2 * (naive_linear_grad(w, shard.inputs, shard.labels, rows, k) + 0.01 * w);
    }
  }

  DenseVector final_theta;
  const DenseVector delta = local_sgd(m, shard, cfg, rng, &final_theta);
  EXPECT_LT((final_theta - w).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(final_theta, m.theta + delta);
}

TEST(LocalSgd, StepsModeCountsSteps) {
  RngStream rng(4, 0);
  const ModelParams m(Architecture::linear(1, 2));
  DenseMatrix a = DenseMatrix::Ones(3, 1);
  Batch shard{a, {1, 1, 1}};
  LocalConfig cfg;
  cfg.work = LocalWork::Steps;
  cfg.amount = 5;
  cfg.batch = 2;
  cfg.weight_decay = 0.0;
  cfg.eta_l = 1.0;
  // Each step at equal logits gives grad (+0.5, -0.5) for the single input.
  DenseVector delta = local_sgd(m, shard, cfg, rng);
  EXPECT_LT(delta(0), 0.0);
  EXPECT_GT(delta(1), 0.0);
  EXPECT_NEAR(delta(0), -delta(1), 1e-15);
}

TEST(LocalSgd, Deterministic) {
  RngStream rng(5, 0);
  const ModelParams m = random_model(Architecture::mlp(3, 4, 2), rng);
  Batch shard{random_matrix(rng, 30, 3), std::vector<int>(30, 0)};
  for (int i = 0; i < 30; i += 2) shard.labels[i] = 1;
  LocalConfig cfg;
  cfg.batch = 7;
  RngStream a(9, 1), b(9, 1);
  EXPECT_EQ(local_sgd(m, shard, cfg, a), local_sgd(m, shard, cfg, b));
}

TEST(FedBuff, MeanOfDeltas) {
  const ModelParams x(Architecture::linear(1, 2), DenseVector::Ones(2));
  DenseVector d1(2), d2(2);
  d1 << 1.0, -2.0;
  d2 << 3.0, 4.0;
  const std::vector<ClientUpdate> buf{update(0, d1), update(1, d2)};
  const ModelParams next = fedbuff_update(x, buf, 0.5);
  EXPECT_DOUBLE_EQ(next.theta(0), 1.0 + 0.5 * 2.0);
  EXPECT_DOUBLE_EQ(next.theta(1), 1.0 + 0.5 * 1.0);
}

TEST(FedBuff, SingleUpdateUnitRateAddsDelta) {
  RngStream rng(6, 0);
  const ModelParams x = random_model(Architecture::linear(2, 2), rng);
  const DenseVector d = random_matrix(rng, 4, 1);
  const std::vector<ClientUpdate> buf{update(3, d)};
  EXPECT_EQ(fedbuff_update(x, buf, 1.0).theta, x.theta + d);
}

TEST(FedBuff, PermutationInvariant) {
  RngStream rng(7, 0);
  const ModelParams x = random_model(Architecture::linear(2, 2), rng);
  std::vector<ClientUpdate> buf;
  for (int i = 0; i < 5; ++i) buf.push_back(update(i, random_matrix(rng, 4, 1)));
  const DenseVector first = fedbuff_update(x, buf, 0.7).theta;
  std::reverse(buf.begin(), buf.end());
  EXPECT_LT((fedbuff_update(x, buf, 0.7).theta - first).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(FedBuff, EmptyBufferRejected) {
  EXPECT_THROW(buffered_mean({}), ConfigError);
}

class FedEchoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    RngStream rng(8, 0);
    arch = Architecture::linear(3, 4);
    x = random_model(arch, rng);
    pool = random_matrix(rng, 30, 3);
    for (int i = 0; i < 3; ++i) {
      buf.push_back(update(i, 0.1 * random_matrix(rng, 12, 1)));
      cache_client_logits(x, buf.back(), cache, pool);
    }
    cfg.steps = 5;
    cfg.batch_size = 10;
  }

  Architecture arch;
  ModelParams x;
  DenseMatrix pool;
  std::vector<ClientUpdate> buf;
  LogitsCache cache{4};
  DistillConfig cfg;
};

TEST_F(FedEchoTest, ZeroDistillRateEqualsFedBuff) {
  cfg.eta_d = 0.0;
  RngStream rng(1, 0);
  const auto out = fedecho_update(x, buf, cache, pool, 0.8, cfg, rng);
  EXPECT_EQ(out.student.theta, fedbuff_update(x, buf, 0.8).theta);
}

TEST_F(FedEchoTest, IsDistillationOfFedBuffStep) {
  RngStream r1(2, 0), r2(2, 0);
  const auto out = fedecho_update(x, buf, cache, pool, 0.8, cfg, r1);
  const auto ref = distillation_round(fedbuff_update(x, buf, 0.8), pool, cache, cfg, r2);
  EXPECT_EQ(out.student.theta, ref.student.theta);
  EXPECT_NE(out.student.theta, fedbuff_update(x, buf, 0.8).theta);
}

TEST_F(FedEchoTest, EmptyCacheFallsBackToFedBuff) {
  RngStream rng(3, 0);
  const auto out = fedecho_update(x, buf, LogitsCache(4), pool, 0.8, cfg, rng);
  EXPECT_TRUE(out.report.skipped);
  EXPECT_EQ(out.student.theta, fedbuff_update(x, buf, 0.8).theta);
}

TEST_F(FedEchoTest, CacheHoldsReconstructedClientLogits) {
  for (const auto& u : buf) {
    const ModelParams client(arch, x.theta + u.delta);
    EXPECT_EQ(cache.at(static_cast<std::size_t>(u.client_id)), forward_logits(client, pool));
  }
  EXPECT_EQ(cache.available(), 3u);
  EXPECT_FALSE(cache.has(3));
}

TEST_F(FedEchoTest, LaterUpdateOverwritesSlot) {
  const ClientUpdate again = update(1, DenseVector::Zero(12));
  cache_client_logits(x, again, cache, pool);
  EXPECT_EQ(cache.at(1), forward_logits(x, pool));
  EXPECT_EQ(cache.available(), 3u);
}

TEST(Reconstruction, LocalModelRecoveredBitExactly) {
  RngStream rng(9, 0);
  const ModelParams m = random_model(Architecture::mlp(4, 5, 3), rng);
  Batch shard{random_matrix(rng, 40, 4), std::vector<int>(40)};
  for (int i = 0; i < 40; ++i) shard.labels[i] = i % 3;
  LocalConfig cfg;
  cfg.eta_l = 0.37;
  cfg.batch = 6;
  DenseVector final_theta;
  const DenseVector delta = local_sgd(m, shard, cfg, rng, &final_theta);
  EXPECT_EQ(m.theta + delta, final_theta);
}

TEST(Adaptive, FirstStepMatchesAdamOracle) {
  AdaptiveConfig cfg;
  cfg.eta = 0.01;
  ServerAdamState st;
  const ModelParams x(Architecture::linear(1, 2));
  DenseVector d(2);
  d << 2.0, -0.5;
  const std::vector<ClientUpdate> buf{update(0, d)};
  ModelParams next = adaptive_server_update(x, buf, cfg, st);
  EXPECT_NEAR(next.theta(0), 0.01 * 2.0 / (2.0 + 1e-8), 1e-15);
  EXPECT_NEAR(next.theta(1), -0.01 * 0.5 / (0.5 + 1e-8), 1e-15);

  // Second step by hand with the same delta.
  const double m = 0.9 * 0.1 * 2.0 + 0.1 * 2.0, v = 0.99 * 0.01 * 4.0 + 0.01 * 4.0;
  const double want = next.theta(0) + 0.01 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.9801)) + 1e-8);
  next = adaptive_server_update(next, buf, cfg, st);
  EXPECT_NEAR(next.theta(0), want, 1e-15);
}

TEST(Adaptive, ZeroBetasGiveSignStep) {
  AdaptiveConfig cfg;
  cfg.eta = 0.1;
  cfg.beta1 = 0.0;
  cfg.beta2 = 0.0;
  ServerAdamState st;
  ModelParams x(Architecture::linear(1, 2));
  DenseVector d(2);
  d << 30.0, -0.02;
  const std::vector<ClientUpdate> buf{update(0, d)};
  for (int i = 0; i < 3; ++i) x = adaptive_server_update(x, buf, cfg, st);
  EXPECT_NEAR(x.theta(0), 0.3, 1e-9);
  EXPECT_NEAR(x.theta(1), -0.3, 1e-6);
}

TEST(Hooks, FedEchoServerCountsSkippedRounds) {
  const Architecture arch = Architecture::linear(2, 2);
  FedEchoServer server(1.0, DistillConfig{}, DenseMatrix::Ones(4, 2), 3, 1);
  const ModelParams x(arch);
  const std::vector<ClientUpdate> buf{update(0, DenseVector::Ones(4))};
  const RoundOutcome first = server.aggregate(x, buf, 0);
  EXPECT_TRUE(first.distill_skipped);
  EXPECT_EQ(server.skipped_rounds(), 1);
  server.on_arrival(buf[0], x);
  const RoundOutcome second = server.aggregate(x, buf, 1);
  EXPECT_FALSE(second.distill_skipped);
  EXPECT_EQ(server.skipped_rounds(), 1);
  EXPECT_FALSE(std::isnan(second.mean_alpha));
}

}  // namespace
}  // namespace fedecho
