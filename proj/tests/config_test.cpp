#include <cmath>
#include <string>

#include <gtest/gtest.h>

#include "fedecho/config.hpp"

namespace fedecho {
namespace {

RunConfig from_text(const std::string& text) { return build_config(parse_config_text(text)); }

void expect_error_mentions(const std::string& text, const std::string& field) {
  try {
    from_text(text);
    FAIL() << "expected ConfigError for " << field;
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
  }
}

TEST(Config, EmptyTextGivesDefaults) {
  const RunConfig c = from_text("");
  EXPECT_EQ(c.clients, 50);
  EXPECT_EQ(c.concurrency, 25);
  EXPECT_EQ(c.buffer, 5);
  EXPECT_EQ(c.rounds, 200);
  EXPECT_EQ(c.algorithm, AlgorithmKind::FedEcho);
  EXPECT_DOUBLE_EQ(c.distill.nu, 5.0);
  EXPECT_DOUBLE_EQ(c.distill.alpha_min, 0.2);
  EXPECT_DOUBLE_EQ(c.distill.alpha_max, 0.8);
  EXPECT_FALSE(c.distill.fixed_alpha);
  EXPECT_FALSE(c.distill.steps);
  EXPECT_EQ(c.delay.long_tier.lo, 50.0);
  EXPECT_EQ(c.delay.long_tier.hi, 80.0);
  EXPECT_EQ(c.entries.at("distill.alpha"), "dynamic");
}

TEST(Config, ParsesSectionsAndComments) {
  const RunConfig c = from_text(
      "# comment\n"
      "[run]\nclients = 10\nconcurrency = 4\nbuffer = 2\n"
      "; other comment\n"
      "[server]\nalgorithm = fedbuff\nlr = 0.5\n"
      "[distill]\nalpha = 0.25\nnu = inf\nsteps = 3\n"
      "[delay]\nprofile = mild\n");
  EXPECT_EQ(c.clients, 10);
  EXPECT_EQ(c.algorithm, AlgorithmKind::FedBuff);
  EXPECT_DOUBLE_EQ(c.eta, 0.5);
  ASSERT_TRUE(c.distill.fixed_alpha);
  EXPECT_DOUBLE_EQ(*c.distill.fixed_alpha, 0.25);
  EXPECT_TRUE(std::isinf(c.distill.nu));
  EXPECT_EQ(*c.distill.steps, 3);
  EXPECT_EQ(c.delay.long_tier.lo, 10.0);
  EXPECT_EQ(c.delay.long_tier.hi, 20.0);
}

TEST(Config, TierFieldsOverrideProfile) {
  const RunConfig c = from_text("[delay]\nprofile = large\nlong_lo = 60\nlong_hi = 70\n");
  EXPECT_EQ(c.delay.long_tier.lo, 60.0);
  EXPECT_EQ(c.delay.long_tier.hi, 70.0);
  EXPECT_EQ(c.delay.short_tier.hi, 2.0);
}

TEST(Config, UnknownKeyRejected) {
  EXPECT_THROW(from_text("[run]\nclientz = 3\n"), ConfigError);
  EXPECT_THROW(from_text("[nosuch]\nx = 1\n"), ConfigError);
}

TEST(Config, FieldErrorsNameTheField) {
  expect_error_mentions("[run]\nbuffer = 30\n", "run.buffer");
  expect_error_mentions("[run]\nclients = many\n", "run.clients");
  expect_error_mentions("[server]\nalgorithm = fedavg\n", "server.algorithm");
  expect_error_mentions("[distill]\nalpha = 1.5\n", "distill.alpha");
  expect_error_mentions("[distill]\nnu = 0\n", "distill.nu");
  expect_error_mentions("[data]\nalpha_dir = 0\n", "data.alpha_dir");
  expect_error_mentions("[local]\nsteps = 3\nepochs = 1\n", "local.steps");
}

TEST(Config, OverridesApplyAndValidate) {
  auto tree = parse_config_text("[run]\nrounds = 5\n");
  apply_override(tree, "run.rounds", "7");
  apply_override(tree, "distill.alpha", "dynamic");
  EXPECT_EQ(build_config(tree).rounds, 7);
  EXPECT_THROW(apply_override(tree, "run.bogus", "1"), ConfigError);
}

TEST(Config, SeedList) {
  const RunConfig c = from_text("[run]\nseeds = 3,1,2\n");
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{3, 1, 2}));
}

TEST(Config, ArchitectureFromDataShape) {
  const RunConfig c = from_text("[model]\narch = mlp\nhidden = 7\n");
  EXPECT_EQ(c.architecture(20, 10), Architecture::mlp(20, 7, 10));
}

TEST(Config, MissingFileIsConfigError) {
  EXPECT_THROW(load_config("/nonexistent/fedecho.ini"), ConfigError);
}

}  // namespace
}  // namespace fedecho
