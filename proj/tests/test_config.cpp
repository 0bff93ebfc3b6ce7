#include <gtest/gtest.h>

#include <sstream>

#include "advlab/config.hpp"
#include "advlab/error.hpp"

using namespace advlab;

namespace {

ExperimentConfig round_trip(const ExperimentConfig& c) {
  std::stringstream buf;
  c.write(buf);
  return parse_config(buf);
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const ExperimentConfig c;
  EXPECT_EQ(round_trip(c), c);
}

TEST(Config, EveryKeyRoundTripsAfterChanges) {
  ExperimentConfig c;
  c.set("estimator", "GRPOLocal");
  c.set("train.group_size", "4");
  c.set("clip_eps", "0.15");
  c.set("kl_lambda", "0.123456789012345678");
  c.set("token_advantage", "suffix_kl");
  c.set("std_kind", "sample");
  c.set("kl_estimator", "k3");
  c.set("seed", "18446744073709551615");
  c.set("env.family", "parity");
  c.set("reward_scheme", "pm1");
  c.set("conditioning", "history");
  c.set("shared_table", "true");
  c.set("stop_token", "2");
  c.set("probe.trials", "1234");
  c.set("final_pass_repeats", "3");
  EXPECT_EQ(c.train.estimator, EstimatorKind::GRPOLocal);
  EXPECT_EQ(c.train.seed, 18446744073709551615ull);
  EXPECT_EQ(c.env.reward_scheme, RewardScheme::PlusMinusOne);
  EXPECT_EQ(round_trip(c), c);
}

TEST(Config, ParseSectionsAndComments) {
  std::istringstream in(
      "# experiment\n"
      "[train]\n"
      "; full-line comment\n"
      "steps = 7\n"
      "estimator=RLOO\n"
      "group_size = 2\n"
      "\n"
      "[env]\n"
      "vocab = 5\n");
  const auto c = parse_config(in);
  EXPECT_EQ(c.train.steps, 7u);
  EXPECT_EQ(c.train.estimator, EstimatorKind::RLOO);
  EXPECT_EQ(c.env.vocab, 5u);
}

TEST(Config, RejectsUnknownKeysAndSections) {
  std::istringstream unknown_key("[train]\nlearning_rate = 3\n");
  EXPECT_THROW(parse_config(unknown_key), Error);
  std::istringstream unknown_section("[model]\nsteps = 3\n");
  EXPECT_THROW(parse_config(unknown_section), Error);
  std::istringstream wrong_section("[env]\nsteps = 3\n");
  EXPECT_THROW(parse_config(wrong_section), Error);
  std::istringstream no_equals("[train]\nsteps 3\n");
  EXPECT_THROW(parse_config(no_equals), Error);
}

TEST(Config, RejectsBadValues) {
  ExperimentConfig c;
  for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{{"steps", "-1"},
                                                                              {"steps", "ten"},
                                                                              {"clip_eps", "0.2x"},
                                                                              {"estimator", "DPO"},
                                                                              {"shared_table", "maybe"},
                                                                              {"clip_eps", "nan"}}) {
    try {
      c.set(k, v);
      FAIL() << k << "=" << v << " accepted";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::Config) << e.what();
    }
  }
}

TEST(Config, ValidateChecksCrossFieldConstraints) {
  ExperimentConfig c;
  c.set("estimator", "GRPOLocal");
  EXPECT_THROW(c.validate(), Error);
  c.set("group_size", "4");
  EXPECT_NO_THROW(c.validate());
  c.set("family", "file");
  EXPECT_THROW(c.validate(), Error);
}

TEST(Config, KeysAreQualified) {
  const auto keys = config_keys();
  EXPECT_FALSE(keys.empty());
  for (const auto& k : keys) EXPECT_NE(k.find('.'), std::string::npos) << k;
}

TEST(Config, BuildEnvironmentFamilies) {
  for (const char* fam : {"exact", "parity", "gaussian", "length"}) {
    EnvConfig e;
    e.family = fam;
    const auto env = build_environment(e);
    EXPECT_EQ(env.prompts.size(), e.train_prompts + e.heldout_prompts) << fam;
    const auto shape = policy_shape(e, env);
    EXPECT_EQ(shape.prompts, env.prompts.size());
    EXPECT_EQ(shape.max_len, e.max_len);
  }
  EnvConfig missing;
  missing.family = "file";
  missing.prompts = "/nonexistent/prompts.txt";
  EXPECT_THROW(build_environment(missing), Error);
}
