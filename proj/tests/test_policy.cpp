#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "advlab/error.hpp"
#include "advlab/oracle.hpp"
#include "advlab/policy.hpp"

using namespace advlab;

namespace {

double sum_log_probs(const PolicyParameters& p, const Trajectory& t) {
  double s = 0.0;
  for (double v : sequence_log_probs(p, t)) s += v;
  return s;
}

}  // namespace

TEST(Policy, ZeroScaleIsUniform) {
  const auto p = init_policy(1, 1, 2, 0.0, 0);
  const auto probs = p.probs(p.state(0, 0, std::nullopt));
  EXPECT_DOUBLE_EQ(probs[0], 0.5);
  EXPECT_DOUBLE_EQ(probs[1], 0.5);
  const auto p3 = init_policy(1, 1, 3, 0.0, 0);
  for (double lp : p3.log_probs(p3.state(0, 0, std::nullopt))) EXPECT_NEAR(lp, std::log(1.0 / 3.0), 1e-15);
}

TEST(Policy, InitIsDeterministicAndBounded) {
  const auto a = init_policy(2, 3, 4, 0.1, 7);
  const auto b = init_policy(2, 3, 4, 0.1, 7);
  EXPECT_EQ(a, b);
  for (double v : a.values()) EXPECT_LE(std::abs(v), 0.1);
  EXPECT_NE(a, init_policy(2, 3, 4, 0.1, 8));
}

TEST(Policy, InvalidDimensions) {
  EXPECT_THROW(init_policy(1, 1, 0, 0.0, 0), Error);
  EXPECT_THROW(init_policy(1, 0, 2, 0.0, 0), Error);
  EXPECT_THROW(init_policy(1, 1, 2, -1.0, 0), Error);
}

TEST(Policy, NormalizationAtEveryState) {
  for (auto cond : {Conditioning::Position, Conditioning::History}) {
    PolicyShape shape{2, 3, 4, cond, true};
    const auto p = init_policy(shape, 3.0, 1);
    for (std::size_t q = 0; q < 2; ++q)
      for (std::size_t c = 0; c < shape.contexts(); ++c) {
        double s = 0.0;
        for (double lp : p.log_probs(State{q, c})) s += std::exp(lp);
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
  }
}

TEST(Policy, SampleLengthAndSaturation) {
  Rng rng(1);
  const auto uniform = init_policy(1, 4, 2, 0.0, 0);
  EXPECT_EQ(sample_trajectory(uniform, 0, rng).size(), 4u);

  PolicyParameters det(PolicyShape{1, 3, 3});
  for (std::size_t t = 0; t < 3; ++t) det.row(t)[(t + 1) % 3] = 1e6;
  const auto traj = sample_trajectory(det, 0, rng);
  ASSERT_EQ(traj.size(), 3u);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(traj.tokens[t], static_cast<Token>((t + 1) % 3));
}

TEST(Policy, StopTokenEndsGeneration) {
  PolicyParameters p(PolicyShape{1, 5, 2});
  for (std::size_t t = 0; t < 5; ++t) p.row(t)[1] = 1e6;
  Rng rng(2);
  const auto traj = sample_trajectory(p, 0, rng, Token{1});
  EXPECT_EQ(traj.tokens, std::vector<Token>{1});
}

TEST(Policy, FirstTokenFrequency) {
  const auto p = init_policy(1, 8, 2, 0.0, 0);
  Rng rng(3);
  int zeros = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) zeros += sample_trajectory(p, 0, rng).tokens[0] == 0;
  EXPECT_NEAR(zeros / static_cast<double>(n), 0.5, 0.01);
}

TEST(Policy, SamplingIsDeterministic) {
  const auto p = init_policy(2, 4, 3, 1.0, 4);
  Rng a(9), b(9);
  for (int i = 0; i < 20; ++i) {
    const auto ta = sample_trajectory(p, i % 2, a);
    const auto tb = sample_trajectory(p, i % 2, b);
    EXPECT_EQ(ta.tokens, tb.tokens);
    EXPECT_EQ(ta.logp_sample, tb.logp_sample);
  }
}

TEST(Policy, SequenceLogProbs) {
  const auto u = init_policy(1, 3, 4, 0.0, 0);
  for (double lp : sequence_log_probs(u, 0, std::vector<Token>{0, 3, 2})) EXPECT_NEAR(lp, std::log(0.25), 1e-15);

  PolicyParameters p(PolicyShape{1, 1, 2});
  p.row(0)[0] = 1.0;
  EXPECT_NEAR(sequence_log_probs(p, 0, std::vector<Token>{0})[0], std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)),
              1e-15);
  EXPECT_THROW(sequence_log_probs(p, 0, std::vector<Token>{2}), Error);

  const auto q = init_policy(PolicyShape{2, 4, 3, Conditioning::History, true}, 1.0, 5);
  Rng rng(6);
  const auto t = sample_trajectory(q, 1, rng);
  const auto again = sequence_log_probs(q, t);
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_NEAR(again[i], t.logp_sample[i], 1e-12);
    EXPECT_LE(t.logp_sample[i], 0.0);
  }
}

TEST(Policy, ScoreRows) {
  const auto u = init_policy(1, 2, 2, 0.0, 0);
  Trajectory t;
  t.tokens = {0};
  t.logp_sample = t.logp_ref = {std::log(0.5)};
  const auto g = log_prob_gradient(u, t);
  EXPECT_DOUBLE_EQ(g.row(0)[0], 0.5);
  EXPECT_DOUBLE_EQ(g.row(0)[1], -0.5);
  EXPECT_EQ(g.row(1)[0], 0.0);
  EXPECT_EQ(g.row(1)[1], 0.0);
}

TEST(Policy, ScoreMatchesFiniteDifferences) {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    PolicyShape shape{1 + rng.index(3), 1 + rng.index(4), 2 + rng.index(4),
                      i % 2 ? Conditioning::History : Conditioning::Position, i % 3 == 0};
    const auto p = init_policy(shape, 1.5, rng.engine()());
    const auto t = sample_trajectory(p, rng.index(shape.prompts), rng);
    const auto fd = finite_difference_gradient([&](const PolicyParameters& x) { return sum_log_probs(x, t); }, p, 1e-5);
    EXPECT_LT(relative_error(log_prob_gradient(p, t), fd), 1e-6);
  }
}

TEST(Policy, ScoreHasZeroMean) {
  const auto p = init_policy(1, 2, 3, 1.0, 12);
  Rng rng(13);
  const int n = 100000;
  std::vector<Moments> m(p.shape().parameter_count());
  for (int i = 0; i < n; ++i) {
    const auto g = log_prob_gradient(p, sample_trajectory(p, 0, rng));
    for (std::size_t j = 0; j < m.size(); ++j) m[j].add(g.values()[j]);
  }
  for (const auto& mj : m) EXPECT_LE(std::abs(mj.mean()), 3.0 * mj.stderr_mean() + 1e-15);
}

TEST(Policy, ApplyUpdate) {
  PolicyParameters p(PolicyShape{1, 1, 2});
  GradAccumulator d(p.shape());
  d.values()[0] = 0.5;
  d.values()[1] = -0.5;
  const auto q = apply_update(p, d, 0.1);
  EXPECT_NEAR(q.values()[0], 0.05, 1e-15);
  EXPECT_NEAR(q.values()[1], -0.05, 1e-15);
  EXPECT_EQ(apply_update(p, d, 0.0), p);
  EXPECT_EQ(apply_update(p, GradAccumulator(p.shape()), 1.0), p);
  EXPECT_THROW(apply_update(p, GradAccumulator(PolicyShape{1, 1, 3}), 1.0), Error);
}

TEST(Policy, SharedTableIsAddedToEveryPrompt) {
  PolicyShape shape{3, 2, 2, Conditioning::Position, true};
  PolicyParameters p(shape);
  const State s{2, 1};
  p.row(*p.shared_row_of(s))[1] = 2.0;
  for (std::size_t q = 0; q < 3; ++q) EXPECT_DOUBLE_EQ(p.logits(State{q, 1})[1], 2.0);
}

TEST(Policy, CheckpointRoundTripIsBitExact) {
  for (auto cond : {Conditioning::Position, Conditioning::History}) {
    const auto p = init_policy(PolicyShape{3, 4, 5, cond, cond == Conditioning::History}, 2.0, 21);
    std::stringstream buf;
    save_checkpoint(p, buf);
    EXPECT_EQ(load_checkpoint(buf), p);
  }
}

TEST(Policy, CorruptCheckpointRejected) {
  std::stringstream buf("not a checkpoint at all, clearly");
  EXPECT_THROW(load_checkpoint(buf), Error);
  const auto p = init_policy(1, 2, 2, 1.0, 1);
  std::stringstream full;
  save_checkpoint(p, full);
  std::stringstream truncated(full.str().substr(0, full.str().size() - 3));
  EXPECT_THROW(load_checkpoint(truncated), Error);
}
