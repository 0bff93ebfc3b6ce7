#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "advlab/error.hpp"
#include "advlab/klpen.hpp"
#include "advlab/oracle.hpp"

using namespace advlab;

TEST(KL, K1) {
  EXPECT_EQ(kl_k1(KLRecord({-1.0, -2.0}, {-1.0, -2.0})), (std::vector<double>{0, 0}));
  EXPECT_DOUBLE_EQ(kl_k1(KLRecord({-1.0}, {-1.5}))[0], 0.5);
  EXPECT_DOUBLE_EQ(kl_k1(KLRecord({-1.5}, {-1.0}))[0], -0.5);
}

TEST(KL, K2) {
  EXPECT_EQ(kl_k2(KLRecord({-1.0}, {-1.0}))[0], 0.0);
  EXPECT_DOUBLE_EQ(kl_k2(KLRecord({0.0}, {-2.0}))[0], 2.0);
  EXPECT_DOUBLE_EQ(kl_k2(KLRecord({-1.5}, {-1.0}))[0], 0.125);
}

TEST(KL, K3) {
  EXPECT_EQ(kl_k3(KLRecord({-1.0}, {-1.0})).values[0], 0.0);
  EXPECT_NEAR(kl_k3(KLRecord({-2.0}, {-1.0})).values[0], std::exp(1.0) - 2.0, 1e-15);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double a = rng.uniform(-20, 0), b = rng.uniform(-20, 0);
    const KLRecord rec({a}, {b});
    EXPECT_GE(kl_k3(rec).values[0], 0.0);
    EXPECT_GE(kl_k2(rec)[0], 0.0);
  }
}

TEST(KL, K3OverflowFlag) {
  const auto r = kl_k3(KLRecord({-60.0, -1.0}, {-1.0, -1.0}));
  EXPECT_TRUE(r.unstable[0]);
  EXPECT_FALSE(r.unstable[1]);
  EXPECT_TRUE(r.any_unstable());
}

TEST(KL, SecondOrderAgreement) {
  Rng rng(2);
  for (int i = 0; i < 10000; ++i) {
    const double rho = rng.uniform(-1e-3, 1e-3);
    const KLRecord rec({rho - 0.7}, {-0.7});
    EXPECT_LE(std::abs(kl_k2(rec)[0] - kl_k3(rec).values[0]), std::pow(std::abs(rec.log_ratio(0)), 3));
  }
}

TEST(KL, K2LossValue) {
  const std::vector<KLRecord> same{KLRecord({-1.0, -2.0}, {-1.0, -2.0})};
  EXPECT_EQ(k2_loss_value(same), 0.0);
  const std::vector<KLRecord> two{KLRecord({0.0}, {-1.0}), KLRecord({-1.0}, {0.0})};
  EXPECT_DOUBLE_EQ(k2_loss_value(two), 0.5);
  const std::vector<KLRecord> swapped{KLRecord({-1.0}, {0.0}), KLRecord({0.0}, {-1.0})};
  EXPECT_DOUBLE_EQ(k2_loss_value(swapped), k2_loss_value(two));
  EXPECT_THROW(k2_loss_value(std::vector<KLRecord>{}), Error);
}

TEST(KLGradient, IdenticalPoliciesGiveZero) {
  const auto p = init_policy(2, 3, 3, 1.0, 1);
  Rng rng(3);
  std::vector<Trajectory> batch;
  for (int i = 0; i < 50; ++i) batch.push_back(sample_trajectory(p, p, i % 2, rng));
  EXPECT_EQ(k2_loss_gradient(p, {batch, {}}).max_abs(), 0.0);
  EXPECT_EQ(rkl_gradient_reference(p, {batch, {}}).max_abs(), 0.0);
}

TEST(KLGradient, K2EqualsRklOnSharedBatch) {
  const auto p = init_policy(2, 3, 3, 1.0, 4);
  const auto ref = init_policy(2, 3, 3, 1.0, 5);
  Rng rng(6);
  std::vector<Trajectory> batch;
  for (int i = 0; i < 100; ++i) batch.push_back(sample_trajectory(p, ref, i % 2, rng));
  EXPECT_EQ(k2_loss_gradient(p, {batch, {}}), rkl_gradient_reference(p, {batch, {}}));
}

TEST(KLGradient, EnumeratedRklMatchesSymbolic) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PolicyShape shape{1, 2, 2};
    const auto theta = init_policy(shape, 2.0, 100 + seed);
    const auto ref = init_policy(shape, 2.0, 200 + seed);
    const auto en = enumerate_trajectories(theta, ref, 0);
    const auto states = visited_states(theta, 0, en.trajectories.front().tokens);
    const auto exact = exact_rkl_gradient(theta, ref, states, 0.5);
    EXPECT_LT(relative_error(rkl_gradient_reference(theta, {en.trajectories, en.weights}), exact), 1e-10);
  }
}

TEST(KLGradient, EnumeratedRklMatchesFiniteDifferenceOfExactKl) {
  const PolicyShape shape{1, 2, 3};
  const auto theta = init_policy(shape, 1.0, 7);
  const auto ref = init_policy(shape, 1.0, 8);
  const auto en = enumerate_trajectories(theta, ref, 0);
  const auto states = visited_states(theta, 0, std::vector<Token>{0, 0});
  const auto fd = finite_difference_gradient(
      [&](const PolicyParameters& p) { return exact_state_kl(p, ref, states) / 2.0; }, theta, 1e-5);
  EXPECT_LT(relative_error(rkl_gradient_reference(theta, {en.trajectories, en.weights}), fd), 1e-6);
}

TEST(KLGradient, ReferenceShiftInvariance) {
  const auto p = init_policy(1, 2, 3, 1.0, 9);
  auto ref = init_policy(1, 2, 3, 1.0, 10);
  Rng rng(11);
  std::vector<Trajectory> batch, shifted;
  for (int i = 0; i < 30; ++i) batch.push_back(sample_trajectory(p, ref, 0, rng));
  auto ref_shift = ref;
  for (double& v : ref_shift.values()) v += 3.0;
  for (auto t : batch) {
    t.logp_ref = sequence_log_probs(ref_shift, t);
    shifted.push_back(std::move(t));
  }
  EXPECT_LT(relative_error(rkl_gradient_reference(p, {shifted, {}}), rkl_gradient_reference(p, {batch, {}})), 1e-12);
}

TEST(KLGradient, K1ProbeIgnoresReference) {
  const auto p = init_policy(1, 3, 3, 1.0, 12);
  const auto ref_a = init_policy(1, 3, 3, 1.0, 13);
  const auto ref_b = init_policy(1, 3, 3, 4.0, 14);
  Rng rng(15);
  std::vector<Trajectory> a, b;
  for (int i = 0; i < 40; ++i) {
    auto t = sample_trajectory(p, ref_a, 0, rng);
    a.push_back(t);
    t.logp_ref = sequence_log_probs(ref_b, t);
    b.push_back(std::move(t));
  }
  EXPECT_EQ(k1_loss_gradient_probe(p, {a, {}}), k1_loss_gradient_probe(p, {b, {}}));
}

TEST(KLGradient, K1ProbeSingleTrajectoryIsScaledScore) {
  const auto p = init_policy(2, 4, 3, 1.0, 16);
  Rng rng(17);
  const std::vector<Trajectory> one{sample_trajectory(p, 1, rng)};
  auto want = log_prob_gradient(p, one[0]);
  want.scale(1.0 / static_cast<double>(one[0].size()));
  EXPECT_LT(relative_error(k1_loss_gradient_probe(p, {one, {}}), want), 1e-15);
}

TEST(KLGradient, K1ProbeHasZeroMean) {
  const auto p = init_policy(1, 2, 2, 1.0, 18);
  Rng rng(19);
  const int n = 100000;
  std::vector<Moments> m(p.shape().parameter_count());
  for (int i = 0; i < n; ++i) {
    const std::vector<Trajectory> one{sample_trajectory(p, 0, rng)};
    const auto g = k1_loss_gradient_probe(p, {one, {}});
    for (std::size_t j = 0; j < m.size(); ++j) m[j].add(g.values()[j]);
  }
  for (const auto& mj : m) EXPECT_LE(std::abs(mj.mean()), 3.0 * mj.stderr_mean() + 1e-15);
}

TEST(KLGradient, K3GradientWeight) {
  const auto p = init_policy(1, 2, 2, 1.0, 20);
  const auto ref = init_policy(1, 2, 2, 1.0, 21);
  Rng rng(22);
  const std::vector<Trajectory> one{sample_trajectory(p, ref, 0, rng)};
  GradAccumulator want(p.shape());
  std::vector<double> w;
  for (std::size_t t = 0; t < one[0].size(); ++t)
    w.push_back((1.0 - std::exp(one[0].logp_ref[t] - one[0].logp_sample[t])) / static_cast<double>(one[0].size()));
  accumulate_score(p, 0, one[0].tokens, w, want);
  EXPECT_LT(relative_error(k3_loss_gradient(p, {one, {}}), want), 1e-12);
}

TEST(KL, K1MeanIsConsistent) {
  const auto theta = init_policy(1, 2, 2, 1.0, 23);
  const auto ref = init_policy(1, 2, 2, 1.0, 24);
  const auto states = visited_states(theta, 0, std::vector<Token>{0, 0});
  const double exact = exact_state_kl(theta, ref, states);
  Rng rng(25);
  Moments m;
  for (int i = 0; i < 1000000; ++i) {
    const auto t = sample_trajectory(theta, ref, 0, rng);
    double s = 0.0;
    for (double v : kl_k1(KLRecord(t.logp_sample, t.logp_ref))) s += v;
    m.add(s);
  }
  EXPECT_LE(std::abs(m.mean() - exact), 3.0 * m.stderr_mean());
}

TEST(KL, EstimatorStrings) {
  for (auto k : {KLEstimatorKind::K1, KLEstimatorKind::K2, KLEstimatorKind::K3})
    EXPECT_EQ(kl_estimator_from_string(to_string(k)), k);
  EXPECT_THROW(kl_estimator_from_string("k4"), Error);
}
