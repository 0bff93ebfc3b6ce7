#include <gtest/gtest.h>

#include <cmath>

#include "advlab/error.hpp"
#include "advlab/klpen.hpp"
#include "advlab/oracle.hpp"
#include "advlab/parallel.hpp"

using namespace advlab;

TEST(Judge, AgreementAndSeparation) {
  EXPECT_EQ(judge_agreement(1.0, 0.001, 1.002, 0.01), Verdict::Pass);
  EXPECT_EQ(judge_agreement(1.0, 0.001, 1.1, 0.01), Verdict::Fail);
  EXPECT_EQ(judge_agreement(1.0, 0.1, 1.002, 0.01), Verdict::Inconclusive);
  EXPECT_EQ(judge_separation(0.6, 0.1), Verdict::Pass);
  EXPECT_NE(judge_separation(0.4, 0.1), Verdict::Pass);
}

TEST(Bias, NTwoClosedForm) {
  for (double eps : {0.5, 1.0, 2.0}) {
    const auto r = mc_conditional_advantage(BiasProbeConfig{2, 1.0, eps, 200000, 1});
    const double closed = 2.0 * normal_cdf(eps) - 1.0;
    ASSERT_TRUE(r.reference.has_value());
    EXPECT_NEAR(*r.reference, closed, 1e-15);
    EXPECT_LE(std::abs(r.estimate - closed), 3.0 * r.stderr_mean + 1e-12);
  }
}

TEST(Bias, SymmetryAtZero) {
  for (std::size_t n : {3, 4, 16}) {
    const auto r = mc_conditional_advantage(BiasProbeConfig{n, 1.0, 0.0, 200000, 2});
    EXPECT_LE(std::abs(r.estimate), 3.0 * r.stderr_mean);
  }
}

TEST(Bias, ConfigValidation) {
  EXPECT_THROW(mc_conditional_advantage(BiasProbeConfig{1, 1.0, 0.0, 10, 0}), Error);
  EXPECT_THROW(mc_conditional_advantage(BiasProbeConfig{2, 0.0, 0.0, 10, 0}), Error);
  EXPECT_THROW(mc_conditional_advantage(BiasProbeConfig{2, 1.0, 0.0, 0, 0}), Error);
}

TEST(Bias, DeterministicAcrossWorkerCounts) {
  set_worker_override(1);
  const auto a = mc_conditional_advantage(BiasProbeConfig{8, 1.0, 1.0, 100000, 3});
  set_worker_override(4);
  const auto b = mc_conditional_advantage(BiasProbeConfig{8, 1.0, 1.0, 100000, 3});
  set_worker_override(0);
  EXPECT_EQ(a.estimate, b.estimate);
  EXPECT_EQ(a.stderr_mean, b.stderr_mean);
}

TEST(CondD2, ClosedForm) {
  EXPECT_DOUBLE_EQ(cond_d2_closed_form(4, 1.0, 0.0), 0.5625);
  EXPECT_DOUBLE_EQ(cond_d2_closed_form(2, 1.0, 2.0), 1.25);
  EXPECT_NEAR(cond_d2_closed_form(100000, 1.5, 0.0), 2.25, 1e-4);
}

TEST(CondD2, MonteCarlo) {
  const auto a = cond_d2_monte_carlo(BiasProbeConfig{4, 1.0, 0.0, 1000000, 4});
  EXPECT_EQ(a.verdict, Verdict::Pass);
  EXPECT_NEAR(a.estimate, 0.5625, 0.005625);
  const auto b = cond_d2_monte_carlo(BiasProbeConfig{2, 1.0, 2.0, 1000000, 5});
  EXPECT_EQ(b.verdict, Verdict::Pass);
  EXPECT_NEAR(b.estimate, 1.25, 0.0125);
}

TEST(CondD2, UnderpoweredIsInconclusive) {
  const auto r = cond_d2_monte_carlo(BiasProbeConfig{4, 1.0, 0.0, 100, 6});
  EXPECT_GT(r.stderr_mean, 0.0);
  EXPECT_EQ(r.verdict, Verdict::Inconclusive);
}

TEST(Contradiction, NonConstantAtSmallN) {
  const std::vector<double> grid{0.5, 2.0};
  const auto c = unbiasedness_contradiction_check(4, 1.0, grid, 200000, 7);
  EXPECT_EQ(c.verdict, Verdict::Pass);
  EXPECT_GT(c.ratios[0].estimate, c.ratios[1].estimate);
}

TEST(Contradiction, EffectivelyConstantAtLargeN) {
  const std::vector<double> grid{0.5, 2.0};
  const auto c = unbiasedness_contradiction_check(1024, 1.0, grid, 50000, 8);
  EXPECT_LT(c.relative_spread, 0.01);
}

TEST(Contradiction, GridValidation) {
  const std::vector<double> same{1.0, 1.0};
  EXPECT_THROW(unbiasedness_contradiction_check(2, 1.0, same, 100, 0), Error);
  const std::vector<double> with_zero{0.0, 1.0, 2.0};
  const auto c = unbiasedness_contradiction_check(4, 1.0, with_zero, 20000, 0);
  EXPECT_EQ(c.eps_values.size(), 2u);
}

TEST(FiniteDifference, LinearObjectiveIsExact) {
  const auto p = init_policy(2, 2, 3, 1.0, 9);
  std::vector<double> c(p.shape().parameter_count());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = static_cast<double>(i) * 0.25 - 1.0;
  const auto g = finite_difference_gradient(
      [&](const PolicyParameters& x) {
        double s = 0.0;
        for (std::size_t i = 0; i < c.size(); ++i) s += c[i] * x.values()[i];
        return s;
      },
      p, 1e-3);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(g.values()[i], c[i], 1e-10);
  EXPECT_THROW(finite_difference_gradient([](const PolicyParameters&) { return 0.0; }, p, 0.0), Error);
}

TEST(Enumeration, WeightsSumToOne) {
  for (auto cond : {Conditioning::Position, Conditioning::History}) {
    const auto p = init_policy(PolicyShape{2, 3, 3, cond, false}, 1.0, 10);
    const auto en = enumerate_trajectories(p, p, 1);
    EXPECT_EQ(en.trajectories.size(), 27u);
    double s = 0.0;
    for (double w : en.weights) s += w;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Enumeration, K2LossFiniteDifferenceMatchesGradient) {
  const PolicyShape shape{1, 2, 2};
  const auto theta = init_policy(shape, 1.0, 11);
  const auto ref = init_policy(shape, 1.0, 12);
  const auto en = enumerate_trajectories(theta, ref, 0);
  // Frozen sampling weights: the loss is differentiated through log pi only.
  const auto fd = finite_difference_gradient(
      [&](const PolicyParameters& p) {
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < en.trajectories.size(); ++i) {
          const auto& t = en.trajectories[i];
          const auto lp = sequence_log_probs(p, t);
          for (std::size_t s = 0; s < t.size(); ++s) num += en.weights[i] * 0.5 * std::pow(lp[s] - t.logp_ref[s], 2);
          den += en.weights[i] * static_cast<double>(t.size());
        }
        return num / den;
      },
      theta, 1e-5);
  EXPECT_LT(relative_error(k2_loss_gradient(theta, {en.trajectories, en.weights}), fd), 1e-6);
}

TEST(K3Variance, IdenticalDistributionsGiveZero) {
  const std::vector<double> p{0.3, 0.7};
  const auto r = k3_variance_probe(p, p, 10000, 13);
  EXPECT_NEAR(r.k3_weight_variance, 0.0, 1e-24);
  EXPECT_NEAR(r.k2_weight_variance, 0.0, 1e-24);
}

TEST(K3Variance, BlowUpSweep) {
  std::vector<double> k3, k2;
  for (double x : {1e-1, 1e-2, 1e-3}) {
    const std::vector<double> p{x, 1.0 - x}, q{0.5, 0.5};
    const auto r = k3_variance_probe(p, q, 1000000, 14);
    EXPECT_NEAR(r.k3_weight_variance, r.k3_exact, 0.15 * r.k3_exact);
    EXPECT_NEAR(r.k2_weight_variance, r.k2_exact, 0.1 * r.k2_exact);
    k3.push_back(r.k3_weight_variance);
    k2.push_back(r.k2_weight_variance);
  }
  EXPECT_LT(k3[0], k3[1]);
  EXPECT_LT(k3[1], k3[2]);
  EXPECT_LT(k2.back() / k2.front(), 10.0);
}

TEST(RelativeError, Definition) {
  GradAccumulator a(PolicyShape{1, 1, 2}), b(PolicyShape{1, 1, 2});
  a.values()[0] = 1.0;
  b.values()[0] = 2.0;
  b.values()[1] = -4.0;
  EXPECT_DOUBLE_EQ(relative_error(a, b), 4.0 / 4.0);
  GradAccumulator z(PolicyShape{1, 1, 2});
  EXPECT_DOUBLE_EQ(relative_error(a, z), 1.0);
}
