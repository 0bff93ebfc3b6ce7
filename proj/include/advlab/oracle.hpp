#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advlab/policy.hpp"
#include "advlab/stats.hpp"

namespace advlab {

enum class Verdict { Pass, Fail, Inconclusive };
std::string to_string(Verdict v);

/// Gaussian group-reward model: N rewards with i.i.d. N(0, sigma^2) noise,
/// the first one's noise held at eps_i.
struct BiasProbeConfig {
  std::size_t group_size = 2;
  double sigma = 1.0;
  double eps_i = 0.0;
  std::size_t trials = 1'000'000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ProbeReport {
  double estimate = 0.0;
  double stderr_mean = 0.0;
  std::optional<double> reference;
  Verdict verdict = Verdict::Inconclusive;
  std::size_t skipped = 0;  ///< degenerate trials (D = 0)
};

/// Agreement check: Pass when |estimate - reference| <= tol and 3 SE <= tol;
/// Fail when the gap exceeds both tol and 3 SE; Inconclusive otherwise.
Verdict judge_agreement(double estimate, double stderr_mean, double reference, double tol);
/// Separation check: Pass when |difference| > n_se * combined SE.
Verdict judge_separation(double difference, double combined_se, double n_se = 5.0);

/// Monte Carlo estimate of E[A_1 | eps_1] for the locally normalized advantage
/// A_1 = (eps_1 - mean) / D with the population D. For N = 2 the reference is
/// the closed form 2 Phi(eps_i / sigma) - 1; no verdict is assigned.
ProbeReport mc_conditional_advantage(const BiasProbeConfig& cfg);

/// E[D^2 | eps_i] = ((N-1)^2 / N^2) sigma^2 + ((N-1) / N^2) eps_i^2.
double cond_d2_closed_form(std::size_t group_size, double sigma, double eps_i);

/// Monte Carlo E[D^2 | eps_i], judged against the closed form at rel_tol.
ProbeReport cond_d2_monte_carlo(const BiasProbeConfig& cfg, double rel_tol = 0.01);

struct ContradictionReport {
  std::vector<double> eps_values;
  std::vector<ProbeReport> ratios;  ///< estimates of E[A_i | eps_i] / eps_i
  double max_difference = 0.0;      ///< largest pairwise gap between ratios
  double combined_se = 0.0;         ///< sqrt(se_a^2 + se_b^2) for that pair
  double relative_spread = 0.0;     ///< max_difference / mean ratio
  Verdict verdict = Verdict::Inconclusive;  ///< Pass = non-constancy confirmed
};

/// Ratio estimates at each nonzero grid point; the verdict passes when two of
/// them differ by more than 5 combined standard errors. Zero grid points are
/// skipped; fewer than two distinct |eps| values is an invalid-parameter error.
ContradictionReport unbiasedness_contradiction_check(std::size_t group_size, double sigma,
                                                     std::span<const double> eps_grid, std::size_t trials,
                                                     std::uint64_t seed = 0);

/// Central differences over every parameter coordinate.
GradAccumulator finite_difference_gradient(const std::function<double(const PolicyParameters&)>& objective,
                                           const PolicyParameters& params, double step);

/// max |got - want| / max |want| over all coordinates (absolute error when
/// want is identically zero).
double relative_error(const GradAccumulator& got, const GradAccumulator& want);

/// Every full-length response to one prompt with its exact probability under
/// `policy`; logp_sample/logp_ref are filled as if sampled.
struct Enumeration {
  std::vector<Trajectory> trajectories;
  std::vector<double> weights;
};
Enumeration enumerate_trajectories(const PolicyParameters& policy, const PolicyParameters& reference,
                                   std::size_t prompt_id);

/// Symbolic gradient of scale * sum_s D_KL(pi_theta(.|s) || pi_ref(.|s)):
/// d/dz_j = pi_j (log pi_j - log ref_j - KL_s) at each listed state.
GradAccumulator exact_rkl_gradient(const PolicyParameters& theta, const PolicyParameters& ref,
                                   std::span<const State> states, double scale);

struct K3VarianceRow {
  double k3_weight_variance = 0.0;  ///< Monte Carlo Var[pi_ref(y) / pi_theta(y)]
  double k2_weight_variance = 0.0;  ///< Monte Carlo Var[log(pi_theta(y) / pi_ref(y))]
  double k3_exact = 0.0;
  double k2_exact = 0.0;
};

/// Variance of the per-sample gradient weights of k3 and k2 at one state,
/// y ~ p_true.
K3VarianceRow k3_variance_probe(std::span<const double> p_true, std::span<const double> p_ref, std::size_t trials,
                                std::uint64_t seed = 0);

}  // namespace advlab
