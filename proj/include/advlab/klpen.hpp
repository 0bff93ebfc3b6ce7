#pragma once

#include <span>
#include <string>
#include <vector>

#include "advlab/policy.hpp"

namespace advlab {

enum class KLEstimatorKind { K1, K2, K3 };

std::string to_string(KLEstimatorKind kind);
KLEstimatorKind kl_estimator_from_string(const std::string& s);

/// Per-token log-probabilities of one response under the trained and the
/// reference policy. log_ratio(t) = logp_theta[t] - logp_ref[t].
struct KLRecord {
  std::vector<double> logp_theta;
  std::vector<double> logp_ref;

  KLRecord() = default;
  KLRecord(std::vector<double> theta, std::vector<double> ref);

  std::size_t size() const { return logp_theta.size(); }
  double log_ratio(std::size_t t) const { return logp_theta[t] - logp_ref[t]; }
};

/// k3 output; entries where the importance ratio exp(-rho) would exceed
/// exp(kK3OverflowLogRatio) are flagged and hold +inf.
struct K3Result {
  std::vector<double> values;
  std::vector<bool> unstable;
  bool any_unstable() const;
};

inline constexpr double kK3OverflowLogRatio = 50.0;

std::vector<double> kl_k1(const KLRecord& record);
std::vector<double> kl_k2(const KLRecord& record);
K3Result kl_k3(const KLRecord& record);

/// Token-mean of k2 over the batch.
double k2_loss_value(std::span<const KLRecord> records);

/// Trajectory batch with optional per-trajectory weights. Weights default to
/// 1 (a Monte Carlo batch); enumeration oracles pass exact probabilities.
struct WeightedBatch {
  std::span<const Trajectory> trajectories;
  std::span<const double> weights;  // empty = uniform

  double weight(std::size_t i) const { return weights.empty() ? 1.0 : weights[i]; }
};

/// Token-mean of rho_t * grad log pi(o_t), with rho evaluated under `params`
/// and the stored logp_ref held constant.
GradAccumulator k2_loss_gradient(const PolicyParameters& params, WeightedBatch batch);

/// Reverse-KL policy gradient E[(log pi/pi_ref) grad log pi] at token level.
GradAccumulator rkl_gradient_reference(const PolicyParameters& params, WeightedBatch batch);

/// Gradient of the naive k1 loss with only log pi differentiable: the token
/// mean of score vectors. The reference never enters.
GradAccumulator k1_loss_gradient_probe(const PolicyParameters& params, WeightedBatch batch);

/// Pathwise gradient of the k3 loss: token mean of (1 - exp(-rho)) * score.
GradAccumulator k3_loss_gradient(const PolicyParameters& params, WeightedBatch batch);

/// Exact D_KL(pi_theta(.|s) || pi_ref(.|s)) summed over the given states.
double exact_state_kl(const PolicyParameters& theta, const PolicyParameters& ref, std::span<const State> states);

}  // namespace advlab
