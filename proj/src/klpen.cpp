#include "advlab/klpen.hpp"

#include <cmath>
#include <functional>
#include <limits>

#include "advlab/error.hpp"

namespace advlab {

namespace {

// Token-mean of w(rho_t) * score_t over a (weighted) batch, where rho_t is
// evaluated under `params` against the stored reference log-probabilities.
GradAccumulator token_weighted_score(const PolicyParameters& params, WeightedBatch batch,
                                     const std::function<double(double)>& weight_of_log_ratio) {
  GradAccumulator grad(params.shape());
  require(batch.weights.empty() || batch.weights.size() == batch.trajectories.size(), ErrorKind::InvalidDimension,
          "batch weights not aligned with trajectories");
  double token_mass = 0.0;
  std::vector<double> w;
  for (std::size_t i = 0; i < batch.trajectories.size(); ++i) {
    const auto& traj = batch.trajectories[i];
    require(traj.logp_ref.size() == traj.tokens.size(), ErrorKind::InvalidDimension, "missing reference log-probs");
    const auto logp = sequence_log_probs(params, traj);
    const double seq_weight = batch.weight(i);
    w.assign(traj.size(), 0.0);
    for (std::size_t t = 0; t < traj.size(); ++t) w[t] = seq_weight * weight_of_log_ratio(logp[t] - traj.logp_ref[t]);
    accumulate_score(params, traj.prompt_id, traj.tokens, w, grad);
    token_mass += seq_weight * static_cast<double>(traj.size());
  }
  if (token_mass > 0.0) grad.scale(1.0 / token_mass);
  return grad;
}

}  // namespace

std::string to_string(KLEstimatorKind kind) {
  switch (kind) {
    case KLEstimatorKind::K1: return "k1";
    case KLEstimatorKind::K2: return "k2";
    case KLEstimatorKind::K3: return "k3";
  }
  return "?";
}

KLEstimatorKind kl_estimator_from_string(const std::string& s) {
  if (s == "k1") return KLEstimatorKind::K1;
  if (s == "k2") return KLEstimatorKind::K2;
  if (s == "k3") return KLEstimatorKind::K3;
  throw Error(ErrorKind::Config, "unknown KL estimator '" + s + "'");
}

KLRecord::KLRecord(std::vector<double> theta, std::vector<double> ref)
    : logp_theta(std::move(theta)), logp_ref(std::move(ref)) {
  require(logp_theta.size() == logp_ref.size(), ErrorKind::InvalidDimension, "KL record lengths differ");
}

bool K3Result::any_unstable() const {
  for (bool u : unstable)
    if (u) return true;
  return false;
}

std::vector<double> kl_k1(const KLRecord& record) {
  std::vector<double> out(record.size());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = record.log_ratio(t);
  return out;
}

std::vector<double> kl_k2(const KLRecord& record) {
  std::vector<double> out(record.size());
  for (std::size_t t = 0; t < out.size(); ++t) {
    const double rho = record.log_ratio(t);
    out[t] = 0.5 * rho * rho;
  }
  return out;
}

K3Result kl_k3(const KLRecord& record) {
  K3Result r;
  r.values.resize(record.size());
  r.unstable.assign(record.size(), false);
  for (std::size_t t = 0; t < record.size(); ++t) {
    const double rho = record.log_ratio(t);
    if (-rho > kK3OverflowLogRatio) {
      r.unstable[t] = true;
      r.values[t] = std::numeric_limits<double>::infinity();
      continue;
    }
    r.values[t] = std::expm1(-rho) + rho;  // delta - 1 - log(delta) with delta = exp(-rho)
  }
  return r;
}

double k2_loss_value(std::span<const KLRecord> records) {
  double sum = 0.0;
  std::size_t tokens = 0;
  for (const auto& rec : records) {
    for (double v : kl_k2(rec)) sum += v;
    tokens += rec.size();
  }
  require(tokens > 0, ErrorKind::InvalidParameter, "k2 loss over an empty batch");
  return sum / static_cast<double>(tokens);
}

GradAccumulator k2_loss_gradient(const PolicyParameters& params, WeightedBatch batch) {
  // d/d(log pi) of rho^2 / 2 is rho; log pi_ref is a constant.
  return token_weighted_score(params, batch, [](double rho) { return rho; });
}

GradAccumulator rkl_gradient_reference(const PolicyParameters& params, WeightedBatch batch) {
  return token_weighted_score(params, batch, [](double log_ratio) { return log_ratio; });
}

GradAccumulator k1_loss_gradient_probe(const PolicyParameters& params, WeightedBatch batch) {
  return token_weighted_score(params, batch, [](double) { return 1.0; });
}

GradAccumulator k3_loss_gradient(const PolicyParameters& params, WeightedBatch batch) {
  return token_weighted_score(params, batch, [](double rho) { return -std::expm1(-rho); });
}

double exact_state_kl(const PolicyParameters& theta, const PolicyParameters& ref, std::span<const State> states) {
  require(theta.shape() == ref.shape(), ErrorKind::InvalidDimension, "policy shapes differ");
  double total = 0.0;
  for (const auto& s : states) {
    const auto lp = theta.log_probs(s);
    const auto lq = ref.log_probs(s);
    for (std::size_t a = 0; a < lp.size(); ++a) total += std::exp(lp[a]) * (lp[a] - lq[a]);
  }
  return total;
}

}  // namespace advlab
