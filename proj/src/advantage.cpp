#include "advlab/advantage.hpp"

#include <cmath>

#include "advlab/error.hpp"

namespace advlab {

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::GAE: return "GAE";
    case EstimatorKind::ReMax: return "ReMax";
    case EstimatorKind::RLOO: return "RLOO";
    case EstimatorKind::GRPOLocal: return "GRPOLocal";
    case EstimatorKind::RPlusPlus: return "RPlusPlus";
    case EstimatorKind::RPlusPlusBaseline: return "RPlusPlusBaseline";
  }
  return "?";
}

EstimatorKind estimator_from_string(const std::string& s) {
  for (auto k : {EstimatorKind::GAE, EstimatorKind::ReMax, EstimatorKind::RLOO, EstimatorKind::GRPOLocal,
                 EstimatorKind::RPlusPlus, EstimatorKind::RPlusPlusBaseline}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorKind::Config, "unknown estimator '" + s + "'");
}

bool needs_groups(EstimatorKind kind) {
  return kind == EstimatorKind::RLOO || kind == EstimatorKind::GRPOLocal || kind == EstimatorKind::RPlusPlusBaseline;
}

GroupLayout::GroupLayout(std::vector<std::size_t> group_prompts, std::size_t group_size)
    : prompts_(std::move(group_prompts)), k_(group_size) {
  require(k_ >= 1, ErrorKind::InvalidGroup, "group size must be >= 1");
}

std::vector<double> adv_gae(std::span<const double> rewards, std::span<const double> values, double gamma,
                            double lambda) {
  require(rewards.size() == values.size(), ErrorKind::InvalidDimension, "rewards and values differ in length");
  const std::size_t L = rewards.size();
  std::vector<double> adv(L, 0.0);
  double running = 0.0;
  for (std::size_t i = L; i-- > 0;) {
    const double next_value = i + 1 < L ? values[i + 1] : 0.0;
    const double delta = rewards[i] + gamma * next_value - values[i];
    running = delta + gamma * lambda * running;
    adv[i] = running;
  }
  return adv;
}

double adv_remax(double reward, double greedy_reward) { return reward - greedy_reward; }

std::vector<double> adv_rloo(std::span<const double> group_rewards) {
  const std::size_t k = group_rewards.size();
  require(k >= 2, ErrorKind::InvalidGroup, "RLOO needs a group of at least 2");
  const double total = ordered_sum(group_rewards);
  std::vector<double> out(k);
  for (std::size_t i = 0; i < k; ++i) {
    out[i] = group_rewards[i] - (total - group_rewards[i]) / static_cast<double>(k - 1);
  }
  return out;
}

std::vector<double> adv_grpo_local(std::span<const double> group_rewards, double eps, StdKind kind) {
  require(group_rewards.size() >= 2, ErrorKind::InvalidGroup, "local normalization needs a group of at least 2");
  require(eps >= 0.0, ErrorKind::InvalidParameter, "eps must be >= 0");
  const double m = mean(group_rewards);
  const double sd = stddev(group_rewards, kind);
  std::vector<double> out(group_rewards.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double centered = group_rewards[i] - m;
    // 0/0 from a constant group with eps = 0 is defined as no signal.
    out[i] = centered == 0.0 ? 0.0 : centered / (sd + eps);
  }
  return out;
}

std::vector<double> adv_rpp_token(double terminal_reward, std::span<const double> per_token_kl, double beta) {
  require(!per_token_kl.empty(), ErrorKind::InvalidDimension, "per-token KL must be non-empty");
  require(beta >= 0.0, ErrorKind::InvalidParameter, "beta must be >= 0");
  std::vector<double> out(per_token_kl.size());
  double suffix = 0.0;
  for (std::size_t t = per_token_kl.size(); t-- > 0;) {
    suffix += per_token_kl[t];
    out[t] = terminal_reward - beta * suffix;
  }
  return out;
}

std::vector<double> normalize_global(std::span<const double> entries, double eps, StdKind kind) {
  require(!entries.empty(), ErrorKind::InvalidParameter, "global normalization over an empty batch");
  require(eps >= 0.0, ErrorKind::InvalidParameter, "eps must be >= 0");
  const double m = mean(entries);
  const double sd = entries.size() >= 2 || kind == StdKind::Population ? stddev(entries, kind) : 0.0;
  std::vector<double> out(entries.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double centered = entries[i] - m;
    out[i] = centered == 0.0 ? 0.0 : centered / (sd + eps);
  }
  return out;
}

AdvantageVector normalize_global(const AdvantageVector& batch, double eps, StdKind kind) {
  std::vector<double> flat;
  for (const auto& row : batch) flat.insert(flat.end(), row.begin(), row.end());
  const auto normed = normalize_global(flat, eps, kind);
  AdvantageVector out;
  out.reserve(batch.size());
  std::size_t pos = 0;
  for (const auto& row : batch) {
    out.emplace_back(normed.begin() + static_cast<std::ptrdiff_t>(pos),
                     normed.begin() + static_cast<std::ptrdiff_t>(pos + row.size()));
    pos += row.size();
  }
  return out;
}

std::vector<double> adv_rpp_baseline(std::span<const double> rewards, const GroupLayout& layout, double eps,
                                     StdKind kind) {
  require(layout.group_size() >= 2, ErrorKind::InvalidGroup, "group-mean baseline needs k >= 2");
  require(rewards.size() == layout.rows(), ErrorKind::InvalidDimension, "rewards do not match group layout");
  const std::size_t k = layout.group_size();
  std::vector<double> centered(rewards.size());
  for (std::size_t g = 0; g < layout.groups(); ++g) {
    const auto group = rewards.subspan(g * k, k);
    const double m = mean(group);
    for (std::size_t i = 0; i < k; ++i) centered[g * k + i] = group[i] - m;
  }
  return normalize_global(centered, eps, kind);
}

std::vector<double> broadcast_terminal(double advantage, std::size_t length) {
  require(length >= 1, ErrorKind::InvalidDimension, "length must be >= 1");
  std::vector<double> out(length, 0.0);
  out.back() = advantage;
  return out;
}

std::vector<double> broadcast_uniform(double advantage, std::size_t length) {
  require(length >= 1, ErrorKind::InvalidDimension, "length must be >= 1");
  return std::vector<double>(length, advantage);
}

}  // namespace advlab
