#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "advlab/stats.hpp"

namespace advlab {

enum class EstimatorKind { GAE, ReMax, RLOO, GRPOLocal, RPlusPlus, RPlusPlusBaseline };

std::string to_string(EstimatorKind kind);
EstimatorKind estimator_from_string(const std::string& s);
/// RLOO, GRPOLocal and RPlusPlusBaseline need k >= 2.
bool needs_groups(EstimatorKind kind);

/// Batch rows grouped by prompt: rows [g*k, (g+1)*k) belong to group g.
class GroupLayout {
 public:
  GroupLayout(std::vector<std::size_t> group_prompts, std::size_t group_size);

  std::size_t group_size() const { return k_; }
  std::size_t groups() const { return prompts_.size(); }
  std::size_t rows() const { return prompts_.size() * k_; }
  std::size_t prompt_of(std::size_t row) const { return prompts_.at(row / k_); }
  std::size_t group_of(std::size_t row) const { return row / k_; }
  std::size_t index_in_group(std::size_t row) const { return row % k_; }

 private:
  std::vector<std::size_t> prompts_;
  std::size_t k_;
};

/// Per-trajectory, per-token advantages.
using AdvantageVector = std::vector<std::vector<double>>;

/// Backward GAE recursion with a terminal bootstrap of zero.
std::vector<double> adv_gae(std::span<const double> rewards, std::span<const double> values, double gamma,
                            double lambda);

double adv_remax(double reward, double greedy_reward);

/// Leave-one-out baseline.
std::vector<double> adv_rloo(std::span<const double> group_rewards);

/// Group z-score; `kind` selects the std convention (population by default).
std::vector<double> adv_grpo_local(std::span<const double> group_rewards, double eps,
                                   StdKind kind = StdKind::Population);

/// Terminal reward minus beta times the suffix sum of per-token KL.
std::vector<double> adv_rpp_token(double terminal_reward, std::span<const double> per_token_kl, double beta);

/// z-score over every entry, reduced left to right.
std::vector<double> normalize_global(std::span<const double> entries, double eps,
                                     StdKind kind = StdKind::Population);
/// Same, with statistics over every token of every trajectory.
AdvantageVector normalize_global(const AdvantageVector& batch, double eps, StdKind kind = StdKind::Population);

/// Group-mean subtraction followed by global z-scoring of the centered values.
std::vector<double> adv_rpp_baseline(std::span<const double> rewards, const GroupLayout& layout, double eps,
                                     StdKind kind = StdKind::Population);

/// Zeros except the final position, which carries `advantage`.
std::vector<double> broadcast_terminal(double advantage, std::size_t length);

/// The same scalar at every position (reward-to-go with gamma = 1).
std::vector<double> broadcast_uniform(double advantage, std::size_t length);

}  // namespace advlab
