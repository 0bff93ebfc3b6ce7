#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advlab/advantage.hpp"
#include "advlab/env.hpp"
#include "advlab/klpen.hpp"
#include "advlab/policy.hpp"
#include "advlab/stats.hpp"

namespace advlab {

/// Which token positions carry the advantage.
enum class TokenAdvantageMode {
  Uniform,       ///< normalized scalar at every position (reward-to-go, gamma = 1)
  SuffixKL,      ///< r - beta * suffix KL per token, statistics over all tokens
  TerminalOnly,  ///< normalized scalar at the final position, zero elsewhere
};

std::string to_string(TokenAdvantageMode mode);
TokenAdvantageMode token_advantage_from_string(const std::string& s);

struct TrainConfig {
  EstimatorKind estimator = EstimatorKind::RPlusPlus;
  std::size_t group_size = 1;
  std::size_t batch_size = 64;  ///< trajectories per iteration
  std::size_t inner_epochs = 1;
  std::size_t minibatch_size = 64;
  double step_size = 1.0;
  double momentum = 0.0;
  double clip_eps = 0.2;
  double kl_beta = 0.01;    ///< in-reward k1 penalty (RPlusPlus, GAE)
  double kl_lambda = 0.01;  ///< separate KL loss weight (all other estimators)
  KLEstimatorKind kl_estimator = KLEstimatorKind::K2;
  double reward_clip_lo = -10.0;
  double reward_clip_hi = 10.0;
  double reward_scale = 1.0;
  TokenAdvantageMode token_advantage = TokenAdvantageMode::Uniform;
  double local_eps = 1e-4;
  double global_eps = 1e-8;
  StdKind std_kind = StdKind::Population;
  double gamma = 1.0;
  double gae_lambda = 1.0;
  double critic_lr = 0.5;
  double init_scale = 0.0;
  std::size_t steps = 100;
  std::uint64_t seed = 0;
  std::size_t eval_n = 4;        ///< n of pass@n
  std::size_t eval_samples = 4;  ///< samples per prompt for eval_reward
  std::size_t eval_every = 1;    ///< 0 disables per-iteration evaluation

  /// Throws Error(Config) describing the first violated constraint.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
  bool uses_in_reward_kl() const {
    return estimator == EstimatorKind::RPlusPlus || estimator == EstimatorKind::GAE;
  }
};

/// Tabular value estimate per context-state.
struct CriticTable {
  std::vector<double> values;
  double lr = 0.5;

  CriticTable() = default;
  CriticTable(const PolicyShape& shape, double learning_rate) : values(shape.state_count(), 0.0), lr(learning_rate) {}
};

struct IterationMetrics {
  std::size_t step = 0;
  double reward_mean = 0.0;
  double kl_ref = 0.0;
  double adv_mean = 0.0;
  double adv_std = 0.0;
  double clip_frac = 0.0;
  double eval_reward = 0.0;
  double pass_at_n = 0.0;

  bool operator==(const IterationMetrics&) const = default;
};

/// Everything that persists across outer iterations.
struct TrainerState {
  PolicyParameters policy;
  PolicyParameters reference;
  CriticTable critic;
  std::optional<GradAccumulator> velocity;
  double last_eval_reward = 0.0;
  double last_pass_at_n = 0.0;

  explicit TrainerState(PolicyParameters initial, double critic_lr = 0.5)
      : policy(initial), reference(std::move(initial)), critic(policy.shape(), critic_lr) {}
};

/// Mean over tokens of min(s*A, clip(s, 1-eps, 1+eps)*A).
double ppo_clip_objective(std::span<const double> ratios, std::span<const double> advantages, double clip_eps);

/// Per-sequence token mean, then mean over sequences.
double ppo_clip_objective(const std::vector<std::vector<double>>& ratios, const AdvantageVector& advantages,
                          double clip_eps);

/// Surrogate of a batch with ratios pi_theta / pi_sample computed from params.
double ppo_surrogate(const PolicyParameters& params, std::span<const Trajectory> batch,
                     const AdvantageVector& advantages, double clip_eps);

struct SurrogateGradient {
  GradAccumulator grad;
  std::size_t tokens = 0;
  std::size_t clipped_tokens = 0;  ///< ratio outside [1-eps, 1+eps]
};

/// Analytic gradient of ppo_surrogate.
SurrogateGradient ppo_surrogate_gradient(const PolicyParameters& params, std::span<const Trajectory> batch,
                                         const AdvantageVector& advantages, double clip_eps);

double reward_clip_scale(double raw, double clip_lo, double clip_hi, double scale);

/// One visit-averaged step per visited state: V <- V + lr * (target - V).
CriticTable train_critic_step(const CriticTable& critic, const PolicyParameters& shape_source,
                              std::span<const Trajectory> batch, const AdvantageVector& targets);

/// Seeded shuffle split into contiguous chunks of at most minibatch_size.
std::vector<std::vector<std::size_t>> minibatch_partition(std::span<const std::size_t> batch_indices,
                                                          std::size_t minibatch_size, Rng& rng);

/// Train prompts used by the groups of a given step.
std::vector<std::size_t> select_prompts(const PromptSet& prompts, std::size_t groups, std::size_t step,
                                        std::uint64_t seed);

/// One outer iteration; updates state in place and returns its metrics.
IterationMetrics run_iteration(TrainerState& state, const TrainConfig& config, const Environment& env,
                               std::size_t step);

struct ExperimentResult {
  std::vector<IterationMetrics> metrics;
  PolicyParameters final_policy;
};

using MetricsSink = std::function<void(const IterationMetrics&)>;

/// M outer iterations from `initial`; sink is invoked after each iteration.
ExperimentResult run_experiment(const TrainConfig& config, const Environment& env, const PolicyParameters& initial,
                                const MetricsSink& sink = {});

}  // namespace advlab
