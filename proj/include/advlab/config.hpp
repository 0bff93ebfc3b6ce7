#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "advlab/env.hpp"
#include "advlab/policy.hpp"
#include "advlab/trainer.hpp"

namespace advlab {

/// Environment selection. `family = file` reads `prompts`; the other
/// families are generated from the counts below.
struct EnvConfig {
  std::string family = "exact";
  std::string prompts;  ///< prompt-set file, used when family = file
  std::size_t train_prompts = 8;
  std::size_t heldout_prompts = 8;
  std::size_t vocab = 4;
  std::size_t max_len = 4;
  std::size_t target_len = 4;
  std::size_t shared_prefix = 0;
  RewardScheme reward_scheme = RewardScheme::ZeroOne;
  double sigma = 1.0;
  double theta_spread = 1.0;
  long long stop_token = -1;  ///< negative = none
  Conditioning conditioning = Conditioning::Position;
  bool shared_table = false;
  double length_base = 0.0;
  double length_bonus = 0.1;
  std::size_t length_cap = 4;
  std::uint64_t env_seed = 0;

  bool operator==(const EnvConfig&) const = default;
};

struct ProbeConfig {
  std::size_t trials = 1'000'000;
  std::uint64_t probe_seed = 0;

  bool operator==(const ProbeConfig&) const = default;
};

/// Final-policy evaluation used by compare summaries.
struct FinalEvalConfig {
  std::size_t final_eval_samples = 256;  ///< samples per prompt for mean reward
  std::size_t final_pass_repeats = 64;   ///< independent pass@n repetitions averaged

  bool operator==(const FinalEvalConfig&) const = default;
};

/// Flat `key = value` configuration with `[section]` headers. Sections are
/// train, env, probe and eval; every key has a default and unknown keys are
/// rejected.
struct ExperimentConfig {
  TrainConfig train;
  EnvConfig env;
  ProbeConfig probe;
  FinalEvalConfig eval;

  bool operator==(const ExperimentConfig&) const = default;

  /// Applies one `key=value` (bare key or section.key).
  void set(const std::string& key, const std::string& value);
  /// Writes every key in canonical section order; parse() of the output
  /// reproduces this config exactly.
  void write(std::ostream& out) const;
  void validate() const;
};

ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Names of all known keys as section.key.
std::vector<std::string> config_keys();

Environment build_environment(const EnvConfig& cfg);
PolicyShape policy_shape(const EnvConfig& cfg, const Environment& env);

}  // namespace advlab
