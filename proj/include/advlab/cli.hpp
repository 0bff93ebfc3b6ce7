#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "advlab/config.hpp"
#include "advlab/oracle.hpp"

namespace advlab {

enum ExitCode : int {
  kExitOk = 0,
  kExitIo = 1,
  kExitConfig = 2,
  kExitRuntime = 3,
  kExitProbeFailed = 4,
};

struct CliOptions {
  std::optional<std::filesystem::path> config;
  std::vector<std::string> sets;  ///< key=value overrides, applied in order
  std::filesystem::path out = "out";
  std::optional<std::uint64_t> seed;
};

/// Loads the config file (if any), applies overrides and --seed, validates.
ExperimentConfig resolve_config(const CliOptions& opts);

/// Final-policy evaluation: mean reward on train and held-out splits and
/// held-out pass@n averaged over independent repetitions. Falls back to the
/// train split when there is no held-out split.
struct FinalEvaluation {
  double train_reward = 0.0;
  double heldout_reward = 0.0;
  double heldout_pass_at_n = 0.0;
};
FinalEvaluation evaluate_final(const PolicyParameters& policy, const Environment& env, const ExperimentConfig& cfg);

/// One row of a verification run.
struct ProbeRow {
  std::string probe;
  std::string param_json;
  double estimate = 0.0;
  double stderr_mean = 0.0;
  std::optional<double> reference;
  Verdict verdict = Verdict::Inconclusive;
};

enum class VerifySuite { Bias, KL, Gradients, All };
VerifySuite verify_suite_from_string(const std::string& s);

std::vector<ProbeRow> run_verify_suite(VerifySuite suite, const ProbeConfig& probe);

int cmd_train(const CliOptions& opts, std::ostream& log);
int cmd_verify(const std::string& suite, const CliOptions& opts, std::ostream& log);
int cmd_compare(const CliOptions& opts, const std::vector<std::string>& estimators,
                const std::vector<std::uint64_t>& seeds, std::ostream& log);

}  // namespace advlab
