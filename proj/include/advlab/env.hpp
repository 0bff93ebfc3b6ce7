#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advlab/policy.hpp"
#include "advlab/random.hpp"

namespace advlab {

enum class RewardScheme { ZeroOne, PlusMinusOne, Continuous };

enum class PromptFamily {
  ExactMatch,    ///< success iff the target appears as a contiguous run
  Parity,        ///< success iff the token sum has the required parity
  Gaussian,      ///< reward = theta + N(0, sigma^2)
  LengthBiased,  ///< reward = base + bonus * min(length, cap)
};

enum class Split { Train, HeldOut };

struct Prompt {
  std::size_t id = 0;
  PromptFamily family = PromptFamily::ExactMatch;
  std::vector<Token> target;   // ExactMatch
  bool even = true;            // Parity
  double theta = 0.0;          // Gaussian
  double base = 0.0;           // LengthBiased
  double bonus = 0.0;          // LengthBiased
  std::size_t cap = 0;         // LengthBiased
  Split split = Split::Train;
};

class PromptSet {
 public:
  PromptSet() = default;
  /// Prompts must carry ids 0..n-1 (any order); stored sorted by id.
  explicit PromptSet(std::vector<Prompt> prompts);

  std::size_t size() const { return prompts_.size(); }
  const Prompt& operator[](std::size_t id) const { return prompts_[id]; }
  std::span<const Prompt> all() const { return prompts_; }
  std::vector<std::size_t> ids(Split split) const;

 private:
  std::vector<Prompt> prompts_;
};

/// Prompt-set text format, one prompt per line:
///   id, family, params, split
/// family: exact | parity | gaussian | length
/// params: exact -> space-separated target tokens; parity -> even | odd;
///         gaussian -> theta; length -> "base bonus cap"
/// split:  train | heldout
/// Blank lines and lines starting with '#' are ignored.
PromptSet parse_prompt_set(std::istream& in);
PromptSet load_prompt_set(const std::filesystem::path& path);
void write_prompt_set(const PromptSet& set, std::ostream& out);

/// Exact-match prompts with distinct targets of length `target_len`. The first
/// `shared_prefix` target tokens are common to every prompt; the remaining
/// suffixes are distinct, so train and held-out targets are disjoint.
PromptSet make_exact_match_prompts(std::size_t train, std::size_t heldout, std::size_t vocab,
                                   std::size_t target_len, std::size_t shared_prefix, std::uint64_t seed);
PromptSet make_parity_prompts(std::size_t train, std::size_t heldout, std::uint64_t seed);
PromptSet make_gaussian_prompts(std::size_t train, std::size_t heldout, double theta_spread, std::uint64_t seed);
PromptSet make_length_prompts(std::size_t train, std::size_t heldout, double base, double bonus, std::size_t cap);

double gaussian_reward(const Prompt& prompt, double sigma, Rng& rng);
bool rule_success(const Prompt& prompt, std::span<const Token> tokens);
double rule_reward(const Prompt& prompt, std::span<const Token> tokens, RewardScheme scheme);
double length_biased_reward(std::span<const Token> tokens, double base, double per_token_bonus, std::size_t cap);

/// Reward source bound to a prompt set.
struct Environment {
  PromptSet prompts;
  RewardScheme scheme = RewardScheme::ZeroOne;
  double sigma = 1.0;
  std::optional<Token> stop_token;

  /// Terminal reward of a response; rng is only consumed by Gaussian prompts.
  double reward(std::size_t prompt_id, std::span<const Token> tokens, Rng& rng) const;
  /// Pass/fail outcome used by pass@n. Gaussian prompts succeed on a positive
  /// reward, length-biased prompts on any positive bonus.
  bool success(std::size_t prompt_id, std::span<const Token> tokens, Rng& rng) const;
};

/// Fraction of prompts in `split` solved by at least one of n samples. Sample
/// j of prompt p always uses the stream derive_seed(seed, {p, j}), so the
/// result is non-decreasing in n for a fixed seed.
double evaluate_pass_at_n(const PolicyParameters& params, const Environment& env, Split split, std::size_t n,
                          std::uint64_t seed);
/// Mean terminal reward over `samples` draws per prompt in `split`.
double evaluate_mean_reward(const PolicyParameters& params, const Environment& env, Split split,
                            std::size_t samples, std::uint64_t seed);

std::string to_string(RewardScheme scheme);
RewardScheme reward_scheme_from_string(const std::string& s);

}  // namespace advlab
