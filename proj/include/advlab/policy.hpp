#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "advlab/random.hpp"

namespace advlab {

using Token = int;

/// What a context-state is keyed on besides the prompt.
enum class Conditioning {
  Position,  ///< (prompt, position)
  History,   ///< (prompt, position, previous token); position 0 uses a start symbol
};

/// Dimensions of a tabular softmax policy.
///
/// Parameters are stored as rows of `vocab` logits. The first
/// `prompts * contexts()` rows are per-prompt; when `shared_table` is set, a
/// further `contexts()` rows hold prompt-independent logits that are added to
/// every prompt's row for the same context.
struct PolicyShape {
  std::size_t prompts = 1;
  std::size_t max_len = 1;
  std::size_t vocab = 2;
  Conditioning conditioning = Conditioning::Position;
  bool shared_table = false;

  std::size_t contexts() const {
    return conditioning == Conditioning::Position ? max_len : max_len * (vocab + 1);
  }
  std::size_t state_count() const { return prompts * contexts(); }
  std::size_t rows() const { return state_count() + (shared_table ? contexts() : 0); }
  std::size_t parameter_count() const { return rows() * vocab; }

  bool operator==(const PolicyShape&) const = default;
};

/// A context-state: the prompt plus its context slot.
struct State {
  std::size_t prompt = 0;
  std::size_t context = 0;
};

class PolicyParameters {
 public:
  explicit PolicyParameters(PolicyShape shape);  // all-zero logits
  PolicyParameters(PolicyShape shape, std::vector<double> values);

  const PolicyShape& shape() const { return shape_; }
  std::size_t vocab_size() const { return shape_.vocab; }
  std::size_t max_len() const { return shape_.max_len; }
  std::size_t prompts() const { return shape_.prompts; }

  /// State visited at `position` after emitting `previous` (ignored for
  /// position conditioning, nullopt at position 0).
  State state(std::size_t prompt, std::size_t position, std::optional<Token> previous) const;

  /// Row index of a state's per-prompt logits, and of its shared row.
  std::size_t row_of(const State& s) const { return s.prompt * shape_.contexts() + s.context; }
  std::optional<std::size_t> shared_row_of(const State& s) const {
    if (!shape_.shared_table) return std::nullopt;
    return shape_.state_count() + s.context;
  }

  /// Effective logits of a state (per-prompt row plus shared row).
  std::vector<double> logits(const State& s) const;
  std::vector<double> log_probs(const State& s) const;
  std::vector<double> probs(const State& s) const;

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  std::span<double> row(std::size_t r) { return std::span<double>(values_).subspan(r * shape_.vocab, shape_.vocab); }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values_).subspan(r * shape_.vocab, shape_.vocab);
  }

  bool operator==(const PolicyParameters&) const = default;

 private:
  PolicyShape shape_;
  std::vector<double> values_;
};

/// Gradient (or any direction) in parameter space, laid out like the policy.
class GradAccumulator {
 public:
  explicit GradAccumulator(const PolicyShape& shape) : shape_(shape), values_(shape.parameter_count(), 0.0) {}

  const PolicyShape& shape() const { return shape_; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values_).subspan(r * shape_.vocab, shape_.vocab);
  }

  void add_scaled(const GradAccumulator& other, double scale);
  void scale(double s);
  double max_abs() const;

  bool operator==(const GradAccumulator&) const = default;

 private:
  PolicyShape shape_;
  std::vector<double> values_;
};

struct Trajectory {
  std::size_t prompt_id = 0;
  std::vector<Token> tokens;
  std::vector<double> logp_sample;  ///< under the policy that generated it
  std::vector<double> logp_ref;     ///< under the frozen reference policy

  std::size_t size() const { return tokens.size(); }
};

PolicyParameters init_policy(const PolicyShape& shape, double init_scale, std::uint64_t seed);
PolicyParameters init_policy(std::size_t prompts, std::size_t max_len, std::size_t vocab, double init_scale,
                             std::uint64_t seed);

/// Autoregressive sampling; stops after emitting `stop_token` or at max_len.
/// logp_ref is evaluated under `reference`.
Trajectory sample_trajectory(const PolicyParameters& sampler, const PolicyParameters& reference,
                             std::size_t prompt_id, Rng& rng, std::optional<Token> stop_token = std::nullopt);
/// As above with the sampler doubling as reference.
Trajectory sample_trajectory(const PolicyParameters& sampler, std::size_t prompt_id, Rng& rng,
                             std::optional<Token> stop_token = std::nullopt);

/// Argmax decoding (lowest token index wins ties).
Trajectory greedy_trajectory(const PolicyParameters& policy, const PolicyParameters& reference,
                             std::size_t prompt_id, std::optional<Token> stop_token = std::nullopt);

/// Sequence of states visited by a token sequence.
std::vector<State> visited_states(const PolicyParameters& params, std::size_t prompt_id,
                                  std::span<const Token> tokens);

std::vector<double> sequence_log_probs(const PolicyParameters& params, std::size_t prompt_id,
                                       std::span<const Token> tokens);
std::vector<double> sequence_log_probs(const PolicyParameters& params, const Trajectory& traj);

/// grad += sum_t weights[t] * d/dθ log π(tokens[t] | state_t).
void accumulate_score(const PolicyParameters& params, std::size_t prompt_id, std::span<const Token> tokens,
                      std::span<const double> weights, GradAccumulator& grad);

/// Score of the whole sequence: onehot(a) - softmax at every visited state.
GradAccumulator log_prob_gradient(const PolicyParameters& params, const Trajectory& traj);

/// logits + step_size * direction (ascent).
PolicyParameters apply_update(const PolicyParameters& params, const GradAccumulator& direction, double step_size);

void save_checkpoint(const PolicyParameters& params, std::ostream& out);
PolicyParameters load_checkpoint(std::istream& in);
void save_checkpoint(const PolicyParameters& params, const std::filesystem::path& path);
PolicyParameters load_checkpoint(const std::filesystem::path& path);

}  // namespace advlab
