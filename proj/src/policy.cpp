#include "advlab/policy.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "advlab/error.hpp"

namespace advlab {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

void validate_shape(const PolicyShape& shape) {
  require(shape.prompts >= 1, ErrorKind::InvalidDimension, "prompt count must be >= 1");
  require(shape.max_len >= 1, ErrorKind::InvalidDimension, "max_len must be >= 1");
  require(shape.vocab >= 1, ErrorKind::InvalidDimension, "vocab must be >= 1");
}

std::vector<double> log_softmax(std::span<const double> z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - zmax);
  const double lse = zmax + std::log(sum);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
  return out;
}

Token draw(std::span<const double> probs, double u) {
  double acc = 0.0;
  Token last_positive = 0;
  for (std::size_t a = 0; a < probs.size(); ++a) {
    if (probs[a] <= 0.0) continue;
    acc += probs[a];
    last_positive = static_cast<Token>(a);
    if (u < acc) return last_positive;
  }
  return last_positive;  // u landed in the rounding slack above the final sum
}

void check_tokens(const PolicyParameters& params, std::size_t prompt_id, std::span<const Token> tokens) {
  require(prompt_id < params.prompts(), ErrorKind::InvalidParameter, "prompt id out of range");
  require(tokens.size() <= params.max_len(), ErrorKind::InvalidDimension, "trajectory longer than max_len");
  for (Token t : tokens) {
    require(t >= 0 && static_cast<std::size_t>(t) < params.vocab_size(), ErrorKind::InvalidToken,
            "token " + std::to_string(t) + " outside vocabulary of size " + std::to_string(params.vocab_size()));
  }
}

constexpr std::array<char, 7> kMagic{'A', 'D', 'V', 'L', 'P', 'O', 'L'};

}  // namespace

PolicyParameters::PolicyParameters(PolicyShape shape) : shape_(shape) {
  validate_shape(shape_);
  values_.assign(shape_.parameter_count(), 0.0);
}

PolicyParameters::PolicyParameters(PolicyShape shape, std::vector<double> values)
    : shape_(shape), values_(std::move(values)) {
  validate_shape(shape_);
  require(values_.size() == shape_.parameter_count(), ErrorKind::InvalidDimension,
          "logit table size does not match shape");
  for (double v : values_) require(std::isfinite(v), ErrorKind::NonFinite, "logits must be finite");
}

State PolicyParameters::state(std::size_t prompt, std::size_t position, std::optional<Token> previous) const {
  if (shape_.conditioning == Conditioning::Position) return {prompt, position};
  const std::size_t prev = previous ? static_cast<std::size_t>(*previous) : shape_.vocab;
  return {prompt, position * (shape_.vocab + 1) + prev};
}

std::vector<double> PolicyParameters::logits(const State& s) const {
  auto own = row(row_of(s));
  std::vector<double> z(own.begin(), own.end());
  if (auto shared = shared_row_of(s)) {
    auto r = row(*shared);
    for (std::size_t a = 0; a < z.size(); ++a) z[a] += r[a];
  }
  return z;
}

std::vector<double> PolicyParameters::log_probs(const State& s) const { return log_softmax(logits(s)); }

std::vector<double> PolicyParameters::probs(const State& s) const {
  auto lp = log_probs(s);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

void GradAccumulator::add_scaled(const GradAccumulator& other, double scale) {
  require(other.shape_ == shape_, ErrorKind::InvalidDimension, "gradient shape mismatch");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += scale * other.values_[i];
}

void GradAccumulator::scale(double s) {
  for (double& v : values_) v *= s;
}

double GradAccumulator::max_abs() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

PolicyParameters init_policy(const PolicyShape& shape, double init_scale, std::uint64_t seed) {
  validate_shape(shape);
  require(init_scale >= 0.0 && std::isfinite(init_scale), ErrorKind::InvalidParameter, "init_scale must be >= 0");
  PolicyParameters params(shape);
  if (init_scale > 0.0) {
    Rng rng(seed);
    for (double& v : params.values()) v = rng.uniform(-init_scale, init_scale);
  }
  return params;
}

PolicyParameters init_policy(std::size_t prompts, std::size_t max_len, std::size_t vocab, double init_scale,
                             std::uint64_t seed) {
  return init_policy(PolicyShape{prompts, max_len, vocab}, init_scale, seed);
}

Trajectory sample_trajectory(const PolicyParameters& sampler, const PolicyParameters& reference,
                             std::size_t prompt_id, Rng& rng, std::optional<Token> stop_token) {
  require(prompt_id < sampler.prompts(), ErrorKind::InvalidParameter, "prompt id out of range");
  require(reference.shape() == sampler.shape(), ErrorKind::InvalidDimension, "reference shape mismatch");
  Trajectory traj;
  traj.prompt_id = prompt_id;
  std::optional<Token> prev;
  for (std::size_t t = 0; t < sampler.max_len(); ++t) {
    const State s = sampler.state(prompt_id, t, prev);
    const auto lp = sampler.log_probs(s);
    std::vector<double> p(lp.size());
    std::transform(lp.begin(), lp.end(), p.begin(), [](double v) { return std::exp(v); });
    const Token a = draw(p, rng.uniform());
    traj.tokens.push_back(a);
    traj.logp_sample.push_back(lp[static_cast<std::size_t>(a)]);
    traj.logp_ref.push_back(reference.log_probs(s)[static_cast<std::size_t>(a)]);
    prev = a;
    if (stop_token && a == *stop_token) break;
  }
  return traj;
}

Trajectory sample_trajectory(const PolicyParameters& sampler, std::size_t prompt_id, Rng& rng,
                             std::optional<Token> stop_token) {
  return sample_trajectory(sampler, sampler, prompt_id, rng, stop_token);
}

Trajectory greedy_trajectory(const PolicyParameters& policy, const PolicyParameters& reference,
                             std::size_t prompt_id, std::optional<Token> stop_token) {
  require(prompt_id < policy.prompts(), ErrorKind::InvalidParameter, "prompt id out of range");
  Trajectory traj;
  traj.prompt_id = prompt_id;
  std::optional<Token> prev;
  for (std::size_t t = 0; t < policy.max_len(); ++t) {
    const State s = policy.state(prompt_id, t, prev);
    const auto lp = policy.log_probs(s);
    const auto a = static_cast<Token>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    traj.tokens.push_back(a);
    traj.logp_sample.push_back(lp[static_cast<std::size_t>(a)]);
    traj.logp_ref.push_back(reference.log_probs(s)[static_cast<std::size_t>(a)]);
    prev = a;
    if (stop_token && a == *stop_token) break;
  }
  return traj;
}

std::vector<State> visited_states(const PolicyParameters& params, std::size_t prompt_id,
                                  std::span<const Token> tokens) {
  check_tokens(params, prompt_id, tokens);
  std::vector<State> states;
  states.reserve(tokens.size());
  std::optional<Token> prev;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    states.push_back(params.state(prompt_id, t, prev));
    prev = tokens[t];
  }
  return states;
}

std::vector<double> sequence_log_probs(const PolicyParameters& params, std::size_t prompt_id,
                                       std::span<const Token> tokens) {
  const auto states = visited_states(params, prompt_id, tokens);
  std::vector<double> out(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    out[t] = params.log_probs(states[t])[static_cast<std::size_t>(tokens[t])];
  }
  return out;
}

std::vector<double> sequence_log_probs(const PolicyParameters& params, const Trajectory& traj) {
  return sequence_log_probs(params, traj.prompt_id, traj.tokens);
}

void accumulate_score(const PolicyParameters& params, std::size_t prompt_id, std::span<const Token> tokens,
                      std::span<const double> weights, GradAccumulator& grad) {
  require(grad.shape() == params.shape(), ErrorKind::InvalidDimension, "gradient shape mismatch");
  require(weights.size() == tokens.size(), ErrorKind::InvalidDimension, "weights not aligned with tokens");
  const auto states = visited_states(params, prompt_id, tokens);
  const std::size_t V = params.vocab_size();
  auto g = grad.values();
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const double w = weights[t];
    if (w == 0.0) continue;
    const auto p = params.probs(states[t]);
    auto add_row = [&](std::size_t r) {
      double* dst = g.data() + r * V;
      for (std::size_t a = 0; a < V; ++a) dst[a] -= w * p[a];
      dst[static_cast<std::size_t>(tokens[t])] += w;
    };
    add_row(params.row_of(states[t]));
    if (auto shared = params.shared_row_of(states[t])) add_row(*shared);
  }
}

GradAccumulator log_prob_gradient(const PolicyParameters& params, const Trajectory& traj) {
  GradAccumulator grad(params.shape());
  const std::vector<double> ones(traj.tokens.size(), 1.0);
  accumulate_score(params, traj.prompt_id, traj.tokens, ones, grad);
  return grad;
}

PolicyParameters apply_update(const PolicyParameters& params, const GradAccumulator& direction, double step_size) {
  require(direction.shape() == params.shape(), ErrorKind::InvalidDimension, "update direction shape mismatch");
  require(std::isfinite(step_size), ErrorKind::InvalidParameter, "step size must be finite");
  PolicyParameters out = params;
  auto dst = out.values();
  auto dir = direction.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += step_size * dir[i];
  return out;
}

// Layout: four little-endian u64 header fields {magic, P, T, V}, then every
// logit row as little-endian binary64, row-major. The magic is the ASCII bytes
// "ADVLPOL" followed by a flag byte (bit 0: history conditioning, bit 1:
// shared table).
void save_checkpoint(const PolicyParameters& params, std::ostream& out) {
  const auto& shape = params.shape();
  std::array<unsigned char, 8> magic{};
  std::memcpy(magic.data(), kMagic.data(), kMagic.size());
  magic[7] = static_cast<unsigned char>((shape.conditioning == Conditioning::History ? 1 : 0) |
                                        (shape.shared_table ? 2 : 0));
  const std::array<std::uint64_t, 3> dims{shape.prompts, shape.max_len, shape.vocab};
  out.write(reinterpret_cast<const char*>(magic.data()), magic.size());
  out.write(reinterpret_cast<const char*>(dims.data()), sizeof(dims));
  const auto vals = params.values();
  out.write(reinterpret_cast<const char*>(vals.data()), static_cast<std::streamsize>(vals.size() * sizeof(double)));
  require(static_cast<bool>(out), ErrorKind::Io, "failed to write checkpoint");
}

PolicyParameters load_checkpoint(std::istream& in) {
  std::array<unsigned char, 8> magic{};
  std::array<std::uint64_t, 3> dims{};
  in.read(reinterpret_cast<char*>(magic.data()), magic.size());
  in.read(reinterpret_cast<char*>(dims.data()), sizeof(dims));
  require(static_cast<bool>(in), ErrorKind::Io, "truncated checkpoint header");
  require(std::memcmp(magic.data(), kMagic.data(), kMagic.size()) == 0 && magic[7] <= 3, ErrorKind::Io,
          "not a policy checkpoint");
  PolicyShape shape{dims[0], dims[1], dims[2], (magic[7] & 1) ? Conditioning::History : Conditioning::Position,
                    (magic[7] & 2) != 0};
  validate_shape(shape);
  std::vector<double> values(shape.parameter_count());
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
  require(static_cast<bool>(in), ErrorKind::Io, "truncated checkpoint body");
  return PolicyParameters(shape, std::move(values));
}

void save_checkpoint(const PolicyParameters& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + path.string() + " for writing");
  save_checkpoint(params, out);
}

PolicyParameters load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  return load_checkpoint(in);
}

}  // namespace advlab
