#include "advlab/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "advlab/error.hpp"
#include "advlab/parallel.hpp"
#include "advlab/stats.hpp"

namespace advlab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, sep)) out.push_back(trim(field));
  return out;
}

std::string family_name(PromptFamily f) {
  switch (f) {
    case PromptFamily::ExactMatch: return "exact";
    case PromptFamily::Parity: return "parity";
    case PromptFamily::Gaussian: return "gaussian";
    case PromptFamily::LengthBiased: return "length";
  }
  return "?";
}

double parse_double(const std::string& s, const std::string& ctx) {
  std::istringstream in(s);
  in.imbue(std::locale::classic());
  double v = 0.0;
  in >> v;
  require(!in.fail() && in.eof(), ErrorKind::Config, ctx + ": expected a number, got '" + s + "'");
  return v;
}

std::size_t parse_count(const std::string& s, const std::string& ctx) {
  std::istringstream in(s);
  long long v = -1;
  in >> v;
  require(!in.fail() && in.eof() && v >= 0, ErrorKind::Config, ctx + ": expected a count, got '" + s + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace

PromptSet::PromptSet(std::vector<Prompt> prompts) : prompts_(std::move(prompts)) {
  std::sort(prompts_.begin(), prompts_.end(), [](const Prompt& a, const Prompt& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < prompts_.size(); ++i) {
    require(prompts_[i].id == i, ErrorKind::InvalidParameter, "prompt ids must be exactly 0..n-1");
  }
}

std::vector<std::size_t> PromptSet::ids(Split split) const {
  std::vector<std::size_t> out;
  for (const auto& p : prompts_)
    if (p.split == split) out.push_back(p.id);
  return out;
}

PromptSet parse_prompt_set(std::istream& in) {
  std::vector<Prompt> prompts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const std::string ctx = "prompt line " + std::to_string(lineno);
    auto fields = split_fields(t, ',');
    require(fields.size() == 4, ErrorKind::Config, ctx + ": expected 'id, family, params, split'");
    Prompt p;
    p.id = parse_count(fields[0], ctx);
    const std::string& fam = fields[1];
    const std::string& params = fields[2];
    if (fam == "exact") {
      p.family = PromptFamily::ExactMatch;
      std::istringstream ps(params);
      std::string tok;
      while (ps >> tok) p.target.push_back(static_cast<Token>(parse_count(tok, ctx)));
      require(!p.target.empty(), ErrorKind::Config, ctx + ": empty target");
    } else if (fam == "parity") {
      p.family = PromptFamily::Parity;
      require(params == "even" || params == "odd", ErrorKind::Config, ctx + ": parity must be even or odd");
      p.even = params == "even";
    } else if (fam == "gaussian") {
      p.family = PromptFamily::Gaussian;
      p.theta = parse_double(params, ctx);
    } else if (fam == "length") {
      p.family = PromptFamily::LengthBiased;
      auto parts = split_fields(params, ' ');
      parts.erase(std::remove(parts.begin(), parts.end(), std::string{}), parts.end());
      require(parts.size() == 3, ErrorKind::Config, ctx + ": length params are 'base bonus cap'");
      p.base = parse_double(parts[0], ctx);
      p.bonus = parse_double(parts[1], ctx);
      p.cap = parse_count(parts[2], ctx);
      require(p.bonus >= 0.0, ErrorKind::Config, ctx + ": bonus must be >= 0");
    } else {
      throw Error(ErrorKind::Config, ctx + ": unknown family '" + fam + "'");
    }
    if (fields[3] == "train") {
      p.split = Split::Train;
    } else if (fields[3] == "heldout") {
      p.split = Split::HeldOut;
    } else {
      throw Error(ErrorKind::Config, ctx + ": split must be train or heldout");
    }
    prompts.push_back(std::move(p));
  }
  require(!prompts.empty(), ErrorKind::Config, "prompt set is empty");
  try {
    return PromptSet(std::move(prompts));
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, e.detail());
  }
}

PromptSet load_prompt_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Config, "cannot open prompt set " + path.string());
  return parse_prompt_set(in);
}

void write_prompt_set(const PromptSet& set, std::ostream& out) {
  out.imbue(std::locale::classic());
  out.precision(17);
  for (const auto& p : set.all()) {
    out << p.id << ", " << family_name(p.family) << ", ";
    switch (p.family) {
      case PromptFamily::ExactMatch:
        for (std::size_t i = 0; i < p.target.size(); ++i) out << (i ? " " : "") << p.target[i];
        break;
      case PromptFamily::Parity: out << (p.even ? "even" : "odd"); break;
      case PromptFamily::Gaussian: out << p.theta; break;
      case PromptFamily::LengthBiased: out << p.base << ' ' << p.bonus << ' ' << p.cap; break;
    }
    out << ", " << (p.split == Split::Train ? "train" : "heldout") << '\n';
  }
}

PromptSet make_exact_match_prompts(std::size_t train, std::size_t heldout, std::size_t vocab,
                                   std::size_t target_len, std::size_t shared_prefix, std::uint64_t seed) {
  require(vocab >= 1 && target_len >= 1, ErrorKind::InvalidDimension, "vocab and target_len must be >= 1");
  require(shared_prefix < target_len, ErrorKind::InvalidParameter, "shared prefix must be shorter than the target");
  const std::size_t total = train + heldout;
  require(total >= 1, ErrorKind::InvalidParameter, "need at least one prompt");
  const std::size_t suffix_len = target_len - shared_prefix;
  double combos = std::pow(static_cast<double>(vocab), static_cast<double>(suffix_len));
  require(combos >= static_cast<double>(total), ErrorKind::InvalidParameter,
          "not enough distinct targets for the requested prompt count");
  Rng rng(seed);
  std::vector<Token> prefix(shared_prefix);
  for (auto& t : prefix) t = static_cast<Token>(rng.index(vocab));

  std::vector<std::vector<Token>> suffixes;
  if (combos <= 4096.0) {
    const auto n = static_cast<std::size_t>(combos);
    std::vector<std::size_t> codes(n);
    for (std::size_t i = 0; i < n; ++i) codes[i] = i;
    std::shuffle(codes.begin(), codes.end(), rng.engine());
    for (std::size_t i = 0; i < total; ++i) {
      std::vector<Token> s(suffix_len);
      std::size_t c = codes[i];
      for (std::size_t j = 0; j < suffix_len; ++j) {
        s[suffix_len - 1 - j] = static_cast<Token>(c % vocab);
        c /= vocab;
      }
      suffixes.push_back(std::move(s));
    }
  } else {
    std::set<std::vector<Token>> seen;
    while (suffixes.size() < total) {
      std::vector<Token> s(suffix_len);
      for (auto& t : s) t = static_cast<Token>(rng.index(vocab));
      if (seen.insert(s).second) suffixes.push_back(std::move(s));
    }
  }

  std::vector<Prompt> prompts;
  for (std::size_t i = 0; i < total; ++i) {
    Prompt p;
    p.id = i;
    p.family = PromptFamily::ExactMatch;
    p.target = prefix;
    p.target.insert(p.target.end(), suffixes[i].begin(), suffixes[i].end());
    p.split = i < train ? Split::Train : Split::HeldOut;
    prompts.push_back(std::move(p));
  }
  return PromptSet(std::move(prompts));
}

PromptSet make_parity_prompts(std::size_t train, std::size_t heldout, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Prompt> prompts;
  for (std::size_t i = 0; i < train + heldout; ++i) {
    Prompt p;
    p.id = i;
    p.family = PromptFamily::Parity;
    p.even = rng.uniform() < 0.5;
    p.split = i < train ? Split::Train : Split::HeldOut;
    prompts.push_back(p);
  }
  return PromptSet(std::move(prompts));
}

PromptSet make_gaussian_prompts(std::size_t train, std::size_t heldout, double theta_spread, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Prompt> prompts;
  for (std::size_t i = 0; i < train + heldout; ++i) {
    Prompt p;
    p.id = i;
    p.family = PromptFamily::Gaussian;
    p.theta = theta_spread > 0.0 ? rng.uniform(-theta_spread, theta_spread) : 0.0;
    p.split = i < train ? Split::Train : Split::HeldOut;
    prompts.push_back(p);
  }
  return PromptSet(std::move(prompts));
}

PromptSet make_length_prompts(std::size_t train, std::size_t heldout, double base, double bonus, std::size_t cap) {
  std::vector<Prompt> prompts;
  for (std::size_t i = 0; i < train + heldout; ++i) {
    Prompt p;
    p.id = i;
    p.family = PromptFamily::LengthBiased;
    p.base = base;
    p.bonus = bonus;
    p.cap = cap;
    p.split = i < train ? Split::Train : Split::HeldOut;
    prompts.push_back(p);
  }
  return PromptSet(std::move(prompts));
}

double gaussian_reward(const Prompt& prompt, double sigma, Rng& rng) {
  require(sigma > 0.0, ErrorKind::InvalidParameter, "sigma must be > 0");
  return prompt.theta + rng.normal(0.0, sigma);
}

bool rule_success(const Prompt& prompt, std::span<const Token> tokens) {
  switch (prompt.family) {
    case PromptFamily::ExactMatch: {
      if (prompt.target.empty() || tokens.size() < prompt.target.size()) return false;
      return std::search(tokens.begin(), tokens.end(), prompt.target.begin(), prompt.target.end()) != tokens.end();
    }
    case PromptFamily::Parity: {
      long long sum = 0;
      for (Token t : tokens) sum += t;
      return (sum % 2 == 0) == prompt.even;
    }
    default: throw Error(ErrorKind::InvalidParameter, "prompt family has no rule");
  }
}

double rule_reward(const Prompt& prompt, std::span<const Token> tokens, RewardScheme scheme) {
  const bool ok = rule_success(prompt, tokens);
  switch (scheme) {
    case RewardScheme::ZeroOne: return ok ? 1.0 : 0.0;
    case RewardScheme::PlusMinusOne: return ok ? 1.0 : -1.0;
    case RewardScheme::Continuous: {
      if (ok || prompt.family != PromptFamily::ExactMatch) return ok ? 1.0 : 0.0;
      // Partial credit: share of target positions matched from the start.
      std::size_t hits = 0;
      for (std::size_t i = 0; i < prompt.target.size() && i < tokens.size(); ++i) hits += tokens[i] == prompt.target[i];
      return static_cast<double>(hits) / static_cast<double>(prompt.target.size());
    }
  }
  return 0.0;
}

double length_biased_reward(std::span<const Token> tokens, double base, double per_token_bonus, std::size_t cap) {
  require(per_token_bonus >= 0.0, ErrorKind::InvalidParameter, "per-token bonus must be >= 0");
  return base + per_token_bonus * static_cast<double>(std::min(tokens.size(), cap));
}

double Environment::reward(std::size_t prompt_id, std::span<const Token> tokens, Rng& rng) const {
  require(prompt_id < prompts.size(), ErrorKind::InvalidParameter, "prompt id out of range");
  const Prompt& p = prompts[prompt_id];
  switch (p.family) {
    case PromptFamily::Gaussian: return gaussian_reward(p, sigma, rng);
    case PromptFamily::LengthBiased: return length_biased_reward(tokens, p.base, p.bonus, p.cap);
    default: return rule_reward(p, tokens, scheme);
  }
}

bool Environment::success(std::size_t prompt_id, std::span<const Token> tokens, Rng& rng) const {
  const Prompt& p = prompts[prompt_id];
  switch (p.family) {
    case PromptFamily::Gaussian: return gaussian_reward(p, sigma, rng) > 0.0;
    case PromptFamily::LengthBiased: return length_biased_reward(tokens, p.base, p.bonus, p.cap) > p.base;
    default: return rule_success(p, tokens);
  }
}

double evaluate_pass_at_n(const PolicyParameters& params, const Environment& env, Split split, std::size_t n,
                          std::uint64_t seed) {
  require(n >= 1, ErrorKind::InvalidParameter, "pass@n needs n >= 1");
  const auto ids = env.prompts.ids(split);
  require(!ids.empty(), ErrorKind::InvalidParameter, "pass@n over an empty split");
  std::vector<char> solved(ids.size(), 0);
  parallel_for(ids.size(), [&](std::size_t i) {
    for (std::size_t j = 0; j < n && !solved[i]; ++j) {
      Rng rng(derive_seed(seed, {ids[i], j}));
      const auto traj = sample_trajectory(params, ids[i], rng, env.stop_token);
      if (env.success(ids[i], traj.tokens, rng)) solved[i] = 1;
    }
  });
  double count = 0.0;
  for (char s : solved) count += s;
  return count / static_cast<double>(ids.size());
}

double evaluate_mean_reward(const PolicyParameters& params, const Environment& env, Split split,
                            std::size_t samples, std::uint64_t seed) {
  require(samples >= 1, ErrorKind::InvalidParameter, "need at least one evaluation sample");
  const auto ids = env.prompts.ids(split);
  require(!ids.empty(), ErrorKind::InvalidParameter, "evaluation over an empty split");
  std::vector<double> per_prompt(ids.size(), 0.0);
  parallel_for(ids.size(), [&](std::size_t i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < samples; ++j) {
      Rng rng(derive_seed(seed, {ids[i], j}));
      const auto traj = sample_trajectory(params, ids[i], rng, env.stop_token);
      sum += env.reward(ids[i], traj.tokens, rng);
    }
    per_prompt[i] = sum / static_cast<double>(samples);
  });
  return mean(per_prompt);
}

std::string to_string(RewardScheme scheme) {
  switch (scheme) {
    case RewardScheme::ZeroOne: return "zero_one";
    case RewardScheme::PlusMinusOne: return "plus_minus_one";
    case RewardScheme::Continuous: return "continuous";
  }
  return "?";
}

RewardScheme reward_scheme_from_string(const std::string& s) {
  if (s == "zero_one" || s == "01") return RewardScheme::ZeroOne;
  if (s == "plus_minus_one" || s == "pm1") return RewardScheme::PlusMinusOne;
  if (s == "continuous") return RewardScheme::Continuous;
  throw Error(ErrorKind::Config, "unknown reward scheme '" + s + "'");
}

}  // namespace advlab
