#include "advlab/config.hpp"

#include <cmath>
#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>

#include "advlab/csv.hpp"
#include "advlab/error.hpp"

namespace advlab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
  throw Error(ErrorKind::Config, "key '" + key + "': expected " + expected + ", got '" + value + "'");
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) bad_value(key, v, "a finite number");
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

std::size_t to_count(const std::string& key, const std::string& v) {
  const long long x = to_int(key, v);
  if (x < 0) bad_value(key, v, "a non-negative integer");
  return static_cast<std::size_t>(x);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(key, v, "an unsigned integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

template <typename Fn>
auto wrap_config(Fn fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) throw;
    throw Error(ErrorKind::Config, e.detail());
  }
}

struct Key {
  const char* section;
  const char* name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define COUNT_KEY(sec, field, member)                                                                 \
  Key { sec, #field, [](ExperimentConfig& c, const std::string& v) { c.member.field = to_count(#field, v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.member.field); } }
#define REAL_KEY(sec, field, member)                                                                   \
  Key { sec, #field, [](ExperimentConfig& c, const std::string& v) { c.member.field = to_double(#field, v); }, \
        [](const ExperimentConfig& c) { return format_exact(c.member.field); } }
#define SEED_KEY(sec, field, member)                                                                 \
  Key { sec, #field, [](ExperimentConfig& c, const std::string& v) { c.member.field = to_u64(#field, v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.member.field); } }

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = {
      Key{"train", "estimator",
          [](ExperimentConfig& c, const std::string& v) { c.train.estimator = estimator_from_string(v); },
          [](const ExperimentConfig& c) { return to_string(c.train.estimator); }},
      COUNT_KEY("train", group_size, train),
      COUNT_KEY("train", batch_size, train),
      COUNT_KEY("train", inner_epochs, train),
      COUNT_KEY("train", minibatch_size, train),
      REAL_KEY("train", step_size, train),
      REAL_KEY("train", momentum, train),
      REAL_KEY("train", clip_eps, train),
      REAL_KEY("train", kl_beta, train),
      REAL_KEY("train", kl_lambda, train),
      Key{"train", "kl_estimator",
          [](ExperimentConfig& c, const std::string& v) { c.train.kl_estimator = kl_estimator_from_string(v); },
          [](const ExperimentConfig& c) { return to_string(c.train.kl_estimator); }},
      REAL_KEY("train", reward_clip_lo, train),
      REAL_KEY("train", reward_clip_hi, train),
      REAL_KEY("train", reward_scale, train),
      Key{"train", "token_advantage",
          [](ExperimentConfig& c, const std::string& v) { c.train.token_advantage = token_advantage_from_string(v); },
          [](const ExperimentConfig& c) { return to_string(c.train.token_advantage); }},
      REAL_KEY("train", local_eps, train),
      REAL_KEY("train", global_eps, train),
      Key{"train", "std_kind",
          [](ExperimentConfig& c, const std::string& v) {
            if (v == "population") c.train.std_kind = StdKind::Population;
            else if (v == "sample") c.train.std_kind = StdKind::Sample;
            else bad_value("std_kind", v, "population or sample");
          },
          [](const ExperimentConfig& c) {
            return std::string(c.train.std_kind == StdKind::Population ? "population" : "sample");
          }},
      REAL_KEY("train", gamma, train),
      REAL_KEY("train", gae_lambda, train),
      REAL_KEY("train", critic_lr, train),
      REAL_KEY("train", init_scale, train),
      COUNT_KEY("train", steps, train),
      SEED_KEY("train", seed, train),
      COUNT_KEY("train", eval_n, train),
      COUNT_KEY("train", eval_samples, train),
      COUNT_KEY("train", eval_every, train),

      Key{"env", "family", [](ExperimentConfig& c, const std::string& v) { c.env.family = v; },
          [](const ExperimentConfig& c) { return c.env.family; }},
      Key{"env", "prompts", [](ExperimentConfig& c, const std::string& v) { c.env.prompts = v; },
          [](const ExperimentConfig& c) { return c.env.prompts; }},
      COUNT_KEY("env", train_prompts, env),
      COUNT_KEY("env", heldout_prompts, env),
      COUNT_KEY("env", vocab, env),
      COUNT_KEY("env", max_len, env),
      COUNT_KEY("env", target_len, env),
      COUNT_KEY("env", shared_prefix, env),
      Key{"env", "reward_scheme",
          [](ExperimentConfig& c, const std::string& v) { c.env.reward_scheme = reward_scheme_from_string(v); },
          [](const ExperimentConfig& c) { return to_string(c.env.reward_scheme); }},
      REAL_KEY("env", sigma, env),
      REAL_KEY("env", theta_spread, env),
      Key{"env", "stop_token",
          [](ExperimentConfig& c, const std::string& v) { c.env.stop_token = to_int("stop_token", v); },
          [](const ExperimentConfig& c) { return std::to_string(c.env.stop_token); }},
      Key{"env", "conditioning",
          [](ExperimentConfig& c, const std::string& v) {
            if (v == "position") c.env.conditioning = Conditioning::Position;
            else if (v == "history") c.env.conditioning = Conditioning::History;
            else bad_value("conditioning", v, "position or history");
          },
          [](const ExperimentConfig& c) {
            return std::string(c.env.conditioning == Conditioning::Position ? "position" : "history");
          }},
      Key{"env", "shared_table",
          [](ExperimentConfig& c, const std::string& v) { c.env.shared_table = to_bool("shared_table", v); },
          [](const ExperimentConfig& c) { return std::string(c.env.shared_table ? "true" : "false"); }},
      REAL_KEY("env", length_base, env),
      REAL_KEY("env", length_bonus, env),
      COUNT_KEY("env", length_cap, env),
      SEED_KEY("env", env_seed, env),

      COUNT_KEY("probe", trials, probe),
      SEED_KEY("probe", probe_seed, probe),

      COUNT_KEY("eval", final_eval_samples, eval),
      COUNT_KEY("eval", final_pass_repeats, eval),
  };
  return keys;
}

#undef COUNT_KEY
#undef REAL_KEY
#undef SEED_KEY

const Key* find_key(const std::string& section, const std::string& name) {
  for (const auto& k : registry()) {
    if (name == k.name && (section.empty() || section == k.section)) return &k;
  }
  return nullptr;
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  std::string section, name = key;
  if (auto dot = key.find('.'); dot != std::string::npos) {
    section = key.substr(0, dot);
    name = key.substr(dot + 1);
  }
  const Key* k = find_key(section, name);
  if (!k) throw Error(ErrorKind::Config, "unknown config key '" + key + "'");
  wrap_config([&] {
    k->set(*this, trim(value));
    return 0;
  });
}

void ExperimentConfig::write(std::ostream& out) const {
  std::string current;
  for (const auto& k : registry()) {
    if (current != k.section) {
      if (!current.empty()) out << '\n';
      current = k.section;
      out << '[' << current << "]\n";
    }
    out << k.name << " = " << k.get(*this) << '\n';
  }
}

void ExperimentConfig::validate() const {
  wrap_config([&] {
    train.validate();
    return 0;
  });
  auto fail = [](const std::string& m) { throw Error(ErrorKind::Config, m); };
  if (env.family != "exact" && env.family != "parity" && env.family != "gaussian" && env.family != "length" &&
      env.family != "file")
    fail("env.family must be one of exact, parity, gaussian, length, file");
  if (env.family == "file" && env.prompts.empty()) fail("env.family = file needs env.prompts");
  if (env.vocab < 1 || env.max_len < 1) fail("env.vocab and env.max_len must be >= 1");
  if (env.sigma <= 0.0) fail("env.sigma must be > 0");
  if (env.stop_token >= static_cast<long long>(env.vocab)) fail("env.stop_token must be < vocab");
  if (env.family != "file" && env.train_prompts < 1) fail("env.train_prompts must be >= 1");
  if (probe.trials < 1) fail("probe.trials must be >= 1");
  if (eval.final_eval_samples < 1 || eval.final_pass_repeats < 1) fail("eval counts must be >= 1");
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t.front() == '#' || t.front() == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw Error(ErrorKind::Config, "line " + std::to_string(lineno) + ": malformed section");
      section = trim(t.substr(1, t.size() - 2));
      bool known = false;
      for (const auto& k : registry()) known = known || section == k.section;
      if (!known) throw Error(ErrorKind::Config, "line " + std::to_string(lineno) + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::Config, "line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (!find_key(section, key)) {
      throw Error(ErrorKind::Config, "line " + std::to_string(lineno) + ": unknown key '" + key + "'" +
                                         (section.empty() ? "" : " in [" + section + "]"));
    }
    cfg.set(section.empty() ? key : section + "." + key, value);
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot open config file " + path.string());
  return parse_config(in);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : registry()) out.push_back(std::string(k.section) + "." + k.name);
  return out;
}

Environment build_environment(const EnvConfig& cfg) {
  return wrap_config([&] {
    Environment env;
    env.scheme = cfg.reward_scheme;
    env.sigma = cfg.sigma;
    if (cfg.stop_token >= 0) env.stop_token = static_cast<Token>(cfg.stop_token);
    if (cfg.family == "file") {
      env.prompts = load_prompt_set(cfg.prompts);
    } else if (cfg.family == "exact") {
      env.prompts = make_exact_match_prompts(cfg.train_prompts, cfg.heldout_prompts, cfg.vocab, cfg.target_len,
                                             cfg.shared_prefix, cfg.env_seed);
    } else if (cfg.family == "parity") {
      env.prompts = make_parity_prompts(cfg.train_prompts, cfg.heldout_prompts, cfg.env_seed);
    } else if (cfg.family == "gaussian") {
      env.prompts = make_gaussian_prompts(cfg.train_prompts, cfg.heldout_prompts, cfg.theta_spread, cfg.env_seed);
    } else if (cfg.family == "length") {
      env.prompts = make_length_prompts(cfg.train_prompts, cfg.heldout_prompts, cfg.length_base, cfg.length_bonus,
                                        cfg.length_cap);
    } else {
      throw Error(ErrorKind::Config, "unknown env family '" + cfg.family + "'");
    }
    for (const auto& p : env.prompts.all()) {
      for (Token t : p.target) {
        if (t < 0 || static_cast<std::size_t>(t) >= cfg.vocab)
          throw Error(ErrorKind::Config, "prompt " + std::to_string(p.id) + " has a target token outside the vocabulary");
      }
    }
    return env;
  });
}

PolicyShape policy_shape(const EnvConfig& cfg, const Environment& env) {
  return PolicyShape{env.prompts.size(), cfg.max_len, cfg.vocab, cfg.conditioning, cfg.shared_table};
}

}  // namespace advlab
