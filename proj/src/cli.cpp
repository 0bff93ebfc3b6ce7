#include "advlab/cli.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "advlab/csv.hpp"
#include "advlab/error.hpp"
#include "advlab/trainer.hpp"

namespace advlab {

namespace fs = std::filesystem;

namespace {

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Config: return kExitConfig;
    case ErrorKind::Io: return kExitIo;
    default: return kExitRuntime;
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), ErrorKind::Io, "cannot create output directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << text;
  require(static_cast<bool>(out), ErrorKind::Io, "write failed: " + path.string());
}

std::string config_text(const ExperimentConfig& cfg) {
  std::ostringstream ss;
  cfg.write(ss);
  return ss.str();
}

template <typename Fn>
int guarded(std::ostream& log, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

PolicyParameters initial_policy(const ExperimentConfig& cfg, const Environment& env) {
  return init_policy(policy_shape(cfg.env, env), cfg.train.init_scale, cfg.train.seed);
}

}  // namespace

ExperimentConfig resolve_config(const CliOptions& opts) {
  ExperimentConfig cfg;
  if (opts.config) {
    if (!fs::exists(*opts.config)) throw Error(ErrorKind::Config, "config file not found: " + opts.config->string());
    cfg = load_config(*opts.config);
  }
  for (const auto& kv : opts.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::Config, "override '" + kv + "' is not key=value");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (opts.seed) cfg.train.seed = *opts.seed;
  cfg.validate();
  if (cfg.env.family == "file" && !fs::exists(cfg.env.prompts))
    throw Error(ErrorKind::Config, "prompt set not found: " + cfg.env.prompts);
  return cfg;
}

FinalEvaluation evaluate_final(const PolicyParameters& policy, const Environment& env, const ExperimentConfig& cfg) {
  const std::uint64_t seed = derive_seed(cfg.train.seed, {0xF1A1});
  const Split heldout = env.prompts.ids(Split::HeldOut).empty() ? Split::Train : Split::HeldOut;
  FinalEvaluation f;
  f.train_reward = evaluate_mean_reward(policy, env, Split::Train, cfg.eval.final_eval_samples, seed);
  f.heldout_reward = evaluate_mean_reward(policy, env, heldout, cfg.eval.final_eval_samples, seed);
  double pass = 0.0;
  for (std::size_t rep = 0; rep < cfg.eval.final_pass_repeats; ++rep)
    pass += evaluate_pass_at_n(policy, env, heldout, cfg.train.eval_n, derive_seed(seed, {rep}));
  f.heldout_pass_at_n = pass / static_cast<double>(cfg.eval.final_pass_repeats);
  return f;
}

int cmd_train(const CliOptions& opts, std::ostream& log) {
  return guarded(log, [&] {
    const ExperimentConfig cfg = resolve_config(opts);
    const Environment env = build_environment(cfg.env);
    ensure_dir(opts.out);
    write_text(opts.out / "config.resolved", config_text(cfg));

    const PolicyParameters initial = initial_policy(cfg, env);
    MetricsCsvWriter writer(opts.out / "metrics.csv");
    const auto result = run_experiment(cfg.train, env, initial, [&](const IterationMetrics& m) { writer.write(m); });
    save_checkpoint(result.final_policy, opts.out / "policy.ckpt");
    if (!result.metrics.empty()) {
      const auto& last = result.metrics.back();
      log << "trained " << result.metrics.size() << " steps; final reward_mean " << format_number(last.reward_mean)
          << ", kl_ref " << format_number(last.kl_ref) << '\n';
    } else {
      log << "trained 0 steps\n";
    }
    return kExitOk;
  });
}

int cmd_verify(const std::string& suite_name, const CliOptions& opts, std::ostream& log) {
  return guarded(log, [&] {
    const VerifySuite suite = verify_suite_from_string(suite_name);
    const ExperimentConfig cfg = resolve_config(opts);
    ensure_dir(opts.out);
    const auto rows = run_verify_suite(suite, cfg.probe);

    std::ofstream csv(opts.out / "verify.csv");
    require(static_cast<bool>(csv), ErrorKind::Io, "cannot write " + (opts.out / "verify.csv").string());
    csv << "probe,param_json,estimate,stderr,reference,verdict\n";
    bool all_pass = true;
    log << std::left << std::setw(34) << "probe" << std::setw(17) << "estimate" << std::setw(17) << "stderr"
        << std::setw(17) << "reference"
        << "verdict\n";
    for (const auto& r : rows) {
      const std::string ref = r.reference ? format_number(*r.reference) : "";
      csv << r.probe << ',' << csv_quote(r.param_json) << ',' << format_number(r.estimate) << ','
          << format_number(r.stderr_mean) << ',' << ref << ',' << to_string(r.verdict) << '\n';
      log << std::setw(34) << r.probe << std::setw(17) << format_number(r.estimate) << std::setw(17)
          << format_number(r.stderr_mean) << std::setw(17) << (ref.empty() ? "-" : ref) << to_string(r.verdict) << "  "
          << r.param_json << '\n';
      all_pass = all_pass && r.verdict == Verdict::Pass;
    }
    require(static_cast<bool>(csv), ErrorKind::Io, "write failed: verify.csv");
    log << (all_pass ? "all probes passed\n" : "some probes did not pass\n");
    return all_pass ? kExitOk : kExitProbeFailed;
  });
}

int cmd_compare(const CliOptions& opts, const std::vector<std::string>& estimators,
                const std::vector<std::uint64_t>& seeds, std::ostream& log) {
  return guarded(log, [&] {
    std::set<std::string> distinct(estimators.begin(), estimators.end());
    if (distinct.size() < 2) throw Error(ErrorKind::Config, "compare needs at least two distinct estimators");
    const ExperimentConfig base = resolve_config(opts);
    std::vector<ExperimentConfig> runs_cfg;
    for (const auto& name : estimators) {
      ExperimentConfig c = base;
      c.train.estimator = estimator_from_string(name);
      for (auto s : seeds.empty() ? std::vector<std::uint64_t>{base.train.seed} : seeds) {
        c.train.seed = s;
        c.validate();
        runs_cfg.push_back(c);
      }
    }
    const Environment env = build_environment(base.env);
    const fs::path root = opts.out / "compare";
    ensure_dir(root / "plots");

    std::ofstream long_csv(root / "long.csv");
    std::ofstream summary(root / "summary.csv");
    require(long_csv && summary, ErrorKind::Io, "cannot write compare outputs under " + root.string());
    long_csv << "estimator,seed," << kMetricsHeader << '\n';
    summary << "estimator,seed,final_train_reward,final_heldout_reward,final_heldout_pass_at_n,final_kl_ref\n";

    log << std::left << std::setw(20) << "estimator" << std::setw(8) << "seed" << std::setw(14) << "train_reward"
        << std::setw(16) << "heldout_reward" << "heldout_pass@" << base.train.eval_n << '\n';
    for (const auto& c : runs_cfg) {
      const std::string est = to_string(c.train.estimator);
      const std::string seed = std::to_string(c.train.seed);
      const fs::path dir = root / est / seed;
      ensure_dir(dir);
      write_text(dir / "config.resolved", config_text(c));
      MetricsCsvWriter writer(dir / "metrics.csv");
      std::ofstream reward_plot(root / "plots" / ("reward_" + est + "_" + seed + ".dat"));
      std::ofstream kl_plot(root / "plots" / ("kl_" + est + "_" + seed + ".dat"));
      require(reward_plot && kl_plot, ErrorKind::Io, "cannot write plot data under " + root.string());
      reward_plot << "# step reward_mean\n";
      kl_plot << "# step kl_ref\n";
      const auto result = run_experiment(c.train, env, initial_policy(c, env), [&](const IterationMetrics& m) {
        writer.write(m);
        long_csv << est << ',' << seed << ',' << metrics_row(m) << '\n';
        reward_plot << m.step << ' ' << format_number(m.reward_mean) << '\n';
        kl_plot << m.step << ' ' << format_number(m.kl_ref) << '\n';
      });
      save_checkpoint(result.final_policy, dir / "policy.ckpt");
      const auto fin = evaluate_final(result.final_policy, env, c);
      const double kl = result.metrics.empty() ? 0.0 : result.metrics.back().kl_ref;
      summary << est << ',' << seed << ',' << format_number(fin.train_reward) << ',' << format_number(fin.heldout_reward)
              << ',' << format_number(fin.heldout_pass_at_n) << ',' << format_number(kl) << '\n';
      log << std::setw(20) << est << std::setw(8) << seed << std::setw(14) << format_number(fin.train_reward)
          << std::setw(16) << format_number(fin.heldout_reward) << format_number(fin.heldout_pass_at_n) << '\n';
    }
    require(long_csv && summary, ErrorKind::Io, "write failed under " + root.string());
    return kExitOk;
  });
}

}  // namespace advlab
