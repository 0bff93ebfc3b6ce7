#include <CLI11.hpp>
#include <iostream>

#include "advlab/cli.hpp"
#include "advlab/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Critic-free advantage estimator lab"};
  app.require_subcommand(1);

  advlab::CliOptions opts;
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "experiment config file");
  app.add_option("--set", opts.sets, "key=value override (repeatable)")->allow_extra_args(false)->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  app.add_option("--out", out_dir, "output directory");
  auto* seed_opt = app.add_option("--seed", seed, "master seed override");

  auto* train = app.add_subcommand("train", "train one estimator and write metrics and a checkpoint");

  std::string suite = "all";
  auto* verify = app.add_subcommand("verify", "run the oracle suite");
  verify->add_option("suite", suite, "bias | kl | gradients | all");

  std::vector<std::string> estimators;
  std::vector<std::uint64_t> seeds{0};
  auto* compare = app.add_subcommand("compare", "train several estimators over several seeds");
  compare->add_option("--estimators", estimators, "estimator names")->required()->delimiter(',');
  compare->add_option("--seeds", seeds, "seeds")->delimiter(',');

  for (auto* sub : {train, verify, compare}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? advlab::kExitOk : advlab::kExitConfig;
  }

  if (!config_path.empty()) opts.config = config_path;
  opts.out = out_dir;
  if (*seed_opt) opts.seed = seed;

  if (*train) return advlab::cmd_train(opts, std::cout);
  if (*verify) return advlab::cmd_verify(suite, opts, std::cout);
  return advlab::cmd_compare(opts, estimators, seeds, std::cout);
}
