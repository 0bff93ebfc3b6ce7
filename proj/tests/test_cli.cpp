#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "advlab/cli.hpp"
#include "advlab/csv.hpp"
#include "advlab/error.hpp"
#include "advlab/parallel.hpp"

using namespace advlab;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("advlab_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

CliOptions small_run(const fs::path& out) {
  CliOptions o;
  o.out = out;
  o.sets = {"steps=6", "batch_size=16", "minibatch_size=8", "group_size=4", "estimator=RPlusPlusBaseline",
            "train_prompts=4", "heldout_prompts=4", "vocab=3", "max_len=3", "target_len=3", "final_eval_samples=8",
            "final_pass_repeats=2"};
  return o;
}

int run_binary(const std::string& args) {
  const int status = std::system((std::string(ADVLAB_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, MissingConfigIsConfigErrorWithPath) {
  CliOptions o;
  o.config = "/nonexistent/exp.cfg";
  try {
    resolve_config(o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
    EXPECT_NE(std::string(e.what()).find("/nonexistent/exp.cfg"), std::string::npos);
  }
  std::ostringstream log;
  o.out = fresh_dir("missing");
  EXPECT_EQ(cmd_train(o, log), kExitConfig);
  EXPECT_NE(log.str().find("/nonexistent/exp.cfg"), std::string::npos);
}

TEST(Cli, ZeroStepsWritesHeaderOnly) {
  CliOptions o;
  o.out = fresh_dir("zero");
  o.sets = {"steps=0"};
  std::ostringstream log;
  ASSERT_EQ(cmd_train(o, log), kExitOk);
  EXPECT_EQ(slurp(o.out / "metrics.csv"), std::string(kMetricsHeader) + "\n");
  EXPECT_TRUE(fs::exists(o.out / "policy.ckpt"));
}

TEST(Cli, TrainIsByteIdenticalAndSnapshotRoundTrips) {
  std::ostringstream log;
  auto a = small_run(fresh_dir("det_a"));
  auto b = small_run(fresh_dir("det_b"));
  a.seed = b.seed = 77;
  set_worker_override(1);
  ASSERT_EQ(cmd_train(a, log), kExitOk) << log.str();
  set_worker_override(4);
  ASSERT_EQ(cmd_train(b, log), kExitOk) << log.str();
  set_worker_override(0);
  EXPECT_EQ(slurp(a.out / "metrics.csv"), slurp(b.out / "metrics.csv"));
  EXPECT_EQ(slurp(a.out / "policy.ckpt"), slurp(b.out / "policy.ckpt"));

  const auto table = read_csv_strict(a.out / "metrics.csv");
  EXPECT_EQ(table.rows.size(), 6u);

  const auto snapshot = load_config(a.out / "config.resolved");
  EXPECT_EQ(snapshot, resolve_config(a));
  EXPECT_EQ(snapshot.train.seed, 77u);

  CliOptions again;
  again.config = a.out / "config.resolved";
  again.out = fresh_dir("det_c");
  ASSERT_EQ(cmd_train(again, log), kExitOk);
  EXPECT_EQ(slurp(a.out / "metrics.csv"), slurp(again.out / "metrics.csv"));
}

TEST(Cli, RuntimeAbortExitCode) {
  auto o = small_run(fresh_dir("nan"));
  o.sets.push_back("reward_scale=1e308");
  std::ostringstream log;
  EXPECT_EQ(cmd_train(o, log), kExitRuntime);
}

TEST(Cli, CompareLayoutAndSummary) {
  auto o = small_run(fresh_dir("compare"));
  std::ostringstream log;
  ASSERT_EQ(cmd_compare(o, {"GRPOLocal", "RPlusPlusBaseline"}, {1, 2, 3, 4, 5}, log), kExitOk) << log.str();
  const auto summary = read_csv_strict(o.out / "compare" / "summary.csv");
  EXPECT_EQ(summary.rows.size(), 10u);
  EXPECT_EQ(summary.header,
            (std::vector<std::string>{"estimator", "seed", "final_train_reward", "final_heldout_reward",
                                      "final_heldout_pass_at_n", "final_kl_ref"}));
  EXPECT_TRUE(fs::exists(o.out / "compare" / "GRPOLocal" / "3" / "metrics.csv"));
  EXPECT_TRUE(fs::exists(o.out / "compare" / "plots" / "reward_RPlusPlusBaseline_5.dat"));
  const auto long_table = read_csv_strict(o.out / "compare" / "long.csv");
  EXPECT_EQ(long_table.rows.size(), 10u * 6u);
  EXPECT_EQ(long_table.header[0], "estimator");
  EXPECT_EQ(long_table.header[2], "step");
}

TEST(Cli, CompareNeedsTwoEstimators) {
  auto o = small_run(fresh_dir("compare_one"));
  std::ostringstream log;
  EXPECT_EQ(cmd_compare(o, {"GRPOLocal"}, {1}, log), kExitConfig);
  EXPECT_EQ(cmd_compare(o, {"GRPOLocal", "GRPOLocal"}, {1}, log), kExitConfig);
  EXPECT_EQ(cmd_compare(o, {"GRPOLocal", "Nope"}, {1}, log), kExitConfig);
}

TEST(Cli, UnderpoweredVerifyExitsFour) {
  CliOptions o;
  o.out = fresh_dir("verify_small");
  o.sets = {"trials=100"};
  std::ostringstream log;
  EXPECT_EQ(cmd_verify("bias", o, log), kExitProbeFailed);
  EXPECT_NE(log.str().find("inconclusive"), std::string::npos);
  const auto table = read_csv_strict(o.out / "verify.csv");
  EXPECT_EQ(table.header,
            (std::vector<std::string>{"probe", "param_json", "estimate", "stderr", "reference", "verdict"}));
  EXPECT_GT(table.rows.size(), 10u);
}

TEST(Cli, VerifyGradientsPasses) {
  CliOptions o;
  o.out = fresh_dir("verify_grad");
  std::ostringstream log;
  EXPECT_EQ(cmd_verify("gradients", o, log), kExitOk) << log.str();
  EXPECT_EQ(cmd_verify("everything", o, log), kExitConfig);
}

TEST(Cli, BinaryExitCodes) {
  const auto out = fresh_dir("binary");
  EXPECT_EQ(run_binary("--out " + out.string() + " --set steps=0 train"), 0);
  EXPECT_EQ(run_binary("--out " + out.string() + " --config /nonexistent.cfg train"), 2);
  EXPECT_EQ(run_binary("--out " + out.string() + " --set bogus=1 train"), 2);
  EXPECT_EQ(run_binary("frobnicate"), 2);
  EXPECT_EQ(run_binary("--out " + out.string() + " compare --estimators RLOO"), 2);
  EXPECT_EQ(run_binary("--out " + out.string() + " --set trials=100 verify all"), 4);
}

TEST(Csv, StrictReader) {
  std::istringstream good("a,b\n1,\"x,y\"\n");
  const auto t = read_csv_strict(good);
  EXPECT_EQ(t.rows[0][1], "x,y");
  std::istringstream ragged("a,b\n1\n");
  EXPECT_THROW(read_csv_strict(ragged), Error);
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(1.0 / 3.0), "0.333333333");
}
