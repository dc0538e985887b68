#include <gtest/gtest.h>

#include <fstream>
#include "json.hpp"
#include <sstream>

#include "acconet/cli.hpp"
#include "support.hpp"

namespace acconet {
namespace {

namespace fs = std::filesystem;
using testing_support::TempDir;

struct CliRun {
  int code;
  std::string out, err;
};

CliRun run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "acconet");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string value_of(const std::string& table, const std::string& key) {
  std::istringstream in(table);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    std::string k = line.substr(0, eq);
    k.erase(k.find_last_not_of(' ') + 1);
    if (k == key) return line.substr(eq + 3);
  }
  return "<missing>";
}

TEST(CliTest, DryRunPrintsResolvedConfigAndFingerprint) {
  const CliRun r = run_cli({"train", "--dry-run", "--micro", "--lr", "0.002", "--set", "seed=17"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(value_of(r.out, "micro"), "true");
  EXPECT_EQ(value_of(r.out, "seed"), "17");
  EXPECT_EQ(std::stod(value_of(r.out, "lr")), 0.002);
  EXPECT_NE(value_of(r.out, "fingerprint"), "<missing>");
  EXPECT_NE(value_of(r.out, "batch_size"), "<missing>");
}

TEST(CliTest, FingerprintFollowsTheNetworkLayout) {
  const CliRun a = run_cli({"train", "--dry-run", "--micro"});
  const CliRun b = run_cli({"train", "--dry-run", "--micro", "--lr", "0.5"});
  const CliRun c = run_cli({"train", "--dry-run", "--micro", "--ablation", "Baseline"});
  EXPECT_EQ(value_of(a.out, "fingerprint"), value_of(b.out, "fingerprint"));
  EXPECT_NE(value_of(a.out, "fingerprint"), value_of(c.out, "fingerprint"));
}

TEST(CliTest, ConfigFileIsReadAndFlagsWin) {
  TempDir dir("cli_cfg");
  const fs::path cfg = dir.path() / "run.cfg";
  std::ofstream(cfg) << "# comment\nseed = 5\nbatch_size = 3   # trailing\n";
  const CliRun r = run_cli({"train", "--dry-run", "--config", cfg.string(), "--seed", "9"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(value_of(r.out, "seed"), "9");
  EXPECT_EQ(value_of(r.out, "batch_size"), "3");
}

TEST(CliTest, UnknownConfigKeyNamesKeyFileAndLine) {
  TempDir dir("cli_bad");
  const fs::path cfg = dir.path() / "bad.cfg";
  std::ofstream(cfg) << "seed = 1\n\nlearning_rate = 0.1\n";
  const CliRun r = run_cli({"train", "--dry-run", "--config", cfg.string()});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("learning_rate"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("bad.cfg:3"), std::string::npos) << r.err;
}

TEST(CliTest, BadValuesAndUnknownSetKeysFail) {
  const CliRun a = run_cli({"train", "--dry-run", "--set", "warmup=3"});
  EXPECT_NE(a.code, 0);
  EXPECT_NE(a.err.find("warmup"), std::string::npos);
  const CliRun b = run_cli({"train", "--dry-run", "--batch-size", "zero"});
  EXPECT_NE(b.code, 0);
  EXPECT_NE(b.err.find("batch_size"), std::string::npos);
  const CliRun c = run_cli({"train", "--dry-run", "--ablation", "w/ XY"});
  EXPECT_NE(c.code, 0);
  EXPECT_NE(run_cli({"train", "--dry-run", "--set", "novalue"}).code, 0);
}

TEST(CliTest, MissingSubcommandAndDataRootFail) {
  EXPECT_NE(run_cli({}).code, 0);
  const CliRun r = run_cli({"train", "--micro"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("data_root"), std::string::npos);
}

TEST(CliTest, EvalOfGroundTruthAgainstItselfIsPerfect) {
  TempDir dir("cli_eval");
  testing_support::write_synthetic_split(dir.path() / "data", "test", 3, 32, 4);
  const fs::path gt = dir.path() / "data" / "test" / "gt";
  const fs::path out = dir.path() / "run";
  const CliRun r = run_cli({"eval", "--pred", gt.string(), "--gt", gt.string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(out / "report.json");
  ASSERT_TRUE(in);
  const nlohmann::json j = nlohmann::json::parse(in);
  EXPECT_EQ(j["images"], 3);
  EXPECT_NEAR(j["metrics"]["mae"].get<double>(), 0.0, 1e-12);
  EXPECT_NEAR(j["metrics"]["s_measure"].get<double>(), 1.0, 1e-9);
  EXPECT_TRUE(fs::exists(out / "pr_curve.csv"));
}

TEST(CliTest, EvalDefaultsToTheConfiguredSplit) {
  TempDir dir("cli_eval_split");
  testing_support::write_synthetic_split(dir.path() / "data", "test", 2, 32, 6);
  const fs::path gt = dir.path() / "data" / "test" / "gt";
  const fs::path out = dir.path() / "run";
  fs::create_directories(out);
  fs::copy(gt, out / "predictions");
  const CliRun r = run_cli({"eval", "--data-root", (dir.path() / "data").string(), "--out",
                         out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(out / "report.json"));
}

TEST(CliTest, PlotPrWritesImageAndCombinedRows) {
  TempDir dir("cli_plot");
  testing_support::write_synthetic_split(dir.path() / "data", "test", 2, 32, 8);
  const fs::path gt = dir.path() / "data" / "test" / "gt";
  ASSERT_EQ(run_cli({"eval", "--pred", gt.string(), "--gt", gt.string(), "--out",
                     (dir.path() / "a").string()}).code, 0);
  const fs::path png = dir.path() / "curves.png";
  const CliRun r = run_cli({"plot-pr", (dir.path() / "a" / "pr_curve.csv").string(), "-o", png.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_GT(fs::file_size(png), 0u);
  std::ifstream csv(dir.path() / "curves.csv");
  ASSERT_TRUE(csv);
  int rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  EXPECT_GE(rows, 256);
}

TEST(CliTest, TrainThenInferThenEvalEndToEnd) {
  TempDir dir("cli_e2e");
  const fs::path data = dir.path() / "data";
  testing_support::write_synthetic_split(data, "train", 2, 64, 12);
  testing_support::write_synthetic_split(data, "test", 2, 64, 13);
  const fs::path out = dir.path() / "run";
  const std::vector<std::string> common = {"--micro", "--data-root", data.string(), "--out",
                                           out.string(), "--batch-size", "2", "--epochs", "1",
                                           "--set", "augment=false"};
  std::vector<std::string> train = {"train"};
  train.insert(train.end(), common.begin(), common.end());
  const CliRun t = run_cli(train);
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_TRUE(fs::exists(out / "config.txt"));
  std::vector<std::string> infer = {"infer"};
  infer.insert(infer.end(), common.begin(), common.end());
  const CliRun i = run_cli(infer);
  ASSERT_EQ(i.code, 0) << i.err;
  EXPECT_NE(i.out.find("wrote 2 maps"), std::string::npos) << i.out;
  const CliRun e = run_cli({"eval", "--data-root", data.string(), "--out", out.string()});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_TRUE(fs::exists(out / "report.json"));
}

}  // namespace
}  // namespace acconet
