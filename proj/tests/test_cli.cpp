#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "prism/cli.hpp"
#include "test_util.hpp"

using namespace prism;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    unsetenv("PRISM_THREADS");
    nlohmann::json cfg = {
        {"generator", {{"domains", 2}, {"per_cell", 10}, {"window_len", 16}, {"channels", 4}, {"num_classes", 3}}},
        {"tde", {{"init_epochs", 10}, {"epochs", 2}, {"encoder_dims", {6}}, {"finetune_passes", 3}}},
        {"nid", {{"k", 3}}}};
    std::ofstream(dir_ / "cfg.json") << cfg.dump();
  }
  void TearDown() override { unsetenv("PRISM_THREADS"); }

  int run(std::vector<std::string> args) {
    std::vector<std::string> full{"prism", "--config", dir_ / "cfg.json"};
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : full) argv.push_back(a.c_str());
    out_.str("");
    err_.str("");
    return cli::run(static_cast<int>(argv.size()), argv.data(), out_, err_);
  }

  std::string gen(const std::string& sub, std::uint64_t seed = 1) {
    const std::string d = dir_ / sub;
    EXPECT_EQ(run({"--seed", std::to_string(seed), "--out-dir", d, "gen"}), 0) << err_.str();
    return d + "/dataset.jsonl";
  }

  static std::size_t lines(const std::string& path) {
    std::ifstream in(path);
    std::size_t n = 0;
    for (std::string l; std::getline(in, l);) ++n;
    return n;
  }

  prism::testing::TempDir dir_{"cli"};
  std::ostringstream out_, err_;
};

}  // namespace

TEST_F(CliTest, GenWritesDatasetAndConfig) {
  const std::string path = gen("g");
  EXPECT_NE(out_.str().find("N=60 domains=2 classes=3"), std::string::npos);
  EXPECT_EQ(load_jsonl(path).size(), 60u);
  const auto cfg = nlohmann::json::parse(prism::testing::slurp(dir_ / "g/config.json"));
  EXPECT_EQ(cfg["command"], "gen");
  EXPECT_EQ(cfg["seed"], 1);
  EXPECT_EQ(cfg["tde"]["seed"], 1);
}

TEST_F(CliTest, GenIsByteIdenticalForSameSeed) {
  const std::string a = gen("a", 4), b = gen("b", 4), c = gen("c", 5);
  EXPECT_EQ(prism::testing::slurp(a), prism::testing::slurp(b));
  EXPECT_NE(prism::testing::slurp(a), prism::testing::slurp(c));
}

TEST_F(CliTest, NidExitCodeFollowsVerdict) {
  const std::string data = gen("n");
  EXPECT_EQ(run({"--out-dir", dir_ / "n0", "--nid-threshold", "0", "nid", data}), cli::kExitNonIid);
  EXPECT_NE(out_.str().find("verdict=non-iid"), std::string::npos);
  EXPECT_EQ(run({"--out-dir", dir_ / "n1", "--nid-threshold", "1e9", "nid", data}), cli::kExitOk);
  const auto rep = nlohmann::json::parse(prism::testing::slurp(dir_ / "n1/nid.json")).get<NidReport>();
  EXPECT_EQ(rep.ni_values.size(), 3u);
  EXPECT_FALSE(rep.is_non_iid);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run({}), cli::kExitUsage);
  EXPECT_EQ(run({"nid", dir_ / "missing.jsonl"}), cli::kExitUsage);
  EXPECT_EQ(run({"--epochs", "0", "gen"}), cli::kExitUsage);
  EXPECT_EQ(run({"--bogus", "gen"}), cli::kExitUsage);
  EXPECT_EQ(run({"--k-clips", "1", "--out-dir", dir_ / "k", "gen"}), cli::kExitUsage);
  EXPECT_EQ(run({"--help"}), cli::kExitOk);
}

TEST_F(CliTest, MineWritesArtifactsAndEvalReadsThem) {
  const std::string data = gen("m");
  const std::string d = dir_ / "mine";
  ASSERT_EQ(run({"--out-dir", d, "--force-tde", "--epochs", "1", "--n-domains", "2", "mine", data}), 0) << err_.str();
  EXPECT_EQ(lines(d + "/trace.csv"), 2u);
  for (const char* f : {"pack.json", "partition.json", "report.json", "nid.json", "loss.svg", "test.jsonl", "config.json"})
    EXPECT_TRUE(std::filesystem::exists(d + "/" + f)) << f;
  EXPECT_EQ(load_pack(d + "/pack.json").n(), 2);

  const std::string e = dir_ / "eval";
  ASSERT_EQ(run({"--out-dir", e, "eval", d + "/pack.json", d + "/test.jsonl"}), 0) << err_.str();
  EXPECT_NE(out_.str().find("N=12 "), std::string::npos);
  EXPECT_EQ(lines(e + "/predictions.csv"), 13u);
  EXPECT_TRUE(std::filesystem::exists(e + "/report.csv"));
}

TEST_F(CliTest, MineFallsBackToSingleModelWhenIid) {
  const std::string data = gen("iid");
  const std::string d = dir_ / "iid-out";
  ASSERT_EQ(run({"--out-dir", d, "--nid-threshold", "1e9", "--no-plot", "mine", data}), 0) << err_.str();
  EXPECT_EQ(load_pack(d + "/pack.json").n(), 1);
  EXPECT_FALSE(std::filesystem::exists(d + "/loss.svg"));
}

TEST_F(CliTest, SweepRowsPerValueAndSeed) {
  const std::string data = gen("s");
  const std::string d = dir_ / "sweep";
  ASSERT_EQ(run({"--out-dir", d, "--seeds", "1,2", "sweep", data, "--param", "alpha", "--values", "0,0.01,0.1"}), 0)
      << err_.str();
  EXPECT_EQ(lines(d + "/sweep.csv"), 7u);
  EXPECT_TRUE(std::filesystem::exists(d + "/sweep.svg"));
  EXPECT_EQ(run({"--out-dir", d, "sweep", data, "--param", "alpha"}), cli::kExitUsage);
  EXPECT_EQ(run({"--out-dir", d, "sweep", data, "--param", "depth", "--values", "1"}), cli::kExitUsage);
  EXPECT_EQ(run({"--out-dir", d, "sweep", data, "--param", "n", "--values", "1.5"}), cli::kExitUsage);
}

TEST_F(CliTest, CompareIsIndependentOfThreadCount) {
  const std::string data = gen("c");
  setenv("PRISM_THREADS", "1", 1);
  ASSERT_EQ(run({"--out-dir", dir_ / "c1", "--seeds", "3,4", "--n-domains", "2", "compare", data}), 0) << err_.str();
  setenv("PRISM_THREADS", "2", 1);
  ASSERT_EQ(run({"--out-dir", dir_ / "c2", "--seeds", "3,4", "--n-domains", "2", "compare", data}), 0) << err_.str();
  const std::string csv = prism::testing::slurp(dir_ / "c1/compare.csv");
  EXPECT_EQ(csv, prism::testing::slurp(dir_ / "c2/compare.csv"));
  EXPECT_EQ(lines(dir_ / "c1/compare.csv"), 1u + 5u * 2u);
  EXPECT_EQ(csv.rfind("method,seed,accuracy,macro_f1,acc_0,acc_1\np0,3,", 0), 0u);
}

TEST_F(CliTest, BadThreadBudgetIsUsageError) {
  const std::string data = gen("t");
  setenv("PRISM_THREADS", "many", 1);
  EXPECT_EQ(run({"--out-dir", dir_ / "t1", "--seeds", "1", "compare", data}), cli::kExitUsage);
  EXPECT_NE(err_.str().find("PRISM_THREADS"), std::string::npos);
}

TEST_F(CliTest, BadSeedListIsUsageError) {
  const std::string data = gen("b");
  EXPECT_EQ(run({"--out-dir", dir_ / "b1", "--seeds", "1,x", "compare", data}), cli::kExitUsage);
}

TEST(CliConfig, JsonRoundTrip) {
  cli::RunConfig c;
  c.seed = 9;
  c.tde.alpha = 0.25;
  c.seeds = {1, 2};
  c.sweep = {"margin", {0.5, 1.0}};
  c.domain_specs = shifted_domain_specs(FixtureOptions{});
  const cli::RunConfig back = cli::config_from_json(cli::to_json(c));
  EXPECT_EQ(back.seed, 9u);
  EXPECT_EQ(back.tde.alpha, 0.25);
  EXPECT_EQ(back.seeds, c.seeds);
  EXPECT_EQ(back.sweep.values, c.sweep.values);
  ASSERT_EQ(back.domain_specs.size(), c.domain_specs.size());
  EXPECT_TRUE(back.domain_specs[2].channel_mix == c.domain_specs[2].channel_mix);
  EXPECT_THROW(cli::config_from_json(nlohmann::json::array()), SchemaError);
}
