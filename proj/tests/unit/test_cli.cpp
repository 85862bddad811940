#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ctgrpo/cli.hpp"
#include "ctgrpo/reward.hpp"
#include "support.hpp"

namespace ctgrpo {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli({}).code, kExitInvalid);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitInvalid);
  EXPECT_EQ(cli({"forge", "synth"}).code, kExitInvalid);  // --out missing
  const CliRun r = cli({"sft", "--set", "sft.lr=abc", "--data", "x", "--checkpoint-out", "y"});
  EXPECT_EQ(r.code, kExitInvalid);
  EXPECT_NE(r.err.find("sft.lr"), std::string::npos);
}

TEST(Cli, HelpOnEverySubcommand) {
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
  for (std::vector<std::string> sub : {std::vector<std::string>{"forge", "synth"}, {"forge", "build"}, {"sft"},
                                       {"grpo-train"}, {"eval"}, {"ablate"}, {"score-file"}}) {
    sub.push_back("--help");
    const CliRun r = cli(sub);
    EXPECT_EQ(r.code, kExitOk) << sub[0];
    EXPECT_FALSE(r.out.empty());
  }
}

TEST(Cli, MissingInputIsAnError) {
  testing::TempDir dir("cli_missing");
  const CliRun r = cli({"eval", "--data", (dir / "none.jsonl").string(), "--checkpoint", (dir / "c.bin").string(),
                     "--report", (dir / "r.csv").string()});
  EXPECT_NE(r.code, kExitOk);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, ScoreFile) {
  testing::TempDir dir("cli_score");
  {
    std::ofstream in(dir / "in.jsonl");
    in << R"({"tokens": [3, 14, 4, 5, 9, 6, 2], "gt": 2})" << "\n"
       << R"({"tokens": ["<think>", "</think>", "<answer>", "</answer>"], "gt": 0})" << "\n";
  }
  const CliRun r = cli({"score-file", "--in", (dir / "in.jsonl").string(), "--out", (dir / "out.jsonl").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::istringstream lines(slurp(dir / "out.jsonl"));
  std::string line;
  std::vector<nlohmann::json> rows;
  while (std::getline(lines, line)) rows.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(rows.size(), 2u);
  const std::vector<TokenId> first{3, 14, 4, 5, 9, 6, 2};
  const auto expected = score_tokens(first, 2);
  EXPECT_EQ(rows[0]["total"].get<double>(), expected.total);
  EXPECT_EQ(rows[0]["correctness"].get<double>(), expected.correctness);

  {
    std::ofstream in(dir / "bad.jsonl");
    in << R"({"tokens": [99], "gt": 0})" << "\n";
  }
  EXPECT_EQ(cli({"score-file", "--in", (dir / "bad.jsonl").string(), "--out", (dir / "o2.jsonl").string()}).code,
            kExitInvalid);
}

TEST(Cli, PipelineWithManifestsAndReproducibleRerun) {
  testing::TempDir dir("cli_pipe");
  const std::string cohort = (dir / "cohort").string(), data = (dir / "data").string();
  const std::string records = data + "/records.jsonl";
  const std::string sft_ckpt = (dir / "sft.ckpt").string(), rl_ckpt = (dir / "rl.ckpt").string();
  const std::string report = (dir / "eval.csv").string();
  const std::vector<std::string> small{"--set", "synth.size=256", "--set", "synth.max_slices=12"};

  auto with = [&](std::vector<std::string> a, bool synth_opts = false) {
    if (synth_opts) a.insert(a.end(), small.begin(), small.end());
    return cli(a);
  };
  CliRun r = with({"forge", "synth", "--cases", "30", "--seed", "3", "--out", cohort}, true);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(fs::exists(fs::path(cohort) / "run_manifest.kv"));
  r = cli({"forge", "build", "--in", cohort, "--out", data});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(fs::exists(fs::path(data) / "run_manifest.kv"));
  r = cli({"sft", "--data", records, "--checkpoint-out", sft_ckpt, "--set", "sft.epochs=1", "--set", "sft.lr=0.5",
           "--metrics", (dir / "sft.csv").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(fs::exists(sft_ckpt + ".manifest"));
  r = cli({"grpo-train", "--data", records, "--checkpoint-in", sft_ckpt, "--checkpoint-out", rl_ckpt, "--set",
           "grpo.steps=5", "--threads", "2"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(fs::exists(rl_ckpt + ".manifest"));
  r = cli({"eval", "--data", records, "--checkpoint", rl_ckpt, "--report", report, "--mode", "forced-think"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(fs::exists(report + ".manifest"));
  EXPECT_NE(slurp(report).find("forced-think,overall"), std::string::npos);

  // Re-running each stage from its manifest reproduces the outputs byte for byte.
  const std::string records_before = slurp(records), sft_before = slurp(sft_ckpt), rl_before = slurp(rl_ckpt),
                    report_before = slurp(report);
  fs::remove_all(data);
  r = cli({"forge", "build", "--config", (dir / "cohort" / "run_manifest.kv").string(), "--in", cohort, "--out",
           data});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(slurp(records), records_before);
  fs::remove(sft_ckpt);
  ASSERT_EQ(cli({"sft", "--config", sft_ckpt + ".manifest"}).code, kExitOk);
  EXPECT_EQ(slurp(sft_ckpt), sft_before);
  fs::remove(rl_ckpt);
  ASSERT_EQ(cli({"grpo-train", "--config", rl_ckpt + ".manifest", "--threads", "1"}).code, kExitOk);
  EXPECT_EQ(slurp(rl_ckpt), rl_before);
  fs::remove(report);
  ASSERT_EQ(cli({"eval", "--config", report + ".manifest"}).code, kExitOk);
  EXPECT_EQ(slurp(report), report_before);
}

}  // namespace
}  // namespace ctgrpo
