// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The embedrl Authors

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "cli.hpp"

namespace fs = std::filesystem;
using embedrl::cli::run;

namespace {

const fs::path kData = EMBEDRL_TEST_DATA_DIR;

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("embedrl_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write(const std::string& name, const std::string& content) const {
    std::ofstream(dir_ / name, std::ios::binary) << content;
    return path(name);
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  static std::vector<nlohmann::json> jsonl(const std::string& text) {
    std::vector<nlohmann::json> rows;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
      if (!line.empty()) rows.push_back(nlohmann::json::parse(line));
    }
    return rows;
  }

  std::string manifest(const std::vector<std::pair<std::string, std::size_t>>& datasets, const std::string& cls) const {
    std::string text;
    for (const auto& [name, n] : datasets) {
      for (std::size_t i = 0; i < n; ++i) {
        text += R"({"id":")" + name + "-" + std::to_string(i) + R"(","dataset":")" + name +
                R"(","modality_pair":"text->image","modality_class":")" + cls + R"(","weight":1,"query_ref":"q","pos_ref":"p"})" + "\n";
      }
    }
    return write("manifest.jsonl", text);
  }

  fs::path dir_;
};

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

const std::string kGoodText = R"(<thinking>a dog {\"text_keywords\": [\"dog\"]}</thinking><rethink>sure</rethink><answer>a dog</answer>)";
const std::string kGoodImage = R"(<thinking>sky {\"bbox_2d\": [[1,2,300,400]]}</thinking><rethink>kite</rethink><answer>a kite</answer>)";

}  // namespace

TEST_F(CliTest, ValidateAllCompliant) {
  const auto corpus = write("c.jsonl", R"({"id":"a","modality":"text","raw":")" + kGoodText + "\"}\n" +
                                           R"({"id":"b","modality":"image","raw":")" + kGoodImage + "\"}\n");
  const auto r = cli({"validate", corpus});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "");
}

TEST_F(CliTest, ValidateOneBadDocument) {
  const auto corpus = write("c.jsonl", R"({"id":"a","modality":"text","raw":")" + kGoodText + "\"}\n" +
                                           R"({"id":"b","modality":"video","raw":")" + kGoodImage + "\"}\n");
  const auto r = cli({"validate", corpus, "-o", path("report.jsonl")});
  EXPECT_EQ(r.code, 1);
  const auto rows = jsonl(slurp(path("report.jsonl")));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0]["id"], "b");
  EXPECT_EQ(rows[0]["code"], "MissingRequiredCue");
  EXPECT_EQ(rows[0]["blocking"], true);
}

TEST_F(CliTest, ValidateEmptyFileAndMissingFile) {
  const auto r = cli({"validate", write("empty.jsonl", "")});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "");
  EXPECT_EQ(cli({"validate", path("nope.jsonl")}).code, 3);
  EXPECT_EQ(cli({"validate"}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
}

TEST_F(CliTest, RewardMatchesGolden) {
  const auto r = cli({"reward", (kData / "reward/rollouts.jsonl").string(), "--embeddings",
                      (kData / "reward/embeddings.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto got = jsonl(r.out);
  const auto want = jsonl(slurp((kData / "reward/golden.jsonl").string()));
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_EQ(got[i]["group"], want[i]["group"]);
    EXPECT_EQ(got[i]["rollout"], want[i]["rollout"]);
    for (const char* col : {"format", "process", "outcome", "total"}) {
      EXPECT_NEAR(got[i][col].get<double>(), want[i][col].get<double>(), 1e-12) << "row " << i << " " << col;
    }
  }
  // Same seed, same bytes.
  EXPECT_EQ(cli({"reward", (kData / "reward/rollouts.jsonl").string(), "--embeddings",
                 (kData / "reward/embeddings.json").string()}).out,
            r.out);
}

TEST_F(CliTest, RewardWithoutProcess) {
  const auto r = cli({"reward", (kData / "reward/rollouts.jsonl").string(), "--embeddings",
                      (kData / "reward/embeddings.json").string(), "--no-process"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const auto& row : jsonl(r.out)) {
    EXPECT_EQ(row["process"].get<double>(), 0.0);
    EXPECT_NEAR(row["total"].get<double>(), 0.05 * row["format"].get<double>() + 0.2 * row["outcome"].get<double>(),
                1e-15);
  }
}

TEST_F(CliTest, RewardMissingEmbedding) {
  std::string rows = slurp((kData / "reward/rollouts.jsonl").string());
  const auto pos = rows.find("\"p0/query/0\"");
  ASSERT_NE(pos, std::string::npos);
  rows.replace(pos, 12, "\"p0/query/9\"");
  const auto r = cli({"reward", write("r.jsonl", rows), "--embeddings", (kData / "reward/embeddings.json").string()});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("UnknownPositive"), std::string::npos) << r.err;
}

TEST_F(CliTest, RewardBadWeightsIsUsageError) {
  const auto r = cli({"reward", (kData / "reward/rollouts.jsonl").string(), "--embeddings",
                      (kData / "reward/embeddings.json").string(), "--weights", "0.1,-1,0.2"});
  EXPECT_EQ(r.code, 2);
}

TEST_F(CliTest, TrainSimZeroSteps) {
  const auto r = cli({"train-sim", "--steps", "0", "--trace", path("t.csv"), "--policy", path("p.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(path("t.csv")), "step,mean_reward,mean_format,mean_process,mean_outcome,objective,kl,entropy\n");
  const auto policy = embedrl::grpo::policy_from_json(nlohmann::json::parse(slurp(path("p.json"))));
  for (double z : policy.all_logits()) EXPECT_EQ(z, 0.0);
}

TEST_F(CliTest, TrainSimIsDeterministic) {
  const auto world = write("w.json", R"({"dim":16,"channels":4,"queries":8,"items":24,"family_size":4,"seed":3})");
  const auto a = cli({"train-sim", "--world", world, "--steps", "6", "--seed", "2", "--trace", path("a.csv"), "--policy", path("a.json")});
  const auto b = cli({"train-sim", "--world", world, "--steps", "6", "--seed", "2", "--trace", path("b.csv"), "--policy", path("b.json")});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
  EXPECT_EQ(count_lines(slurp(path("a.csv"))), 7u);
  EXPECT_EQ(cli({"train-sim", "--world", write("bad.json", R"({"dim":4,"channels":8,"queries":8,"items":24,"seed":1})")}).code, 2);
}

TEST_F(CliTest, EvalPerfectSingleQuery) {
  const auto run_path = write("run.jsonl", R"({"query":"q","ranking":["a","b"],"scores":[0.9,0.1]})" "\n");
  const auto judg = write("j.jsonl", R"({"query":"q","relevant":{"a":1}})" "\n");
  const auto r = cli({"eval", run_path, "--judgments", judg, "--metrics", "hit1,ndcg5,map,r1,r5,r10,p1"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "metric\tmean\tqueries\texcluded");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_NE(line.find("\t1\t1\t0"), std::string::npos) << line;
  }
  EXPECT_EQ(rows, 7);
}

TEST_F(CliTest, EvalSimilarityGap) {
  // q1: 0.875 - 0.5 = 0.375; q2: 0.75 - 0.625 = 0.125; mean 0.25.
  const auto run_path = write("run.jsonl", R"({"query":"q1","ranking":["a","b","c"],"scores":[0.875,0.5,0.25]})" "\n"
                                           R"({"query":"q2","ranking":["c","a","b"],"scores":[0.75,0.625,0.125]})" "\n");
  const auto r = cli({"eval", run_path, "--metrics", "ds"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "metric\tmean\tqueries\texcluded\nds\t0.25\t2\t0\n");
  const auto pq = cli({"eval", run_path, "--metrics", "ds", "--per-query"});
  EXPECT_EQ(pq.out, "query\tmetric\tvalue\nq1\tds\t0.375\nq2\tds\t0.125\n");
}

TEST_F(CliTest, EvalUnknownMetric) {
  const auto run_path = write("run.jsonl", R"({"query":"q","ranking":["a"],"scores":[0.9]})" "\n");
  EXPECT_EQ(cli({"eval", run_path, "--metrics", "hit1,mrr"}).code, 2);
}

TEST_F(CliTest, FilterMockTwentyPercent) {
  const auto m = manifest({{"MSCOCO", 100}}, "image");
  const auto r = cli({"filter", m, "--mock-reject", "0.2", "--retained", path("keep.jsonl"), "--rejected",
                      path("rej.jsonl"), "--rl", path("rl.jsonl"), "--rl-count", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("80.00%"), std::string::npos) << r.out;
  EXPECT_EQ(count_lines(slurp(path("keep.jsonl"))), 80u);
  EXPECT_EQ(count_lines(slurp(path("rej.jsonl"))), 20u);
  EXPECT_EQ(slurp(path("rl.jsonl")), "");
  EXPECT_EQ(cli({"filter", m}).code, 2);
}

TEST_F(CliTest, SampleExactCaps) {
  const auto m = manifest({{"A", 40}, {"B", 7}}, "image");
  const auto r = cli({"sample", m, "--caps", "10,100,300", "--seed", "5", "-o", path("s.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t a = 0, b = 0;
  for (const auto& row : jsonl(slurp(path("s.jsonl")))) (row["dataset"] == "A" ? a : b)++;
  EXPECT_EQ(a, 10u);
  EXPECT_EQ(b, 7u);
  EXPECT_EQ(cli({"sample", m, "--caps", "10,0,300"}).code, 2);
}
