#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ham/cli.hpp"
#include "ham/data.hpp"

using namespace ham;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome hamctl(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ham_cli_test_" + std::string(testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string read(const std::string& name) const {
    std::ifstream in(dir_ / name, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  fs::path dir_;
};

const std::vector<std::string> kSmallSweep = {"--task",  "copy", "--pairs",    "16", "--eval-pairs", "4",
                                              "--seq-len", "3",  "--payload-vocab", "4", "--hidden", "4",
                                              "--depths", "1,2", "--restarts", "2", "--epochs", "2",
                                              "--batch-size", "8", "--threads", "2"};

}  // namespace

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(hamctl({"verify", "--trials", "0"}).code, cli::kUsageError);
  EXPECT_EQ(hamctl({"verify", "--bogus"}).code, cli::kUsageError);
  EXPECT_EQ(hamctl({}).code, cli::kUsageError);
  EXPECT_EQ(hamctl({"gradcheck", "--scale", "huge"}).code, cli::kUsageError);
  EXPECT_EQ(hamctl({"--help"}).code, cli::kOk);
}

TEST_F(CliTest, VerifyIsDeterministic) {
  const Outcome a = hamctl({"--seed", "3", "verify", "--trials", "200"});
  const Outcome b = hamctl({"--seed", "3", "verify", "--trials", "200"});
  EXPECT_EQ(a.code, cli::kOk) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_FALSE(a.out.empty());
}

TEST_F(CliTest, VerifyWritesJsonOnlyWithOut) {
  EXPECT_EQ(hamctl({"--out", path("v"), "verify", "--trials", "50"}).code, cli::kOk);
  const auto j = nlohmann::json::parse(read("v/verify.json"));
  EXPECT_TRUE(j["pass"].get<bool>());
}

TEST_F(CliTest, GradcheckSingleOp) {
  const Outcome r = hamctl({"gradcheck", "--instances", "5", "--op", "ham_v"});
  EXPECT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_NE(r.out.find("ham_v"), std::string::npos);
  EXPECT_EQ(hamctl({"gradcheck", "--op", "no_such_op"}).code, cli::kUsageError);
}

TEST_F(CliTest, GendataWritesHeaderAndPairs) {
  const Outcome r = hamctl({"--out", path("d"), "gendata", "--task", "copy", "--pairs", "100"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const std::string text = read("d/copy.jsonl");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 101);
  const Corpus c = load_corpus(path("d/copy.jsonl"));
  EXPECT_EQ(c.size(), 100u);
  EXPECT_EQ(c.task, Task::Copy);
  EXPECT_EQ(hamctl({"--out", path("d"), "gendata", "--name", "../escape.jsonl"}).code, cli::kUsageError);
}

TEST_F(CliTest, EvalOfGoldAgainstItself) {
  const Corpus c = gen_task(Task::Reverse, 8, 4, 5, 2);
  save_corpus(c, path("gold.jsonl"));
  const Outcome r = hamctl({"--out", path("e"), "eval", "--hyp", path("gold.jsonl"), "--gold", path("gold.jsonl")});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto j = nlohmann::json::parse(read("e/eval.json"));
  EXPECT_EQ(j["exact_match"], 1.0);
  EXPECT_EQ(j["bleu_avg"], 1.0);
  EXPECT_EQ(j["n"], 8);
}

TEST_F(CliTest, TrainThenEvalModel) {
  save_corpus(gen_task(Task::Copy, 6, 3, 4, 1), path("train.jsonl"));
  EXPECT_EQ(hamctl({"--out", path("t"), "train", "--corpus", path("missing.jsonl")}).code, cli::kUsageError);
  EXPECT_EQ(hamctl({"--out", path("t"), "train"}).code, cli::kUsageError);

  const Outcome r = hamctl({"--out", path("t"), "train", "--corpus", path("train.jsonl"), "--epochs", "3",
                            "--hidden", "4"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const std::string losses = read("t/losses.csv");
  EXPECT_EQ(losses.substr(0, losses.find('\n')), "epoch,loss");
  EXPECT_EQ(std::count(losses.begin(), losses.end(), '\n'), 4);

  const Outcome e = hamctl(
      {"--out", path("t"), "eval", "--model", path("t/model.json"), "--corpus", path("train.jsonl")});
  EXPECT_EQ(e.code, cli::kOk) << e.err;
  EXPECT_TRUE(fs::exists(dir_ / "t/eval.json"));
}

TEST_F(CliTest, InvalidSweepConfigWritesNothing) {
  std::ofstream(path("bad.json")) << R"({"depths": [3, 1]})";
  EXPECT_EQ(hamctl({"--out", path("s"), "--config", path("bad.json"), "sweep"}).code, cli::kUsageError);
  std::ofstream(path("unknown.json")) << R"({"depth": 3})";
  EXPECT_EQ(hamctl({"--out", path("s"), "--config", path("unknown.json"), "sweep"}).code, cli::kUsageError);
  EXPECT_FALSE(fs::exists(dir_ / "s"));
}

TEST_F(CliTest, SweepRerunIsByteIdentical) {
  auto args = [&](const std::string& out) {
    std::vector<std::string> a{"--seed", "5", "--out", path(out), "sweep"};
    a.insert(a.end(), kSmallSweep.begin(), kSmallSweep.end());
    return a;
  };
  const Outcome first = hamctl(args("s1"));
  const Outcome second = hamctl(args("s2"));
  EXPECT_EQ(first.code, second.code);
  EXPECT_NE(first.code, cli::kUsageError) << first.err;
  EXPECT_EQ(read("s1/sweep.csv"), read("s2/sweep.csv"));
  EXPECT_EQ(read("s1/summary.json"), read("s2/summary.json"));
  const auto summary = nlohmann::json::parse(read("s1/summary.json"));
  EXPECT_EQ(summary["config"]["seed"], 5);
}
