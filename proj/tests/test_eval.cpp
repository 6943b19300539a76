#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "bleu_oracle.hpp"
#include "ham/eval.hpp"
#include "ham/random.hpp"
#include "ham/tensor.hpp"

using namespace ham;

TEST(Bleu2, PerfectMatch) { EXPECT_EQ(bleu2(TokenSeq{4, 5, 6, 7}, TokenSeq{4, 5, 6, 7}), 1.0); }

TEST(Bleu2, NoSharedTokens) { EXPECT_EQ(bleu2(TokenSeq{3, 4, 5}, TokenSeq{6, 7, 8}), 0.0); }

TEST(Bleu2, OneBigramMatch) {
  // a b c d vs a b x d: p1 = 3/4, only "a b" matches among 3 bigrams.
  const TokenSeq cand{10, 11, 12, 13}, ref{10, 11, 99, 13};
  EXPECT_NEAR(oracle::bleu2(cand, ref), 0.5, 1e-15);
  EXPECT_NEAR(bleu2(cand, ref), 0.5, 1e-15);
}

TEST(Bleu2, SmoothedBigramsAndBrevity) {
  // No bigram matches: p2 = 1 / (2 + 1). Short candidate: BP = exp(1 - 5/3).
  const TokenSeq cand{5, 4, 3}, ref{3, 4, 5, 6, 7};
  EXPECT_NEAR(bleu2(cand, ref), std::exp(1.0 - 5.0 / 3.0) * std::sqrt(1.0 * (1.0 / 3.0)), 1e-15);
}

TEST(Bleu2, ClipsRepeatedTokens) {
  // "7 7 7 7" against "7 3": one unigram and no bigram may be credited.
  EXPECT_NEAR(bleu2(TokenSeq{7, 7, 7, 7}, TokenSeq{7, 3}), std::sqrt(0.25 * 0.25), 1e-15);
}

TEST(Bleu2, EmptyCandidateScoresZero) {
  testing::internal::CaptureStderr();
  EXPECT_EQ(bleu2(TokenSeq{}, TokenSeq{3, 4}), 0.0);
  EXPECT_NE(testing::internal::GetCapturedStderr().find("warning"), std::string::npos);
}

TEST(Bleu2, MatchesBruteForceCounter) {
  Rng rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t vocab = uniform_index(rng, 2, 6);
    TokenSeq cand(uniform_index(rng, 1, 12)), ref(uniform_index(rng, 1, 12));
    for (int& t : cand) t = static_cast<int>(uniform_index(rng, 3, 2 + vocab));
    for (int& t : ref) t = static_cast<int>(uniform_index(rng, 3, 2 + vocab));
    const double got = bleu2(cand, ref);
    EXPECT_NEAR(got, oracle::bleu2(cand, ref), 1e-12);
    EXPECT_GE(got, 0.0);
    EXPECT_LE(got, 1.0);
  }
}

TEST(Bleu2, InvariantUnderRelabeling) {
  Rng rng(32);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<int> perm(8);
    std::iota(perm.begin(), perm.end(), 3);
    std::shuffle(perm.begin(), perm.end(), rng);
    TokenSeq cand(uniform_index(rng, 1, 10)), ref(uniform_index(rng, 1, 10));
    for (int& t : cand) t = static_cast<int>(uniform_index(rng, 3, 10));
    for (int& t : ref) t = static_cast<int>(uniform_index(rng, 3, 10));
    TokenSeq pc = cand, pr = ref;
    for (int& t : pc) t = perm[t - 3];
    for (int& t : pr) t = perm[t - 3];
    EXPECT_EQ(bleu2(cand, ref), bleu2(pc, pr));
  }
}

TEST(AveragedBleu, PerfectGenerationIsOne) {
  const std::vector<TokenSeq> gold{{3, 4, 5}, {6, 7, 8, 9}, {4, 4, 5}, {9, 8}};
  EXPECT_EQ(averaged_bleu(gold, gold), 1.0);
}

TEST(AveragedBleu, IgnoresFirstLineAndAveragesTheRest) {
  const std::vector<TokenSeq> gold{{3, 4}, {3, 4, 5, 6}, {10, 11, 99, 13}, {5, 5}};
  const std::vector<TokenSeq> gen{{9, 9}, {3, 4, 5, 6}, {10, 11, 12, 13}, {7, 8}};
  const auto lines = continuation_bleu(gen, gold);
  EXPECT_EQ(lines[0], 1.0);
  EXPECT_NEAR(lines[1], 0.5, 1e-15);
  EXPECT_EQ(lines[2], 0.0);
  EXPECT_NEAR(averaged_bleu(gen, gold), 0.5, 1e-15);
}

TEST(AveragedBleu, AllZero) {
  const std::vector<TokenSeq> gold{{3}, {3, 4}, {3, 4}, {3, 4}};
  const std::vector<TokenSeq> gen{{3}, {5, 6}, {5, 6}, {5, 6}};
  EXPECT_EQ(averaged_bleu(gen, gold), 0.0);
}

TEST(AveragedBleu, RequiresFourLines) {
  const std::vector<TokenSeq> three{{3}, {4}, {5}};
  EXPECT_THROW(averaged_bleu(three, three), DomainError);
}

TEST(ExactMatch, Counting) {
  const std::vector<TokenSeq> t{{3}, {4, 5}, {6}, {7, 7}};
  EXPECT_EQ(exact_match_rate(t, t), 1.0);
  const std::vector<TokenSeq> none{{4}, {4}, {4, 4}, {3}};
  EXPECT_EQ(exact_match_rate(none, t), 0.0);
  std::vector<TokenSeq> three = t;
  three[2] = {9};
  EXPECT_EQ(exact_match_rate(three, t), 0.75);
  EXPECT_THROW(exact_match_rate(std::vector<TokenSeq>{}, std::vector<TokenSeq>{}), DomainError);
}

TEST(EvalReport, JsonKeysAndGrouping) {
  const std::vector<TokenSeq> gold{{3, 4}, {5, 6}, {7, 8}, {9, 3}, {3, 3}, {4, 4}, {5, 5}, {6, 6}};
  const EvalReport r = evaluate(gold, gold);
  const auto j = r.to_json();
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"bleu_1", "bleu_2", "bleu_3", "bleu_avg", "exact_match", "n"}));
  EXPECT_EQ(j["bleu_avg"], 1.0);
  EXPECT_EQ(j["exact_match"], 1.0);
  EXPECT_EQ(j["n"], 8);

  const std::vector<TokenSeq> odd(gold.begin(), gold.begin() + 5);
  const auto j5 = evaluate(odd, odd).to_json();
  EXPECT_TRUE(j5["bleu_avg"].is_null());
  EXPECT_EQ(j5["exact_match"], 1.0);
}
