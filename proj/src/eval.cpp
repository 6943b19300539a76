#include "ham/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <utility>

#include "ham/tensor.hpp"

namespace ham {

namespace {

template <typename Gram>
std::size_t clipped_matches(const std::map<Gram, std::size_t>& cand,
                            const std::map<Gram, std::size_t>& ref) {
  std::size_t matches = 0;
  for (const auto& [gram, count] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) matches += std::min(count, it->second);
  }
  return matches;
}

std::map<int, std::size_t> unigrams(std::span<const int> s) {
  std::map<int, std::size_t> counts;
  for (int t : s) ++counts[t];
  return counts;
}

std::map<std::pair<int, int>, std::size_t> bigrams(std::span<const int> s) {
  std::map<std::pair<int, int>, std::size_t> counts;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) ++counts[{s[i], s[i + 1]}];
  return counts;
}

void require_four_lines(std::span<const TokenSeq> generated, std::span<const TokenSeq> gold) {
  if (generated.size() != 4 || gold.size() != 4) {
    throw DomainError("averaged BLEU needs exactly 4 generated and 4 gold lines, got " +
                      std::to_string(generated.size()) + " and " + std::to_string(gold.size()));
  }
}

}  // namespace

double bleu2(std::span<const int> candidate, std::span<const int> reference) {
  if (candidate.empty()) {
    std::cerr << "warning: bleu2 of an empty candidate is 0\n";
    return 0.0;
  }
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());

  const std::size_t uni = clipped_matches(unigrams(candidate), unigrams(reference));
  if (uni == 0) return 0.0;
  const double p1 = static_cast<double>(uni) / c;

  const std::size_t bi = clipped_matches(bigrams(candidate), bigrams(reference));
  const double bigram_total = c - 1.0;
  const double p2 = bi == 0 ? 1.0 / (bigram_total + 1.0) : static_cast<double>(bi) / bigram_total;

  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return bp * std::sqrt(p1 * p2);
}

std::array<double, 3> continuation_bleu(std::span<const TokenSeq> generated,
                                        std::span<const TokenSeq> gold) {
  require_four_lines(generated, gold);
  return {bleu2(generated[1], gold[1]), bleu2(generated[2], gold[2]), bleu2(generated[3], gold[3])};
}

double averaged_bleu(std::span<const TokenSeq> generated, std::span<const TokenSeq> gold) {
  const auto lines = continuation_bleu(generated, gold);
  return (lines[0] + lines[1] + lines[2]) / 3.0;
}

double exact_match_rate(std::span<const TokenSeq> generated, std::span<const TokenSeq> targets) {
  if (generated.size() != targets.size()) {
    throw DimensionError("exact_match_rate: " + std::to_string(generated.size()) +
                         " generated vs " + std::to_string(targets.size()) + " targets");
  }
  if (generated.empty()) throw DomainError("exact_match_rate: no pairs");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < generated.size(); ++i) hits += generated[i] == targets[i];
  return static_cast<double>(hits) / static_cast<double>(generated.size());
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string key = "bleu_" + std::to_string(i + 1);
    j[key] = bleu_lines ? nlohmann::ordered_json((*bleu_lines)[i]) : nlohmann::ordered_json(nullptr);
  }
  j["bleu_avg"] = bleu_avg ? nlohmann::ordered_json(*bleu_avg) : nlohmann::ordered_json(nullptr);
  j["exact_match"] = exact_match;
  j["n"] = n;
  return j;
}

EvalReport evaluate(std::span<const TokenSeq> generated, std::span<const TokenSeq> gold) {
  EvalReport report;
  report.n = generated.size();
  report.exact_match = exact_match_rate(generated, gold);
  if (generated.size() % 4 == 0) {
    std::array<double, 3> sums{};
    const std::size_t groups = generated.size() / 4;
    for (std::size_t g = 0; g < groups; ++g) {
      const auto lines = continuation_bleu(generated.subspan(4 * g, 4), gold.subspan(4 * g, 4));
      for (std::size_t i = 0; i < 3; ++i) sums[i] += lines[i];
    }
    for (double& s : sums) s /= static_cast<double>(groups);
    report.bleu_lines = sums;
    report.bleu_avg = (sums[0] + sums[1] + sums[2]) / 3.0;
  }
  return report;
}

}  // namespace ham
