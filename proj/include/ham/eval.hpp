#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>

#include <json.hpp>

#include "ham/data.hpp"

namespace ham {

/// BLEU-2 of one candidate against one reference: the geometric mean of the
/// clipped unigram and bigram precisions times the brevity penalty
/// exp(1 - r/c) (applied when c < r). A bigram precision with no matches is
/// add-one smoothed to 1/(total + 1); unigram precision is never smoothed.
/// An empty candidate scores 0.
double bleu2(std::span<const int> candidate, std::span<const int> reference);

/// Mean BLEU-2 of lines 2..4 of a four-line generation against the gold
/// lines. Throws DomainError unless both sides have exactly 4 lines.
double averaged_bleu(std::span<const TokenSeq> generated, std::span<const TokenSeq> gold);

/// BLEU-2 of each continuation line (2, 3, 4) of a four-line generation.
std::array<double, 3> continuation_bleu(std::span<const TokenSeq> generated,
                                        std::span<const TokenSeq> gold);

/// Fraction of positions where generated[i] == targets[i] token for token.
double exact_match_rate(std::span<const TokenSeq> generated, std::span<const TokenSeq> targets);

struct EvalReport {
  /// Per-continuation BLEU-2 averaged over consecutive 4-line groups; only
  /// present when the line count is a multiple of 4.
  std::optional<std::array<double, 3>> bleu_lines;
  std::optional<double> bleu_avg;
  double exact_match = 0.0;
  std::size_t n = 0;

  /// {"bleu_1", "bleu_2", "bleu_3", "bleu_avg", "exact_match", "n"}; BLEU
  /// fields are null when not computed.
  nlohmann::ordered_json to_json() const;
};

EvalReport evaluate(std::span<const TokenSeq> generated, std::span<const TokenSeq> gold);

}  // namespace ham
