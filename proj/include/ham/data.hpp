#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ham {

using TokenSeq = std::vector<int>;

// Reserved ids, present in every vocabulary.
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kFirstPayloadId = 3;

enum class Task { Copy, Reverse, Sort, File };

std::string_view task_name(Task task);
/// Throws std::invalid_argument on an unknown name.
Task parse_task(std::string_view name);

/// Target sequence for `src` under a synthetic task (not defined for File).
TokenSeq apply_task(Task task, const TokenSeq& src);

struct SequencePair {
  TokenSeq src;
  TokenSeq tgt;
  bool operator==(const SequencePair&) const = default;
};

struct Corpus {
  std::size_t vocab = kFirstPayloadId;
  Task task = Task::File;
  std::vector<SequencePair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
  /// Throws CorpusError if any id is outside [kFirstPayloadId, vocab) or a
  /// sequence is empty.
  void validate() const;
  bool operator==(const Corpus&) const = default;
};

/// Parse or validation failure; `line` is 1-based, 0 when not tied to a line.
class CorpusError : public std::runtime_error {
 public:
  CorpusError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// n_pairs random sources of length seq_len over payload ids
/// [kFirstPayloadId, kFirstPayloadId + payload_vocab); vocab = payload_vocab + 3.
Corpus gen_task(Task task, std::size_t n_pairs, std::size_t seq_len, std::size_t payload_vocab,
                std::uint64_t seed);

// JSONL corpus file: a header line {"vocab":V,"task":"copy"} followed by one
// {"src":[...],"tgt":[...]} object per pair, keys in exactly that order.
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path);

}  // namespace ham
