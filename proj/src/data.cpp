#include "ham/data.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include <json.hpp>

#include "ham/random.hpp"

namespace ham {

using ordered_json = nlohmann::ordered_json;

std::string_view task_name(Task task) {
  switch (task) {
    case Task::Copy: return "copy";
    case Task::Reverse: return "reverse";
    case Task::Sort: return "sort";
    case Task::File: return "file";
  }
  return "file";
}

Task parse_task(std::string_view name) {
  if (name == "copy") return Task::Copy;
  if (name == "reverse") return Task::Reverse;
  if (name == "sort") return Task::Sort;
  if (name == "file") return Task::File;
  throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

TokenSeq apply_task(Task task, const TokenSeq& src) {
  TokenSeq out = src;
  switch (task) {
    case Task::Copy: break;
    case Task::Reverse: std::reverse(out.begin(), out.end()); break;
    case Task::Sort: std::sort(out.begin(), out.end()); break;
    case Task::File: throw std::invalid_argument("apply_task: file corpora have no rule");
  }
  return out;
}

CorpusError::CorpusError(std::size_t line, const std::string& what)
    : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

void Corpus::validate() const {
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::size_t line = i + 2;  // header occupies line 1
    for (const TokenSeq* seq : {&pairs[i].src, &pairs[i].tgt}) {
      if (seq->empty()) throw CorpusError(line, "empty sequence");
      for (int id : *seq) {
        if (id < kFirstPayloadId || static_cast<std::size_t>(id) >= vocab) {
          throw CorpusError(line, "token id " + std::to_string(id) + " outside payload range [" +
                                      std::to_string(kFirstPayloadId) + ", " +
                                      std::to_string(vocab) + ")");
        }
      }
    }
  }
}

Corpus gen_task(Task task, std::size_t n_pairs, std::size_t seq_len, std::size_t payload_vocab,
                std::uint64_t seed) {
  if (task == Task::File) throw std::invalid_argument("gen_task: 'file' is not a synthetic task");
  if (payload_vocab < 2) throw DomainError("gen_task: payload_vocab must be at least 2");
  if (seq_len < 1) throw DomainError("gen_task: seq_len must be at least 1");
  Corpus corpus;
  corpus.vocab = payload_vocab + kFirstPayloadId;
  corpus.task = task;
  corpus.pairs.reserve(n_pairs);
  Rng rng(seed);
  std::uniform_int_distribution<int> token(kFirstPayloadId,
                                           kFirstPayloadId + static_cast<int>(payload_vocab) - 1);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    TokenSeq src(seq_len);
    for (int& t : src) t = token(rng);
    corpus.pairs.push_back({src, apply_task(task, src)});
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write corpus to " + path.string());
  ordered_json header;
  header["vocab"] = corpus.vocab;
  header["task"] = task_name(corpus.task);
  out << header.dump() << '\n';
  for (const auto& pair : corpus.pairs) {
    ordered_json line;
    line["src"] = pair.src;
    line["tgt"] = pair.tgt;
    out << line.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

namespace {

TokenSeq parse_ids(const ordered_json& j, const char* key, std::size_t line) {
  if (!j.contains(key) || !j[key].is_array()) {
    throw CorpusError(line, std::string("missing array '") + key + "'");
  }
  TokenSeq ids;
  for (const auto& v : j[key]) {
    if (!v.is_number_integer()) {
      throw CorpusError(line, std::string("non-integer token in '") + key + "': " + v.dump());
    }
    ids.push_back(v.get<int>());
  }
  return ids;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus " + path.string());
  Corpus corpus;
  std::string text;
  std::size_t line = 0;
  bool have_header = false;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw CorpusError(line, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw CorpusError(line, "expected a JSON object");
    if (!have_header) {
      if (!j.contains("vocab") || !j["vocab"].is_number_unsigned() || !j.contains("task") ||
          !j["task"].is_string()) {
        throw CorpusError(line, "header must be {\"vocab\": V, \"task\": tag}");
      }
      corpus.vocab = j["vocab"].get<std::size_t>();
      try {
        corpus.task = parse_task(j["task"].get<std::string>());
      } catch (const std::invalid_argument& e) {
        throw CorpusError(line, e.what());
      }
      have_header = true;
      continue;
    }
    SequencePair pair{parse_ids(j, "src", line), parse_ids(j, "tgt", line)};
    for (const TokenSeq* seq : {&pair.src, &pair.tgt}) {
      if (seq->empty()) throw CorpusError(line, "empty sequence");
      for (int id : *seq) {
        if (id < kFirstPayloadId || static_cast<std::size_t>(id) >= corpus.vocab) {
          throw CorpusError(line, "token id " + std::to_string(id) + " outside payload range [" +
                                      std::to_string(kFirstPayloadId) + ", " +
                                      std::to_string(corpus.vocab) + ")");
        }
      }
    }
    corpus.pairs.push_back(std::move(pair));
  }
  return corpus;
}

}  // namespace ham
