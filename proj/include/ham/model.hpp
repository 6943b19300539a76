#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ham/autodiff.hpp"
#include "ham/data.hpp"
#include "ham/hierarchical.hpp"
#include "ham/tensor.hpp"

// GRU encoder-decoder with hierarchical attention between encoder and
// decoder. Embedding size equals hidden size, so encoder states serve as
// attention keys of the same dimension as the decoder's hidden state.
//
// Weight matrices multiply from the right: a batch of row inputs x[B, d_in]
// maps to x W with W[d_in, hidden].

namespace ham {

/// How the decoder state attends over the encoder states.
enum class Connector {
  Ham,         ///< softmax(c)-weighted sum of all levels 1..d
  MultiLevel,  ///< level d only
};

struct GruParams {
  Tensor w_z, u_z, b_z;  // update gate
  Tensor w_r, u_r, b_r;  // reset gate
  Tensor w_h, u_h, b_h;  // candidate

  static GruParams zeros(std::size_t input, std::size_t hidden);
};

struct ModelConfig {
  std::size_t vocab = 0;
  std::size_t hidden = 16;
  std::size_t depth = 1;
  bool bidirectional = true;
  Connector connector = Connector::Ham;

  void validate() const;
};

struct Seq2SeqModel {
  ModelConfig config;
  Tensor embedding;  ///< [vocab, hidden]
  GruParams encoder_fwd;
  GruParams encoder_bwd;  ///< unused unless config.bidirectional
  GruParams decoder;      ///< input is concat(embedding, context): 2 * hidden wide
  Tensor level_logits;    ///< c, one entry per attention level
  Tensor w_out;           ///< [hidden, vocab]; logits = h W_out

  /// All parameters zero (c = 0 gives uniform level weights).
  explicit Seq2SeqModel(const ModelConfig& config);
  /// Weights uniform in [-0.1, 0.1] from `seed`; c starts at zero.
  static Seq2SeqModel random(const ModelConfig& config, std::uint64_t seed);

  /// Named parameters in a fixed order; the backward encoder is omitted
  /// when the encoder is unidirectional.
  std::vector<std::pair<std::string, Tensor*>> parameters();
  std::vector<std::pair<std::string, const Tensor*>> parameters() const;
};

// ---- differentiable forward -----------------------------------------

struct BoundGru {
  ad::Var w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h;
};

/// A model's parameters registered on a tape. `leaves` parallels
/// Seq2SeqModel::parameters(); entries for frozen or constant parameters
/// are not differentiable.
struct BoundModel {
  const Seq2SeqModel* model = nullptr;
  ad::Var embedding;
  BoundGru encoder_fwd, encoder_bwd, decoder;
  ad::Var level_logits;
  ad::Var w_out;
  std::vector<ad::Var> leaves;
};

struct BindOptions {
  bool differentiable = true;
  bool train_level_weights = true;
};

BoundModel bind(ad::Tape& tape, const Seq2SeqModel& model, BindOptions options = {});
/// Wires caller-provided Vars (one per entry of model.parameters(), same
/// order and shapes) as the model's parameters.
BoundModel bind_parameters(const Seq2SeqModel& model, std::span<const ad::Var> params);

/// z = s(x W_z + h U_z + b_z), r = s(x W_r + h U_r + b_r),
/// h~ = tanh(x W_h + (r * h) U_h + b_h), h' = (1 - z) * h + z * h~.
/// x: [B, d_in], h: [B, hidden].
ad::Var gru_step(const BoundGru& gru, ad::Var x, ad::Var h);

struct EncoderOutput {
  std::vector<ad::Var> states;  ///< n entries of [B, hidden]
  ad::Var keys;                 ///< [B, n, hidden]
  ad::Var final_state;          ///< forward direction's last state, [B, hidden]
};

/// Encodes a batch of equal-length sequences. Bidirectional states are the
/// elementwise sum of the two directions.
EncoderOutput encode(const BoundModel& m, std::span<const TokenSeq> batch);

/// Ham (or multi-level) attention of the decoder state over the keys.
ad::Var connect(const BoundModel& m, ad::Var query, ad::Var keys);

struct DecoderStep {
  ad::Var logits;  ///< [B, vocab]
  ad::Var hidden;  ///< [B, hidden]
};

/// context = connect(h_dec, keys); h' = gru(concat(E[prev], context), h_dec);
/// logits = h' W_out.
DecoderStep decode_step(const BoundModel& m, ad::Var h_dec, ad::Var keys,
                        std::span<const int> prev_tokens);

/// Teacher-forced mean cross-entropy over the target tokens plus EOS of a
/// batch whose sources share one length and whose targets share one length.
ad::Var sequence_loss(const BoundModel& m, std::span<const SequencePair* const> batch);

// ---- single-sequence convenience (no gradient tracking) -------------

Tensor gru_step(const GruParams& params, const Tensor& x, const Tensor& h);
/// [n, hidden] encoder states of one sequence.
Tensor encode(const Seq2SeqModel& model, const TokenSeq& tokens);

struct DecodeResult {
  Tensor logits;  ///< [vocab]
  Tensor hidden;  ///< [hidden]
};
DecodeResult decode_step(const Seq2SeqModel& model, const Tensor& h_dec, const Tensor& enc_states,
                         int prev_token);

/// Greedy decoding from BOS until EOS or max_len tokens; argmax ties go to
/// the smallest id. The returned sequence excludes BOS and EOS.
TokenSeq generate(const Seq2SeqModel& model, const TokenSeq& src, std::size_t max_len);

// ---- checkpoints -----------------------------------------------------

// JSON container:
//   {"format": "ham-seq2seq", "version": 1,
//    "config": {"vocab", "hidden", "depth", "bidirectional", "connector"},
//    "parameters": [{"name", "shape", "data"}, ...]}
// in Seq2SeqModel::parameters() order. Doubles round-trip exactly.
void save_checkpoint(const Seq2SeqModel& model, const std::filesystem::path& path);
Seq2SeqModel load_checkpoint(const std::filesystem::path& path);

}  // namespace ham
