#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ham/data.hpp"
#include "ham/model.hpp"
#include "ham/tensor.hpp"

namespace ham {

enum class OptimizerKind { Sgd, Adam };

struct TrainConfig {
  double learning_rate = 1e-2;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  /// Global gradient norm above which gradients are rescaled; 0 disables.
  double max_grad_norm = 5.0;
  /// When false, the level logits c stay at their initial values.
  bool train_level_weights = true;

  /// Throws std::invalid_argument on a non-positive learning rate or zero
  /// epochs / batch size. A zero learning rate is accepted only with
  /// allow_zero_lr (used for no-update baselines).
  void validate(bool allow_zero_lr = false) const;
};

// ---- optimizers ------------------------------------------------------

/// p <- p - lr * g
void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr);

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;
};

/// Bias-corrected Adam. Moment buffers are created on the first call.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const TrainConfig& config);

// ---- training --------------------------------------------------------

/// Non-finite loss during training.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(std::size_t epoch, std::size_t batch, double loss);
  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

 private:
  std::size_t epoch_, batch_;
};

struct TrainResult {
  std::vector<double> epoch_losses;  ///< mean cross-entropy per epoch
};

/// Mini-batch training with teacher forcing. Batches hold pairs of equal
/// source and target length; their order is reshuffled every epoch from
/// config.seed.
TrainResult train(Seq2SeqModel& model, const Corpus& corpus, const TrainConfig& config);

/// Mean per-pair cross-entropy over a corpus, without updates.
double corpus_loss(const Seq2SeqModel& model, const Corpus& corpus, std::size_t batch_size = 64);

/// Exact-match rate of greedy generation against the corpus targets.
double corpus_exact_match(const Seq2SeqModel& model, const Corpus& corpus);

// ---- depth sweep -----------------------------------------------------

struct SweepConfig {
  Task task = Task::Copy;
  std::size_t pairs = 512;
  std::size_t eval_pairs = 64;
  std::size_t seq_len = 6;
  std::size_t payload_vocab = 8;
  std::size_t hidden = 16;
  bool bidirectional = true;
  std::vector<std::size_t> depths{1, 2, 5};
  std::size_t restarts = 5;
  TrainConfig train;
  std::uint64_t seed = 0;
  /// Relative slack allowed between consecutive best losses.
  double tolerance = 0.05;
  std::size_t threads = 0;  ///< 0: hardware concurrency
  bool record_wall_time = false;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static SweepConfig from_json(const nlohmann::json& j);
};

struct SweepRecord {
  std::size_t depth = 0;
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  double metric = 0.0;  ///< exact match on the held-out pairs
  double wall_time_s = 0.0;
};

struct DepthSummary {
  std::size_t depth = 0;
  double best_loss = 0.0;  ///< minimum final loss over restarts
};

struct SweepResult {
  std::vector<SweepRecord> records;  ///< ordered by (depth index, restart)
  std::vector<DepthSummary> summary;
  /// best_loss[i+1] <= best_loss[i] * (1 + tolerance) for every transition.
  bool monotone = true;
  nlohmann::ordered_json summary_json(double tolerance) const;
};

/// Seed of restart r: split_seed(split_seed(root, stream_id("restart")), r).
/// Identical for every depth, so depths share initializations.
std::uint64_t restart_seed(std::uint64_t root, std::size_t restart);

/// Trains `restarts` models per depth under an equal budget and reports the
/// best final training loss per depth.
SweepResult depth_sweep(const SweepConfig& config);

/// CSV with header depth,seed,final_loss,metric,wall_time_s.
std::string sweep_csv(std::span<const SweepRecord> records);

}  // namespace ham
