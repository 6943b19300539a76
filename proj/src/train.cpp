#include "ham/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "ham/random.hpp"

namespace ham {

void TrainConfig::validate(bool allow_zero_lr) const {
  if (!(learning_rate > 0.0 || (allow_zero_lr && learning_rate == 0.0))) {
    throw std::invalid_argument("learning rate must be positive");
  }
  if (epochs == 0) throw std::invalid_argument("epochs must be at least 1");
  if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
    throw std::invalid_argument("adam hyperparameters out of range");
  }
  if (max_grad_norm < 0.0) throw std::invalid_argument("max_grad_norm must be non-negative");
}

// ---- optimizers ------------------------------------------------------

namespace {

void require_matching(std::span<Tensor* const> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) {
    throw DimensionError("optimizer: " + std::to_string(params.size()) + " parameters, " +
                         std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!(params[i]->shape() == grads[i].shape())) {
      throw DimensionError("optimizer: parameter " + std::to_string(i) + " has shape " +
                           params[i]->shape().str() + ", gradient " + grads[i].shape().str());
    }
  }
}

}  // namespace

void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr) {
  require_matching(params, grads);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
  }
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const TrainConfig& config) {
  require_matching(params, grads);
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->shape(), 0.0);
      state.v.emplace_back(p->shape(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam: state does not match parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

// ---- training --------------------------------------------------------

TrainingError::TrainingError(std::size_t epoch, std::size_t batch, double loss)
    : std::runtime_error("non-finite loss " + std::to_string(loss) + " at epoch " +
                         std::to_string(epoch) + ", batch " + std::to_string(batch)),
      epoch_(epoch),
      batch_(batch) {}

namespace {

using Batch = std::vector<const SequencePair*>;

/// Groups pairs of equal (source, target) length into batches of at most
/// batch_size, in an order drawn from rng.
std::vector<Batch> make_batches(const Corpus& corpus, std::size_t batch_size, Rng* rng) {
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  if (rng) std::shuffle(order.begin(), order.end(), *rng);
  auto key = [&](std::size_t i) {
    return std::make_pair(corpus.pairs[i].src.size(), corpus.pairs[i].tgt.size());
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  std::vector<Batch> batches;
  for (std::size_t i = 0; i < order.size();) {
    Batch batch;
    const auto k = key(order[i]);
    while (i < order.size() && batch.size() < batch_size && key(order[i]) == k) {
      batch.push_back(&corpus.pairs[order[i]]);
      ++i;
    }
    batches.push_back(std::move(batch));
  }
  if (rng) std::shuffle(batches.begin(), batches.end(), *rng);
  return batches;
}

void clip(std::vector<Tensor>& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const Tensor& g : grads) sq += dot(g, g);
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double s = max_norm / norm;
  for (Tensor& g : grads)
    for (double& v : g.data()) v *= s;
}

}  // namespace

TrainResult train(Seq2SeqModel& model, const Corpus& corpus, const TrainConfig& config) {
  config.validate(/*allow_zero_lr=*/true);
  if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
  corpus.validate();
  if (corpus.vocab > model.config.vocab) {
    throw std::invalid_argument("train: corpus vocabulary " + std::to_string(corpus.vocab) +
                                " exceeds model vocabulary " + std::to_string(model.config.vocab));
  }

  auto named = model.parameters();
  std::vector<std::size_t> trainable;
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (named[i].first == "level_logits" && !config.train_level_weights) continue;
    trainable.push_back(i);
  }
  std::vector<Tensor*> params;
  for (std::size_t i : trainable) params.push_back(named[i].second);

  Rng rng(config.seed);
  AdamState adam;
  TrainResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto batches = make_batches(corpus, config.batch_size, &rng);
    double total = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      ad::Tape tape;
      BoundModel bound =
          bind(tape, model, {.differentiable = true, .train_level_weights = config.train_level_weights});
      ad::Var loss = sequence_loss(bound, batches[b]);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) throw TrainingError(epoch, b, value);
      total += value * static_cast<double>(batches[b].size());
      tape.backward(loss);

      std::vector<Tensor> grads;
      grads.reserve(trainable.size());
      for (std::size_t i : trainable) grads.push_back(bound.leaves[i].grad());
      clip(grads, config.max_grad_norm);
      if (config.optimizer == OptimizerKind::Sgd) {
        sgd_step(params, grads, config.learning_rate);
      } else {
        adam_step(params, grads, adam, config);
      }
    }
    result.epoch_losses.push_back(total / static_cast<double>(corpus.size()));
  }
  return result;
}

double corpus_loss(const Seq2SeqModel& model, const Corpus& corpus, std::size_t batch_size) {
  if (corpus.empty()) throw std::invalid_argument("corpus_loss: empty corpus");
  double total = 0.0;
  for (const Batch& batch : make_batches(corpus, batch_size, nullptr)) {
    ad::Tape tape;
    BoundModel bound = bind(tape, model, {.differentiable = false});
    total += sequence_loss(bound, batch).value()[0] * static_cast<double>(batch.size());
  }
  return total / static_cast<double>(corpus.size());
}

double corpus_exact_match(const Seq2SeqModel& model, const Corpus& corpus) {
  if (corpus.empty()) throw std::invalid_argument("corpus_exact_match: empty corpus");
  std::vector<TokenSeq> generated, targets;
  for (const auto& p : corpus.pairs) {
    generated.push_back(generate(model, p.src, p.tgt.size() + 2));
    targets.push_back(p.tgt);
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < generated.size(); ++i) hits += generated[i] == targets[i];
  return static_cast<double>(hits) / static_cast<double>(generated.size());
}

// ---- depth sweep -----------------------------------------------------

void SweepConfig::validate() const {
  if (task == Task::File) throw std::invalid_argument("sweep task must be copy, reverse or sort");
  if (pairs == 0) throw std::invalid_argument("sweep needs at least one training pair");
  if (eval_pairs == 0) throw std::invalid_argument("sweep needs at least one evaluation pair");
  if (seq_len == 0) throw std::invalid_argument("seq_len must be at least 1");
  if (payload_vocab < 2) throw std::invalid_argument("payload_vocab must be at least 2");
  if (hidden == 0) throw std::invalid_argument("hidden must be positive");
  if (depths.empty()) throw std::invalid_argument("depths must not be empty");
  if (std::find(depths.begin(), depths.end(), 0) != depths.end()) {
    throw std::invalid_argument("depths must be at least 1");
  }
  if (!std::is_sorted(depths.begin(), depths.end())) {
    throw std::invalid_argument("depths must be sorted ascending");
  }
  if (restarts == 0) throw std::invalid_argument("restarts must be at least 1");
  if (!(tolerance >= 0.0)) throw std::invalid_argument("tolerance must be non-negative");
  train.validate();
}

nlohmann::ordered_json SweepConfig::to_json() const {
  nlohmann::ordered_json j;
  j["task"] = task_name(task);
  j["pairs"] = pairs;
  j["eval_pairs"] = eval_pairs;
  j["seq_len"] = seq_len;
  j["payload_vocab"] = payload_vocab;
  j["hidden"] = hidden;
  j["bidirectional"] = bidirectional;
  j["depths"] = depths;
  j["restarts"] = restarts;
  j["epochs"] = train.epochs;
  j["batch_size"] = train.batch_size;
  j["optimizer"] = train.optimizer == OptimizerKind::Adam ? "adam" : "sgd";
  j["learning_rate"] = train.learning_rate;
  j["beta1"] = train.beta1;
  j["beta2"] = train.beta2;
  j["epsilon"] = train.epsilon;
  j["max_grad_norm"] = train.max_grad_norm;
  j["train_level_weights"] = train.train_level_weights;
  j["seed"] = seed;
  j["tolerance"] = tolerance;
  j["threads"] = threads;
  j["record_wall_time"] = record_wall_time;
  return j;
}

SweepConfig SweepConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("sweep config must be a JSON object");
  static const std::set<std::string> known = {
      "task", "pairs", "eval_pairs", "seq_len", "payload_vocab", "hidden", "bidirectional",
      "depths", "restarts", "epochs", "batch_size", "optimizer", "learning_rate", "beta1",
      "beta2", "epsilon", "max_grad_norm", "train_level_weights", "seed", "tolerance", "threads",
      "record_wall_time"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw std::invalid_argument("unknown sweep config key '" + key + "'");
  }
  SweepConfig c;
  try {
    if (j.contains("task")) c.task = parse_task(j["task"].get<std::string>());
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j[key].get<std::remove_reference_t<decltype(field)>>();
    };
    get("pairs", c.pairs);
    get("eval_pairs", c.eval_pairs);
    get("seq_len", c.seq_len);
    get("payload_vocab", c.payload_vocab);
    get("hidden", c.hidden);
    get("bidirectional", c.bidirectional);
    get("depths", c.depths);
    get("restarts", c.restarts);
    get("epochs", c.train.epochs);
    get("batch_size", c.train.batch_size);
    get("learning_rate", c.train.learning_rate);
    get("beta1", c.train.beta1);
    get("beta2", c.train.beta2);
    get("epsilon", c.train.epsilon);
    get("max_grad_norm", c.train.max_grad_norm);
    get("train_level_weights", c.train.train_level_weights);
    get("seed", c.seed);
    get("tolerance", c.tolerance);
    get("threads", c.threads);
    get("record_wall_time", c.record_wall_time);
    if (j.contains("optimizer")) {
      const auto name = j["optimizer"].get<std::string>();
      if (name == "adam") {
        c.train.optimizer = OptimizerKind::Adam;
      } else if (name == "sgd") {
        c.train.optimizer = OptimizerKind::Sgd;
      } else {
        throw std::invalid_argument("unknown optimizer '" + name + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad sweep config value: ") + e.what());
  }
  return c;
}

std::uint64_t restart_seed(std::uint64_t root, std::size_t restart) {
  return split_seed(split_seed(root, stream_id("restart")), restart);
}

SweepResult depth_sweep(const SweepConfig& config) {
  config.validate();
  const Corpus corpus = gen_task(config.task, config.pairs, config.seq_len, config.payload_vocab,
                                 split_seed(config.seed, stream_id("data")));
  const Corpus held_out = gen_task(config.task, config.eval_pairs, config.seq_len,
                                   config.payload_vocab, split_seed(config.seed, stream_id("eval")));

  const std::size_t cells = config.depths.size() * config.restarts;
  std::vector<SweepRecord> records(cells);
  std::vector<std::exception_ptr> errors(cells);

  auto run_cell = [&](std::size_t cell) {
    const std::size_t depth = config.depths[cell / config.restarts];
    const std::size_t restart = cell % config.restarts;
    const std::uint64_t seed = restart_seed(config.seed, restart);
    const auto start = std::chrono::steady_clock::now();

    ModelConfig mc;
    mc.vocab = corpus.vocab;
    mc.hidden = config.hidden;
    mc.depth = depth;
    mc.bidirectional = config.bidirectional;
    Seq2SeqModel model = Seq2SeqModel::random(mc, seed);
    TrainConfig tc = config.train;
    tc.seed = split_seed(seed, stream_id("shuffle"));
    train(model, corpus, tc);

    SweepRecord& r = records[cell];
    r.depth = depth;
    r.seed = seed;
    r.final_loss = corpus_loss(model, corpus);
    r.metric = corpus_exact_match(model, held_out);
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    r.wall_time_s = config.record_wall_time ? elapsed.count() : 0.0;
  };

  std::size_t threads = config.threads ? config.threads : std::thread::hardware_concurrency();
  threads = std::clamp<std::size_t>(threads, 1, cells);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t cell = next++; cell < cells; cell = next++) {
      try {
        run_cell(cell);
      } catch (...) {
        errors[cell] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  SweepResult result;
  result.records = records;
  for (std::size_t d = 0; d < config.depths.size(); ++d) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < config.restarts; ++r) {
      best = std::min(best, records[d * config.restarts + r].final_loss);
    }
    result.summary.push_back({config.depths[d], best});
  }
  for (std::size_t i = 1; i < result.summary.size(); ++i) {
    if (!(result.summary[i].best_loss <= result.summary[i - 1].best_loss * (1.0 + config.tolerance))) {
      result.monotone = false;
    }
  }
  return result;
}

nlohmann::ordered_json SweepResult::summary_json(double tolerance) const {
  nlohmann::ordered_json j;
  auto depths = nlohmann::ordered_json::array();
  for (const auto& s : summary) depths.push_back({{"depth", s.depth}, {"best_loss", s.best_loss}});
  j["best_loss_by_depth"] = std::move(depths);
  auto transitions = nlohmann::ordered_json::array();
  for (std::size_t i = 1; i < summary.size(); ++i) {
    const double ratio = summary[i].best_loss / summary[i - 1].best_loss;
    transitions.push_back({{"from", summary[i - 1].depth},
                           {"to", summary[i].depth},
                           {"ratio", ratio},
                           {"within_tolerance", summary[i].best_loss <=
                                                    summary[i - 1].best_loss * (1.0 + tolerance)}});
  }
  j["transitions"] = std::move(transitions);
  j["tolerance"] = tolerance;
  j["monotone"] = monotone;
  std::ostringstream verdict;
  verdict << (monotone ? "monotone" : "not monotone") << " within "
          << static_cast<int>(std::lround(tolerance * 100.0)) << "%";
  j["verdict"] = verdict.str();
  return j;
}

std::string sweep_csv(std::span<const SweepRecord> records) {
  std::string out = "depth,seed,final_loss,metric,wall_time_s\n";
  char line[256];
  for (const auto& r : records) {
    std::snprintf(line, sizeof line, "%zu,%llu,%.10g,%.6f,%.3f\n", r.depth,
                  static_cast<unsigned long long>(r.seed), r.final_loss, r.metric, r.wall_time_s);
    out += line;
  }
  return out;
}

}  // namespace ham
