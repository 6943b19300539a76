#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "ham/data.hpp"
#include "ham/random.hpp"
#include "ham/train.hpp"

using namespace ham;

namespace {

Corpus single_pair() {
  Corpus c;
  c.vocab = 9;
  c.task = Task::Copy;
  c.pairs = {{{3, 7, 5, 8}, {3, 7, 5, 8}}};
  return c;
}

SweepConfig tiny_sweep() {
  SweepConfig c;
  c.pairs = 24;
  c.eval_pairs = 8;
  c.seq_len = 3;
  c.payload_vocab = 4;
  c.hidden = 4;
  c.depths = {1, 2};
  c.restarts = 2;
  c.train.epochs = 3;
  c.train.batch_size = 8;
  c.seed = 42;
  c.threads = 2;
  return c;
}

}  // namespace

TEST(Sgd, HalfSquareStep) {
  Tensor x = Tensor::vector({1.0});
  Tensor* params[] = {&x};
  const Tensor grads[] = {x};  // d/dx (x^2 / 2) = x
  sgd_step(params, grads, 0.1);
  EXPECT_DOUBLE_EQ(x[0], 0.9);
}

TEST(Sgd, ZeroGradientLeavesParameters) {
  Tensor x = Tensor::vector({1.5, -2});
  Tensor* params[] = {&x};
  const Tensor grads[] = {Tensor::zeros(Shape{2})};
  sgd_step(params, grads, 0.3);
  EXPECT_EQ(x, Tensor::vector({1.5, -2}));
}

TEST(Adam, ZeroGradientWithFreshMomentsLeavesParameters) {
  Tensor x = Tensor::vector({1.5, -2});
  Tensor* params[] = {&x};
  const Tensor grads[] = {Tensor::zeros(Shape{2})};
  AdamState state;
  adam_step(params, grads, state, TrainConfig{});
  EXPECT_EQ(x, Tensor::vector({1.5, -2}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // Bias-corrected m and v give m_hat = g and v_hat = g^2, so the first
  // update is lr * g / (|g| + eps).
  TrainConfig config;
  config.learning_rate = 0.01;
  for (double g : {1e-3, 0.5, 1.0, 1e3, -7.0}) {
    Tensor x = Tensor::vector({2.0});
    Tensor* params[] = {&x};
    const Tensor grads[] = {Tensor::vector({g})};
    AdamState state;
    adam_step(params, grads, state, config);
    const double expected = 0.01 * std::abs(g) / (std::abs(g) + 1e-8);
    EXPECT_NEAR(std::abs(2.0 - x[0]), expected, 1e-15) << g;
    EXPECT_NEAR(std::abs(2.0 - x[0]), 0.01, 1e-7) << g;
    EXPECT_EQ(state.step, 1u);
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.learning_rate = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_NO_THROW(c.validate(true));
  c = TrainConfig{};
  c.epochs = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Train, ZeroLearningRateKeepsLossConstant) {
  const Corpus corpus = gen_task(Task::Reverse, 20, 3, 4, 1);
  Seq2SeqModel model = Seq2SeqModel::random({.vocab = corpus.vocab, .hidden = 4, .depth = 2}, 2);
  const Seq2SeqModel before = model;
  TrainConfig config;
  config.learning_rate = 0.0;
  config.epochs = 4;
  config.batch_size = 6;
  const TrainResult r = train(model, corpus, config);
  ASSERT_EQ(r.epoch_losses.size(), 4u);
  for (double l : r.epoch_losses) EXPECT_NEAR(l, r.epoch_losses.front(), 1e-12 * r.epoch_losses.front());
  const auto a = std::as_const(before).parameters();
  const auto b = std::as_const(model).parameters();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i].second, *b[i].second) << a[i].first;
}

TEST(Train, SameSeedSameTrajectory) {
  const Corpus corpus = gen_task(Task::Sort, 30, 4, 5, 3);
  const ModelConfig mc{.vocab = corpus.vocab, .hidden = 5, .depth = 3};
  TrainConfig config;
  config.epochs = 3;
  config.batch_size = 7;
  config.seed = 99;
  Seq2SeqModel a = Seq2SeqModel::random(mc, 4), b = Seq2SeqModel::random(mc, 4);
  EXPECT_EQ(train(a, corpus, config).epoch_losses, train(b, corpus, config).epoch_losses);
  EXPECT_EQ(a.w_out, b.w_out);
}

TEST(Train, MemorizesASinglePair) {
  const Corpus corpus = single_pair();
  Seq2SeqModel model = Seq2SeqModel::random({.vocab = corpus.vocab, .hidden = 16, .depth = 2}, 5);
  TrainConfig config;
  config.epochs = 500;
  config.learning_rate = 1e-2;
  const TrainResult r = train(model, corpus, config);
  EXPECT_LT(r.epoch_losses.back(), 0.05);
  EXPECT_LT(r.epoch_losses.back(), r.epoch_losses.front());
  EXPECT_EQ(generate(model, corpus.pairs[0].src, 10), corpus.pairs[0].tgt);
  EXPECT_EQ(corpus_exact_match(model, corpus), 1.0);
}

TEST(Train, NonFiniteLossNamesEpochAndBatch) {
  const Corpus corpus = single_pair();
  Seq2SeqModel model = Seq2SeqModel::random({.vocab = corpus.vocab, .hidden = 4, .depth = 1}, 6);
  model.w_out[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    train(model, corpus, TrainConfig{});
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.epoch(), 0u);
    EXPECT_EQ(e.batch(), 0u);
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Train, RejectsBadInputs) {
  Corpus empty;
  empty.vocab = 9;
  Seq2SeqModel model({.vocab = 9, .hidden = 4, .depth = 1});
  EXPECT_THROW(train(model, empty, TrainConfig{}), std::invalid_argument);
  Corpus big = single_pair();
  big.vocab = 20;
  EXPECT_THROW(train(model, big, TrainConfig{}), std::invalid_argument);
}

TEST(Train, FrozenOneHotLevelsMatchMultiLevelConnector) {
  const Corpus corpus = gen_task(Task::Copy, 24, 4, 5, 7);
  const std::size_t depth = 3;
  ModelConfig ham_config{.vocab = corpus.vocab, .hidden = 6, .depth = depth};
  ModelConfig plain = ham_config;
  plain.connector = Connector::MultiLevel;

  Seq2SeqModel a = Seq2SeqModel::random(ham_config, 8);
  a.level_logits = HamWeights::one_hot(depth, depth).logits();
  Seq2SeqModel b = Seq2SeqModel::random(plain, 8);

  TrainConfig config;
  config.epochs = 20;
  config.batch_size = 8;
  config.seed = 9;
  config.train_level_weights = false;
  const TrainResult ra = train(a, corpus, config);
  const TrainResult rb = train(b, corpus, config);
  for (std::size_t e = 0; e < ra.epoch_losses.size(); ++e) {
    EXPECT_NEAR(ra.epoch_losses[e], rb.epoch_losses[e], 1e-5 * rb.epoch_losses[e]) << "epoch " << e;
  }
  EXPECT_EQ(a.level_logits, HamWeights::one_hot(depth, depth).logits());
}

TEST(Train, LevelLogitsMoveWhenTrainable) {
  const Corpus corpus = gen_task(Task::Reverse, 16, 3, 4, 10);
  Seq2SeqModel model = Seq2SeqModel::random({.vocab = corpus.vocab, .hidden = 4, .depth = 3}, 11);
  TrainConfig config;
  config.epochs = 2;
  train(model, corpus, config);
  EXPECT_NE(model.level_logits, Tensor::zeros(Shape{3}));
}

TEST(CorpusLoss, PositiveAndBatchIndependent) {
  const Corpus corpus = gen_task(Task::Copy, 13, 3, 4, 12);
  const Seq2SeqModel model = Seq2SeqModel::random({.vocab = corpus.vocab, .hidden = 4, .depth = 2}, 13);
  const double a = corpus_loss(model, corpus, 64), b = corpus_loss(model, corpus, 1);
  EXPECT_GT(a, 0.0);
  EXPECT_NEAR(a, b, 1e-12);
}

TEST(Sweep, SingleDepthIsTriviallyMonotone) {
  SweepConfig c = tiny_sweep();
  c.depths = {2};
  const SweepResult r = depth_sweep(c);
  EXPECT_TRUE(r.monotone);
  ASSERT_EQ(r.summary.size(), 1u);
  EXPECT_EQ(r.summary_json(c.tolerance)["verdict"], "monotone within 5%");
}

TEST(Sweep, RepeatedDepthGivesIdenticalBest) {
  SweepConfig c = tiny_sweep();
  c.depths = {2, 2};
  const SweepResult r = depth_sweep(c);
  ASSERT_EQ(r.summary.size(), 2u);
  EXPECT_EQ(r.summary[0].best_loss, r.summary[1].best_loss);
  EXPECT_TRUE(r.monotone);
}

TEST(Sweep, RecordsAndCsv) {
  const SweepConfig c = tiny_sweep();
  const SweepResult r = depth_sweep(c);
  ASSERT_EQ(r.records.size(), 4u);
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    EXPECT_EQ(r.records[i].depth, c.depths[i / 2]);
    EXPECT_EQ(r.records[i].seed, restart_seed(c.seed, i % 2));
    EXPECT_GT(r.records[i].final_loss, 0.0);
    EXPECT_EQ(r.records[i].wall_time_s, 0.0);
  }
  for (const auto& s : r.summary) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& rec : r.records)
      if (rec.depth == s.depth) best = std::min(best, rec.final_loss);
    EXPECT_EQ(s.best_loss, best);
  }
  const std::string csv = sweep_csv(r.records);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "depth,seed,final_loss,metric,wall_time_s");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST(Sweep, ThreadCountDoesNotChangeResults) {
  SweepConfig one = tiny_sweep(), many = tiny_sweep();
  one.threads = 1;
  many.threads = 3;
  EXPECT_EQ(sweep_csv(depth_sweep(one).records), sweep_csv(depth_sweep(many).records));
}

TEST(SweepConfig, JsonRoundTripAndValidation) {
  const SweepConfig c = tiny_sweep();
  const SweepConfig back = SweepConfig::from_json(nlohmann::json::parse(c.to_json().dump()));
  EXPECT_EQ(back.to_json(), c.to_json());

  EXPECT_THROW(SweepConfig::from_json(nlohmann::json{{"depth", 3}}), std::invalid_argument);
  EXPECT_THROW(SweepConfig::from_json(nlohmann::json{{"pairs", "many"}}), std::invalid_argument);
  SweepConfig bad = tiny_sweep();
  bad.depths = {2, 1};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad.depths = {0, 1};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = tiny_sweep();
  bad.restarts = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = tiny_sweep();
  bad.train.learning_rate = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}
