#include "ham/model.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "ham/attention.hpp"
#include "ham/random.hpp"

namespace ham {

using nlohmann::json;

GruParams GruParams::zeros(std::size_t input, std::size_t hidden) {
  GruParams p;
  for (Tensor* w : {&p.w_z, &p.w_r, &p.w_h}) *w = Tensor(Shape{input, hidden});
  for (Tensor* u : {&p.u_z, &p.u_r, &p.u_h}) *u = Tensor(Shape{hidden, hidden});
  for (Tensor* b : {&p.b_z, &p.b_r, &p.b_h}) *b = Tensor(Shape{hidden});
  return p;
}

void ModelConfig::validate() const {
  if (vocab <= static_cast<std::size_t>(kEos)) {
    throw DomainError("model vocab must include the reserved ids 0-2, got " + std::to_string(vocab));
  }
  if (hidden == 0) throw DomainError("model hidden size must be positive");
  if (depth == 0) throw DomainError("model attention depth must be at least 1");
}

Seq2SeqModel::Seq2SeqModel(const ModelConfig& cfg)
    : config(cfg),
      embedding(Shape{std::max<std::size_t>(cfg.vocab, 1), std::max<std::size_t>(cfg.hidden, 1)}),
      level_logits(Shape{std::max<std::size_t>(cfg.depth, 1)}),
      w_out(Shape{std::max<std::size_t>(cfg.hidden, 1), std::max<std::size_t>(cfg.vocab, 1)}) {
  config.validate();
  encoder_fwd = GruParams::zeros(cfg.hidden, cfg.hidden);
  encoder_bwd = GruParams::zeros(cfg.hidden, cfg.hidden);
  decoder = GruParams::zeros(2 * cfg.hidden, cfg.hidden);
}

Seq2SeqModel Seq2SeqModel::random(const ModelConfig& config, std::uint64_t seed) {
  Seq2SeqModel model(config);
  Rng rng(seed);
  for (auto& [name, tensor] : model.parameters()) {
    if (name == "level_logits") continue;
    *tensor = uniform_tensor(rng, tensor->shape(), -0.1, 0.1);
  }
  return model;
}

namespace {

template <typename Model, typename Ptr>
std::vector<std::pair<std::string, Ptr>> collect(Model& m) {
  std::vector<std::pair<std::string, Ptr>> out;
  out.emplace_back("embedding", &m.embedding);
  auto add_gru = [&](const std::string& prefix, auto& g) {
    out.emplace_back(prefix + ".w_z", &g.w_z);
    out.emplace_back(prefix + ".u_z", &g.u_z);
    out.emplace_back(prefix + ".b_z", &g.b_z);
    out.emplace_back(prefix + ".w_r", &g.w_r);
    out.emplace_back(prefix + ".u_r", &g.u_r);
    out.emplace_back(prefix + ".b_r", &g.b_r);
    out.emplace_back(prefix + ".w_h", &g.w_h);
    out.emplace_back(prefix + ".u_h", &g.u_h);
    out.emplace_back(prefix + ".b_h", &g.b_h);
  };
  add_gru("encoder_fwd", m.encoder_fwd);
  if (m.config.bidirectional) add_gru("encoder_bwd", m.encoder_bwd);
  add_gru("decoder", m.decoder);
  out.emplace_back("level_logits", &m.level_logits);
  out.emplace_back("w_out", &m.w_out);
  return out;
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> Seq2SeqModel::parameters() {
  return collect<Seq2SeqModel, Tensor*>(*this);
}

std::vector<std::pair<std::string, const Tensor*>> Seq2SeqModel::parameters() const {
  return collect<const Seq2SeqModel, const Tensor*>(*this);
}

// ---- differentiable forward -----------------------------------------

BoundModel bind(ad::Tape& tape, const Seq2SeqModel& model, BindOptions options) {
  std::vector<ad::Var> vars;
  for (const auto& [name, tensor] : model.parameters()) {
    const bool trainable = name != "level_logits" || options.train_level_weights;
    vars.push_back(options.differentiable && trainable ? tape.leaf(*tensor) : tape.constant(*tensor));
  }
  return bind_parameters(model, vars);
}

BoundModel bind_parameters(const Seq2SeqModel& model, std::span<const ad::Var> params) {
  const auto named = model.parameters();
  if (params.size() != named.size()) {
    throw DimensionError("bind: " + std::to_string(params.size()) + " vars for " +
                         std::to_string(named.size()) + " parameters");
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (!(params[i].shape() == named[i].second->shape())) {
      throw DimensionError("bind: '" + named[i].first + "' expects " +
                           named[i].second->shape().str() + ", got " + params[i].shape().str());
    }
  }
  BoundModel m;
  m.model = &model;
  m.leaves.assign(params.begin(), params.end());
  std::size_t next = 0;
  auto take = [&] { return params[next++]; };
  auto take_gru = [&] {
    BoundGru b;
    for (ad::Var* v : {&b.w_z, &b.u_z, &b.b_z, &b.w_r, &b.u_r, &b.b_r, &b.w_h, &b.u_h, &b.b_h}) {
      *v = take();
    }
    return b;
  };
  // Order matches Seq2SeqModel::parameters().
  m.embedding = take();
  m.encoder_fwd = take_gru();
  if (model.config.bidirectional) m.encoder_bwd = take_gru();
  m.decoder = take_gru();
  m.level_logits = take();
  m.w_out = take();
  return m;
}

ad::Var gru_step(const BoundGru& g, ad::Var x, ad::Var h) {
  using namespace ad;
  Var z = sigmoid(add_bias(matmul(x, g.w_z) + matmul(h, g.u_z), g.b_z));
  Var r = sigmoid(add_bias(matmul(x, g.w_r) + matmul(h, g.u_r), g.b_r));
  Var candidate = tanh(add_bias(matmul(x, g.w_h) + matmul(r * h, g.u_h), g.b_h));
  return h + z * (candidate - h);
}

namespace {

std::size_t common_length(std::span<const TokenSeq> batch) {
  if (batch.empty()) throw DomainError("encode: empty batch");
  const std::size_t n = batch.front().size();
  if (n == 0) throw DomainError("encode: empty input sequence");
  for (const auto& s : batch) {
    if (s.size() != n) throw DimensionError("encode: batch sequences differ in length");
  }
  return n;
}

}  // namespace

EncoderOutput encode(const BoundModel& m, std::span<const TokenSeq> batch) {
  const std::size_t n = common_length(batch);
  const std::size_t batch_size = batch.size();
  const std::size_t hidden = m.model->config.hidden;
  ad::Tape& tape = *m.embedding.tape();

  std::vector<ad::Var> inputs;
  inputs.reserve(n);
  std::vector<int> column(batch_size);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t b = 0; b < batch_size; ++b) column[b] = batch[b][t];
    inputs.push_back(ad::embedding(m.embedding, column));
  }

  const ad::Var zero = tape.constant(Tensor(Shape{batch_size, hidden}));
  EncoderOutput out;
  out.states.reserve(n);
  ad::Var h = zero;
  for (std::size_t t = 0; t < n; ++t) {
    h = gru_step(m.encoder_fwd, inputs[t], h);
    out.states.push_back(h);
  }
  out.final_state = h;

  if (m.model->config.bidirectional) {
    h = zero;
    for (std::size_t t = n; t-- > 0;) {
      h = gru_step(m.encoder_bwd, inputs[t], h);
      out.states[t] = out.states[t] + h;
    }
  }
  out.keys = ad::stack(out.states);
  return out;
}

ad::Var connect(const BoundModel& m, ad::Var query, ad::Var keys) {
  switch (m.model->config.connector) {
    case Connector::MultiLevel:
      return ad::multi_level_attention(query, keys, m.model->config.depth);
    case Connector::Ham:
      break;
  }
  return ad::ham_v(query, keys, m.level_logits);
}

DecoderStep decode_step(const BoundModel& m, ad::Var h_dec, ad::Var keys,
                        std::span<const int> prev_tokens) {
  if (h_dec.shape().rank() != 2 || h_dec.shape()[1] != m.model->config.hidden ||
      h_dec.shape()[0] != prev_tokens.size()) {
    throw DimensionError("decode_step: decoder state " + h_dec.shape().str() + " for " +
                         std::to_string(prev_tokens.size()) + " tokens");
  }
  ad::Var context = connect(m, h_dec, keys);
  ad::Var x = ad::concat(ad::embedding(m.embedding, prev_tokens), context);
  ad::Var h = gru_step(m.decoder, x, h_dec);
  return {ad::matmul(h, m.w_out), h};
}

ad::Var sequence_loss(const BoundModel& m, std::span<const SequencePair* const> batch) {
  if (batch.empty()) throw DomainError("sequence_loss: empty batch");
  const std::size_t batch_size = batch.size();
  const std::size_t tgt_len = batch.front()->tgt.size();
  std::vector<TokenSeq> sources;
  sources.reserve(batch_size);
  for (const auto* p : batch) {
    if (p->tgt.size() != tgt_len) throw DimensionError("sequence_loss: batch targets differ in length");
    sources.push_back(p->src);
  }
  EncoderOutput enc = encode(m, sources);

  std::vector<int> prev(batch_size, kBos), target(batch_size);
  ad::Var h = enc.final_state;
  std::vector<ad::Var> step_losses;
  step_losses.reserve(tgt_len + 1);
  for (std::size_t t = 0; t <= tgt_len; ++t) {
    for (std::size_t b = 0; b < batch_size; ++b) target[b] = t < tgt_len ? batch[b]->tgt[t] : kEos;
    DecoderStep step = decode_step(m, h, enc.keys, prev);
    step_losses.push_back(ad::cross_entropy(step.logits, target));
    h = step.hidden;
    prev = target;
  }
  ad::Var total = step_losses.front();
  for (std::size_t t = 1; t < step_losses.size(); ++t) total = total + step_losses[t];
  return ad::scale(total, 1.0 / static_cast<double>(step_losses.size()));
}

// ---- single-sequence convenience ------------------------------------

Tensor gru_step(const GruParams& params, const Tensor& x, const Tensor& h) {
  if (x.rank() != 1 || h.rank() != 1) throw DimensionError("gru_step: expected vectors");
  ad::Tape tape;
  BoundGru g{tape.constant(params.w_z), tape.constant(params.u_z), tape.constant(params.b_z),
             tape.constant(params.w_r), tape.constant(params.u_r), tape.constant(params.b_r),
             tape.constant(params.w_h), tape.constant(params.u_h), tape.constant(params.b_h)};
  ad::Var out = gru_step(g, tape.constant(x.reshaped(Shape{1, x.size()})),
                         tape.constant(h.reshaped(Shape{1, h.size()})));
  return out.value().reshaped(Shape{h.size()});
}

Tensor encode(const Seq2SeqModel& model, const TokenSeq& tokens) {
  if (tokens.empty()) throw DomainError("encode: empty input sequence");
  for (int id : tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= model.config.vocab) {
      throw DomainError("encode: token id " + std::to_string(id) + " outside vocabulary");
    }
  }
  ad::Tape tape;
  BoundModel m = bind(tape, model, {.differentiable = false});
  const TokenSeq batch[] = {tokens};
  EncoderOutput enc = encode(m, batch);
  return enc.keys.value().reshaped(Shape{tokens.size(), model.config.hidden});
}

DecodeResult decode_step(const Seq2SeqModel& model, const Tensor& h_dec, const Tensor& enc_states,
                         int prev_token) {
  const std::size_t hidden = model.config.hidden;
  if (h_dec.rank() != 1 || h_dec.size() != hidden || enc_states.rank() != 2 ||
      enc_states.cols() != hidden) {
    throw DimensionError("decode_step: state " + h_dec.shape().str() + ", encoder states " +
                         enc_states.shape().str() + ", hidden " + std::to_string(hidden));
  }
  ad::Tape tape;
  BoundModel m = bind(tape, model, {.differentiable = false});
  ad::Var keys = tape.constant(enc_states.reshaped(Shape{1, enc_states.rows(), hidden}));
  ad::Var h = tape.constant(h_dec.reshaped(Shape{1, hidden}));
  const int prev[] = {prev_token};
  DecoderStep step = decode_step(m, h, keys, prev);
  return {step.logits.value().reshaped(Shape{model.config.vocab}),
          step.hidden.value().reshaped(Shape{hidden})};
}

TokenSeq generate(const Seq2SeqModel& model, const TokenSeq& src, std::size_t max_len) {
  ad::Tape tape;
  BoundModel m = bind(tape, model, {.differentiable = false});
  const TokenSeq batch[] = {src};
  EncoderOutput enc = encode(m, batch);
  TokenSeq out;
  ad::Var h = enc.final_state;
  int prev[] = {kBos};
  for (std::size_t step = 0; step < max_len; ++step) {
    DecoderStep d = decode_step(m, h, enc.keys, prev);
    auto logits = d.logits.value().data();
    const int next = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (next == kEos) break;
    out.push_back(next);
    prev[0] = next;
    h = d.hidden;
  }
  return out;
}

// ---- checkpoints -----------------------------------------------------

void save_checkpoint(const Seq2SeqModel& model, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["format"] = "ham-seq2seq";
  j["version"] = 1;
  j["config"] = {{"vocab", model.config.vocab},
                 {"hidden", model.config.hidden},
                 {"depth", model.config.depth},
                 {"bidirectional", model.config.bidirectional},
                 {"connector", model.config.connector == Connector::Ham ? "ham" : "multi_level"}};
  auto params = nlohmann::ordered_json::array();
  for (const auto& [name, tensor] : model.parameters()) {
    std::vector<std::size_t> shape;
    for (std::size_t i = 0; i < tensor->rank(); ++i) shape.push_back(tensor->shape()[i]);
    nlohmann::ordered_json p;
    p["name"] = name;
    p["shape"] = shape;
    p["data"] = std::vector<double>(tensor->data().begin(), tensor->data().end());
    params.push_back(std::move(p));
  }
  j["parameters"] = std::move(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << j.dump() << '\n';
}

Seq2SeqModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("malformed checkpoint " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "ham-seq2seq" || j.value("version", 0) != 1) {
    throw std::runtime_error("unsupported checkpoint format in " + path.string());
  }
  const json& c = j.at("config");
  ModelConfig config;
  config.vocab = c.at("vocab").get<std::size_t>();
  config.hidden = c.at("hidden").get<std::size_t>();
  config.depth = c.at("depth").get<std::size_t>();
  config.bidirectional = c.at("bidirectional").get<bool>();
  const std::string connector = c.at("connector").get<std::string>();
  if (connector == "ham") {
    config.connector = Connector::Ham;
  } else if (connector == "multi_level") {
    config.connector = Connector::MultiLevel;
  } else {
    throw std::runtime_error("unknown connector '" + connector + "' in checkpoint");
  }
  Seq2SeqModel model(config);
  const json& params = j.at("parameters");
  auto named = model.parameters();
  if (params.size() != named.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(params.size()) +
                             " parameters, model expects " + std::to_string(named.size()));
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    const json& p = params[i];
    if (p.at("name").get<std::string>() != named[i].first) {
      throw std::runtime_error("checkpoint parameter " + std::to_string(i) + " is '" +
                               p.at("name").get<std::string>() + "', expected '" + named[i].first +
                               "'");
    }
    const auto shape = p.at("shape").get<std::vector<std::size_t>>();
    Tensor t(Shape(std::span<const std::size_t>(shape)), p.at("data").get<std::vector<double>>());
    if (!(t.shape() == named[i].second->shape())) {
      throw std::runtime_error("checkpoint parameter '" + named[i].first + "' has shape " +
                               t.shape().str() + ", expected " + named[i].second->shape().str());
    }
    *named[i].second = std::move(t);
  }
  return model;
}

}  // namespace ham
