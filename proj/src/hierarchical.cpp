#include "ham/hierarchical.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ham/random.hpp"

namespace ham {

HamWeights::HamWeights(std::size_t depth) {
  if (depth == 0) throw DomainError("HamWeights: depth must be at least 1");
  c_ = Tensor(Shape{depth}, 0.0);
}

HamWeights::HamWeights(Tensor logits) : c_(std::move(logits)) {
  if (c_.rank() != 1) throw DimensionError("HamWeights: logits must be a vector");
}

HamWeights HamWeights::one_hot(std::size_t depth, std::size_t level, double magnitude) {
  if (level == 0 || level > depth) {
    throw DomainError("HamWeights::one_hot: level " + std::to_string(level) + " outside 1.." +
                      std::to_string(depth));
  }
  HamWeights w(depth);
  w.c_[level - 1] = magnitude;
  return w;
}

std::vector<Tensor> ham_v_levels(const Query& q, const KeySequence& keys, std::size_t depth) {
  if (depth == 0) throw DomainError("ham_v: depth must be at least 1");
  std::vector<Tensor> levels;
  levels.reserve(depth);
  Tensor current = q.vector();
  for (std::size_t t = 0; t < depth; ++t) {
    current = vanilla_attention(Query(current), keys);
    levels.push_back(current);
  }
  return levels;
}

namespace {

Tensor mix(const std::vector<Tensor>& levels, const Tensor& alpha) {
  Tensor out(levels.front().shape());
  for (std::size_t t = 0; t < levels.size(); ++t) out = out + alpha[t] * levels[t];
  return out;
}

}  // namespace

Tensor ham_v(const Query& q, const KeySequence& keys, const HamWeights& w) {
  return mix(ham_v_levels(q, keys, w.depth()), w.level_weights());
}

std::vector<Tensor> ham_s_levels(const Tensor& x, std::size_t depth) {
  if (depth == 0) throw DomainError("ham_s: depth must be at least 1");
  std::vector<Tensor> levels;
  levels.reserve(depth);
  Tensor current = x;
  for (std::size_t t = 0; t < depth; ++t) {
    current = self_attention_layer(current);
    levels.push_back(current);
  }
  return levels;
}

Tensor ham_s(const Tensor& x, const HamWeights& w) {
  return mix(ham_s_levels(x, w.depth()), w.level_weights());
}

namespace ad {

Var ham_v(Var q, Var keys, Var c) {
  if (c.shape().rank() != 1) throw DimensionError("ham_v: level logits must be a vector");
  const std::size_t depth = c.shape()[0];
  std::vector<Var> levels;
  levels.reserve(depth);
  Var current = q;
  for (std::size_t t = 0; t < depth; ++t) {
    current = vanilla_attention(current, keys);
    levels.push_back(current);
  }
  return weighted_sum(levels, softmax(c));
}

Var ham_s(Var x, Var c) {
  if (c.shape().rank() != 1) throw DimensionError("ham_s: level logits must be a vector");
  const std::size_t depth = c.shape()[0];
  std::vector<Var> levels;
  levels.reserve(depth);
  Var current = x;
  for (std::size_t t = 0; t < depth; ++t) {
    current = self_attention_layer(current);
    levels.push_back(current);
  }
  return weighted_sum(levels, softmax(c));
}

Var multi_level_attention(Var q, Var keys, std::size_t depth) {
  if (depth == 0) throw DomainError("multi_level_attention: depth must be at least 1");
  Var current = q;
  for (std::size_t t = 0; t < depth; ++t) current = vanilla_attention(current, keys);
  return current;
}

}  // namespace ad

namespace {

struct KeyNorms {
  double min = std::numeric_limits<double>::infinity();
  double max = 0.0;
};

KeyNorms key_norms(const KeySequence& keys) {
  KeyNorms k;
  for (std::size_t i = 0; i < keys.length(); ++i) {
    const double n = l2_norm(keys.key(i));
    k.min = std::min(k.min, n);
    k.max = std::max(k.max, n);
  }
  return k;
}

}  // namespace

NormBoundReport check_norm_bounds(const NormBoundConfig& config) {
  if (config.trials == 0) throw DomainError("check_norm_bounds: trials must be at least 1");
  if (config.max_depth == 0) throw DomainError("check_norm_bounds: max_depth must be at least 1");
  NormBoundReport report;
  report.worst_upper_slack = -std::numeric_limits<double>::infinity();
  Rng rng(config.seed);
  const double lo = -config.entry_bound, hi = config.entry_bound;

  auto check_upper = [&](const Tensor& out, const Tensor& q, const KeySequence& keys,
                         std::size_t level, double bound) {
    const double norm = l2_norm(out);
    ++report.outputs_checked;
    report.worst_upper_slack = std::max(report.worst_upper_slack, norm - bound);
    if (!(norm <= bound + config.tolerance)) {
      ++report.upper_violations;
      if (!report.first_upper_violation) {
        report.first_upper_violation = BoundInstance{q, keys.matrix(), level, norm, bound};
      }
    }
  };

  for (std::size_t trial = 0; trial < config.trials; ++trial) {
    const std::size_t dk = uniform_index(rng, config.min_dim, config.max_dim);
    const std::size_t n = uniform_index(rng, config.min_length, config.max_length);
    const KeySequence keys(uniform_tensor(rng, Shape{dk, n}, lo, hi));
    const Tensor q = uniform_tensor(rng, Shape{dk}, lo, hi);
    const HamWeights w(uniform_tensor(rng, Shape{config.max_depth}, -3.0, 3.0));
    const KeyNorms norms = key_norms(keys);

    const auto levels = ham_v_levels(Query(q), keys, config.max_depth);
    for (std::size_t t = 0; t < levels.size(); ++t) check_upper(levels[t], q, keys, t + 1, norms.max);
    check_upper(mix(levels, w.level_weights()), q, keys, 0, norms.max);

    if (l2_norm(levels.front()) < norms.min - config.tolerance) ++report.lower_violations;
    ++report.trials;
  }

  // Cancellation: both scores are 0, the weights are uniform, the keys cancel.
  {
    const KeySequence keys(Tensor::matrix({{1.0, -1.0}, {0.0, 0.0}}));
    const Tensor q = Tensor::vector({0.0, 1.0});
    const Tensor out = vanilla_attention(Query(q), keys);
    const KeyNorms norms = key_norms(keys);
    report.counterexample = BoundInstance{q, keys.matrix(), 1, l2_norm(out), norms.min};
    report.counterexample_violates_lower = l2_norm(out) < norms.min - config.tolerance;
  }

  // All keys equal: every level returns that key, so both bounds are attained.
  for (std::size_t trial = 0; trial < config.equal_key_trials; ++trial) {
    const std::size_t dk = uniform_index(rng, config.min_dim, config.max_dim);
    const std::size_t n = uniform_index(rng, config.min_length, config.max_length);
    const Tensor v = uniform_tensor(rng, Shape{dk}, lo, hi);
    const KeySequence keys(columns(std::vector<Tensor>(n, v)));
    const Tensor q = uniform_tensor(rng, Shape{dk}, lo, hi);
    const double vn = l2_norm(v);
    bool tight = true;
    for (const Tensor& out : ham_v_levels(Query(q), keys, config.max_depth)) {
      tight = tight && std::abs(l2_norm(out) - vn) <= 1e-12 * std::max(1.0, vn);
    }
    ++report.equal_key_trials;
    if (!tight) ++report.equal_key_untight;
  }
  return report;
}

}  // namespace ham
