#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ham/attention.hpp"
#include "ham/autodiff.hpp"
#include "ham/tensor.hpp"

// Hierarchical attention: d stacked attention levels whose outputs are
// mixed by softmax(c), c being d trainable scalars. Ham-V iterates vanilla
// attention of a query against a fixed key sequence; Ham-S iterates
// self-attention over the whole sequence. Levels are numbered 1..d; the
// raw query (level 0) is never part of the mixture.

namespace ham {

class HamWeights {
 public:
  /// depth levels with c = 0, i.e. uniform level weights 1/depth.
  explicit HamWeights(std::size_t depth);
  explicit HamWeights(Tensor logits);

  /// c_level = magnitude, every other entry 0. `level` is 1-based.
  static HamWeights one_hot(std::size_t depth, std::size_t level, double magnitude = 20.0);

  std::size_t depth() const { return c_.size(); }
  const Tensor& logits() const { return c_; }
  Tensor& logits() { return c_; }

  /// alpha = softmax(c)
  Tensor level_weights() const { return softmax_vec(c_); }

 private:
  Tensor c_;
};

/// Outputs of levels 1..depth of the multi-level chain q_t = Attention(q_{t-1}, K, K).
std::vector<Tensor> ham_v_levels(const Query& q, const KeySequence& keys, std::size_t depth);

/// sum_t alpha_t q_t over levels t = 1..d.
Tensor ham_v(const Query& q, const KeySequence& keys, const HamWeights& w);

/// Outputs of levels 1..depth of X_t = self_attention_layer(X_{t-1}).
std::vector<Tensor> ham_s_levels(const Tensor& x, std::size_t depth);

/// sum_t alpha_t X_t over levels t = 1..d.
Tensor ham_s(const Tensor& x, const HamWeights& w);

namespace ad {

/// Differentiable Ham-V; q/keys layouts as for ad::vanilla_attention, c: [d].
Var ham_v(Var q, Var keys, Var c);
/// Differentiable Ham-S over an n x dk sequence.
Var ham_s(Var x, Var c);
/// Last level only (plain multi-level attention), for reduction comparisons.
Var multi_level_attention(Var q, Var keys, std::size_t depth);

}  // namespace ad

// ---- norm-bound verification ----------------------------------------

struct NormBoundConfig {
  std::size_t trials = 10000;
  std::size_t min_dim = 2, max_dim = 16;
  std::size_t min_length = 1, max_length = 32;
  double entry_bound = 3.0;
  std::size_t max_depth = 10;
  double tolerance = 1e-9;
  std::size_t equal_key_trials = 100;
  std::uint64_t seed = 0;
};

/// A (q, K) pair with the quantity that broke a bound, kept for replay.
struct BoundInstance {
  Tensor query;
  Tensor keys;  ///< dk x n, keys as columns
  std::size_t level = 0;  ///< 0 for the Ham-V mixture itself
  double output_norm = 0.0;
  double bound = 0.0;
};

struct NormBoundReport {
  std::size_t trials = 0;
  std::size_t outputs_checked = 0;
  std::size_t upper_violations = 0;
  std::optional<BoundInstance> first_upper_violation;
  double worst_upper_slack = 0.0;  ///< max of norm - max_i ||k_i|| seen
  std::size_t lower_violations = 0;  ///< level-1 outputs below min_i ||k_i||
  /// The fixed cancellation case K = [(1,0), (-1,0)], q = (0,1).
  BoundInstance counterexample;
  bool counterexample_violates_lower = false;
  std::size_t equal_key_trials = 0;
  std::size_t equal_key_untight = 0;  ///< equal-key trials where either bound was not attained

  bool upper_bound_holds() const { return upper_violations == 0; }
};

/// Samples random (q, K) and checks ||output||_2 <= max_i ||k_i||_2 + tol for
/// every Ham-V level 1..max_depth and for the mixture under random c. Also
/// counts violations of the claimed lower bound min_i ||k_i||_2, which does
/// not hold in general.
NormBoundReport check_norm_bounds(const NormBoundConfig& config);

}  // namespace ham
