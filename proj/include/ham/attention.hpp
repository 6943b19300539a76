#pragma once

#include <cstddef>
#include <vector>

#include "ham/autodiff.hpp"
#include "ham/tensor.hpp"

// Soft attention with the scaled dot-product compatibility function.
//
// Two layouts are in use. The query-vector form stores a key sequence as a
// dk x n matrix whose columns are the keys. The matrix form (sdp_attention,
// multi_head, self_attention_layer) stores one token per row. The taped
// variants in ham::ad take keys row-per-token as well.

namespace ham {

/// n key vectors of dimension dk held as the columns of a dk x n matrix.
/// Values coincide with keys.
class KeySequence {
 public:
  explicit KeySequence(Tensor keys);
  /// Builds from an n x dk matrix with one key per row.
  static KeySequence from_rows(const Tensor& rows);

  std::size_t dim() const { return keys_.rows(); }
  std::size_t length() const { return keys_.cols(); }
  const Tensor& matrix() const { return keys_; }
  Tensor key(std::size_t i) const { return keys_.col(i); }
  /// n x dk view, one key per row.
  Tensor rows() const { return transpose(keys_); }

 private:
  Tensor keys_;
};

class Query {
 public:
  explicit Query(Tensor q);
  const Tensor& vector() const { return q_; }
  std::size_t dim() const { return q_.size(); }

 private:
  Tensor q_;
};

/// Per-head projections W_i^Q, W_i^K, W_i^V (d_model x dk each, applied on
/// the right) and the output projection W^O (h*dk x d_model).
struct MultiHeadParams {
  std::vector<Tensor> w_q;
  std::vector<Tensor> w_k;
  std::vector<Tensor> w_v;
  Tensor w_o;

  std::size_t heads() const { return w_q.size(); }
  /// Throws DimensionError unless the projections are mutually consistent.
  void validate(std::size_t d_model) const;
};

/// <k, q> / sqrt(dk)
double scaled_dot_score(const Tensor& k, const Tensor& q);

/// softmax over i of scaled_dot_score(k_i, q)
Tensor attention_distribution(const KeySequence& keys, const Query& q);

/// sum_i p(i | K, q) k_i
Tensor vanilla_attention(const Query& q, const KeySequence& keys);

/// softmax(Q K^T / sqrt(dk)) V with Q: m x dk, K: n x dk, V: n x dv.
Tensor sdp_attention(const Tensor& q, const Tensor& k, const Tensor& v);

/// Concat(head_1, ..., head_h) W^O, head_i = sdp_attention(Q W_i^Q, K W_i^K, V W_i^V).
Tensor multi_head(const Tensor& q, const Tensor& k, const Tensor& v, const MultiHeadParams& params);

/// Feeds each attention output back as the next query, `depth` times, and
/// returns the last output.
Tensor multi_level_attention(const Query& q, const KeySequence& keys, std::size_t depth);

/// sdp_attention(X, X, X); no residual, normalization, or positional terms.
Tensor self_attention_layer(const Tensor& x);

namespace ad {

/// Differentiable vanilla attention. Either q: [dk] with keys: [n, dk], or a
/// batch q: [B, dk] with keys: [B, n, dk].
Var vanilla_attention(Var q, Var keys);

/// Differentiable sdp_attention on row-per-token matrices.
Var sdp_attention(Var q, Var k, Var v);

Var self_attention_layer(Var x);

}  // namespace ad

}  // namespace ham
