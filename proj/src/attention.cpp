#include "ham/attention.hpp"

#include <cmath>
#include <string>

namespace ham {

KeySequence::KeySequence(Tensor keys) : keys_(std::move(keys)) {
  if (keys_.rank() != 2) {
    throw DimensionError("KeySequence: expected a dk x n matrix, got " + keys_.shape().str());
  }
}

KeySequence KeySequence::from_rows(const Tensor& rows) {
  if (rows.rank() != 2) {
    throw DimensionError("KeySequence: expected an n x dk matrix, got " + rows.shape().str());
  }
  return KeySequence(transpose(rows));
}

Query::Query(Tensor q) : q_(std::move(q)) {
  if (q_.rank() != 1) throw DimensionError("Query: expected a vector, got " + q_.shape().str());
}

void MultiHeadParams::validate(std::size_t d_model) const {
  const std::size_t h = heads();
  if (h == 0) throw DomainError("multi_head: at least one head required");
  if (w_k.size() != h || w_v.size() != h) {
    throw DimensionError("multi_head: head counts differ between W^Q, W^K and W^V");
  }
  const std::size_t dk = w_q[0].cols();
  const std::size_t dv = w_v[0].cols();
  for (std::size_t i = 0; i < h; ++i) {
    const auto bad = [&](const Tensor& w, std::size_t cols) {
      return w.rank() != 2 || w.rows() != d_model || w.cols() != cols;
    };
    if (bad(w_q[i], dk) || bad(w_k[i], dk) || bad(w_v[i], dv)) {
      throw DimensionError("multi_head: head " + std::to_string(i) +
                           " projections inconsistent with d_model " + std::to_string(d_model));
    }
  }
  if (w_o.rank() != 2 || w_o.rows() != h * dv) {
    throw DimensionError("multi_head: W^O has shape " + w_o.shape().str() + ", expected " +
                         std::to_string(h * dv) + " rows");
  }
}

double scaled_dot_score(const Tensor& k, const Tensor& q) {
  if (k.size() != q.size()) {
    throw DimensionError("scaled_dot_score: key " + k.shape().str() + " vs query " + q.shape().str());
  }
  return dot(k, q) / std::sqrt(static_cast<double>(k.size()));
}

Tensor attention_distribution(const KeySequence& keys, const Query& q) {
  if (keys.dim() != q.dim()) {
    throw DimensionError("attention: keys have dimension " + std::to_string(keys.dim()) +
                         ", query has " + std::to_string(q.dim()));
  }
  const std::size_t n = keys.length();
  const std::size_t dk = keys.dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<double> scores(n, 0.0);
  for (std::size_t r = 0; r < dk; ++r)
    for (std::size_t i = 0; i < n; ++i) scores[i] += keys.matrix().at(r, i) * q.vector()[r];
  for (double& s : scores) s *= inv_sqrt;
  return Tensor(Shape{n}, softmax(scores));
}

Tensor vanilla_attention(const Query& q, const KeySequence& keys) {
  const Tensor p = attention_distribution(keys, q);
  Tensor out(Shape{keys.dim()});
  for (std::size_t r = 0; r < keys.dim(); ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < keys.length(); ++i) s += p[i] * keys.matrix().at(r, i);
    out[r] = s;
  }
  return out;
}

Tensor sdp_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.cols() != k.cols() ||
      k.rows() != v.rows()) {
    throw DimensionError("sdp_attention: Q " + q.shape().str() + ", K " + k.shape().str() + ", V " +
                         v.shape().str());
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(k.cols()));
  return matmul(softmax_rows(inv_sqrt * matmul(q, transpose(k))), v);
}

Tensor multi_head(const Tensor& q, const Tensor& k, const Tensor& v, const MultiHeadParams& params) {
  if (q.rank() != 2) throw DimensionError("multi_head: Q must be a matrix");
  params.validate(q.cols());
  const std::size_t m = q.rows();
  const std::size_t dv = params.w_v[0].cols();
  Tensor heads(Shape{m, params.heads() * dv});
  for (std::size_t h = 0; h < params.heads(); ++h) {
    const Tensor head = sdp_attention(matmul(q, params.w_q[h]), matmul(k, params.w_k[h]),
                                      matmul(v, params.w_v[h]));
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t j = 0; j < dv; ++j) heads.at(r, h * dv + j) = head.at(r, j);
  }
  return matmul(heads, params.w_o);
}

Tensor multi_level_attention(const Query& q, const KeySequence& keys, std::size_t depth) {
  if (depth == 0) throw DomainError("multi_level_attention: depth must be at least 1");
  Tensor current = q.vector();
  for (std::size_t level = 0; level < depth; ++level) {
    current = vanilla_attention(Query(std::move(current)), keys);
  }
  return current;
}

Tensor self_attention_layer(const Tensor& x) { return sdp_attention(x, x, x); }

namespace ad {

Var vanilla_attention(Var q, Var keys) {
  const Shape& qs = q.shape();
  const Shape& ks = keys.shape();
  if (qs.rank() == 1 && ks.rank() == 2) {
    if (ks[1] != qs[0]) {
      throw DimensionError("attention: query " + qs.str() + " against keys " + ks.str());
    }
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(qs[0]));
    Var p = softmax(scale(matvec(keys, q), inv_sqrt));
    return vecmat(p, keys);
  }
  if (qs.rank() == 2 && ks.rank() == 3) {
    if (ks[0] != qs[0] || ks[2] != qs[1]) {
      throw DimensionError("attention: query batch " + qs.str() + " against keys " + ks.str());
    }
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(qs[1]));
    Var p = softmax(scale(batched_matvec(keys, q), inv_sqrt));
    return batched_vecmat(p, keys);
  }
  throw DimensionError("attention: unsupported layout, query " + qs.str() + ", keys " + ks.str());
}

Var sdp_attention(Var q, Var k, Var v) {
  const Shape& qs = q.shape();
  const Shape& ks = k.shape();
  const Shape& vs = v.shape();
  if (qs.rank() != 2 || ks.rank() != 2 || vs.rank() != 2 || qs[1] != ks[1] || ks[0] != vs[0]) {
    throw DimensionError("sdp_attention: Q " + qs.str() + ", K " + ks.str() + ", V " + vs.str());
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(ks[1]));
  return matmul(softmax(scale(matmul(q, transpose(k)), inv_sqrt)), v);
}

Var self_attention_layer(Var x) { return sdp_attention(x, x, x); }

}  // namespace ad

}  // namespace ham
