#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ham/attention.hpp"
#include "ham/random.hpp"

using namespace ham;

namespace {

Tensor permute_rows(const Tensor& m, const std::vector<std::size_t>& perm) {
  Tensor out(m.shape());
  for (std::size_t r = 0; r < perm.size(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out.at(r, c) = m.at(perm[r], c);
  return out;
}

// Straight-line reference: weights from exp of scaled scores, normalized.
Tensor brute_force_attention(const Tensor& q_row, const Tensor& k_rows, const Tensor& v_rows) {
  const std::size_t n = k_rows.rows(), dk = k_rows.cols();
  std::vector<double> w(n);
  double top = -1e300;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < dk; ++j) s += k_rows.at(i, j) * q_row[j];
    w[i] = s / std::sqrt(static_cast<double>(dk));
    top = std::max(top, w[i]);
  }
  double total = 0.0;
  for (double& x : w) total += (x = std::exp(x - top));
  Tensor out(Shape{v_rows.cols()});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < v_rows.cols(); ++j) out[j] += w[i] / total * v_rows.at(i, j);
  return out;
}

}  // namespace

TEST(Score, Examples) {
  EXPECT_EQ(scaled_dot_score(Tensor::vector({1, 0, 0, 0}), Tensor::vector({1, 0, 0, 0})), 0.5);
  EXPECT_EQ(scaled_dot_score(Tensor::vector({1, 0}), Tensor::vector({0, 1})), 0.0);
  EXPECT_NEAR(scaled_dot_score(Tensor::vector({1, 1}), Tensor::vector({2, 0})), std::sqrt(2.0), 1e-15);
  EXPECT_THROW(scaled_dot_score(Tensor::vector({1, 1}), Tensor::vector({1, 1, 1})), DimensionError);
}

TEST(Distribution, IdenticalKeysGiveUniform) {
  const KeySequence keys(Tensor::matrix({{2, 2, 2}, {-1, -1, -1}}));
  const Tensor p = attention_distribution(keys, Query(Tensor::vector({0.3, 7})));
  for (double v : p.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Distribution, SingleKeyGetsAllWeight) {
  const KeySequence keys(Tensor::matrix({{4}, {-2}}));
  EXPECT_EQ(attention_distribution(keys, Query(Tensor::vector({1, 1})))[0], 1.0);
}

TEST(Distribution, TwoBasisKeys) {
  const KeySequence keys(Tensor::identity(2));
  const Tensor p = attention_distribution(keys, Query(Tensor::vector({10, 0})));
  // Two-way softmax of (10/sqrt 2, 0) is a logistic function of the gap.
  const double oracle = 1.0 / (1.0 + std::exp(-10.0 / std::sqrt(2.0)));
  EXPECT_NEAR(p[0], oracle, 1e-15);
  EXPECT_NEAR(p[1], 1.0 - oracle, 1e-15);
}

TEST(Distribution, QueryDimensionMismatch) {
  const KeySequence keys(Tensor::identity(3));
  EXPECT_THROW(attention_distribution(keys, Query(Tensor::vector({1, 2}))), DimensionError);
}

TEST(Vanilla, SingleKeyReturnsIt) {
  Rng rng(1);
  const Tensor k = uniform_tensor(rng, Shape{3}, -3, 3);
  const KeySequence keys(k.reshaped(Shape{3, 1}));
  EXPECT_EQ(vanilla_attention(Query(uniform_tensor(rng, Shape{3}, -3, 3)), keys), k);
}

TEST(Vanilla, EqualKeysReturnTheKey) {
  const Tensor v = Tensor::vector({1.5, -0.25});
  const KeySequence keys(columns(std::vector<Tensor>(5, v)));
  EXPECT_LT(max_abs_diff(vanilla_attention(Query(Tensor::vector({3, 1})), keys), v), 1e-15);
}

TEST(Vanilla, OpposedKeysCancel) {
  const KeySequence keys = KeySequence::from_rows(Tensor::matrix({{1, 0}, {-1, 0}}));
  const Tensor out = vanilla_attention(Query(Tensor::vector({0, 1})), keys);
  EXPECT_EQ(out, Tensor::vector({0, 0}));
}

TEST(Vanilla, MatchesBruteForce) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t dk = uniform_index(rng, 1, 8), n = uniform_index(rng, 1, 10);
    const Tensor rows = uniform_tensor(rng, Shape{n, dk}, -3, 3);
    const Tensor q = uniform_tensor(rng, Shape{dk}, -3, 3);
    const Tensor got = vanilla_attention(Query(q), KeySequence::from_rows(rows));
    EXPECT_LT(max_abs_diff(got, brute_force_attention(q, rows, rows)), 1e-12);
  }
}

TEST(Vanilla, InvariantToKeyOrder) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t dk = uniform_index(rng, 2, 6), n = uniform_index(rng, 2, 10);
    const Tensor rows = uniform_tensor(rng, Shape{n, dk}, -3, 3);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const Query q(uniform_tensor(rng, Shape{dk}, -3, 3));
    EXPECT_LT(max_abs_diff(vanilla_attention(q, KeySequence::from_rows(rows)),
                           vanilla_attention(q, KeySequence::from_rows(permute_rows(rows, perm)))),
              1e-12);
  }
}

TEST(Sdp, RowsAreIndependentAttentions) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = uniform_index(rng, 1, 5), n = uniform_index(rng, 1, 7);
    const std::size_t dk = uniform_index(rng, 1, 6), dv = uniform_index(rng, 1, 6);
    const Tensor q = uniform_tensor(rng, Shape{m, dk}, -3, 3);
    const Tensor k = uniform_tensor(rng, Shape{n, dk}, -3, 3);
    const Tensor v = uniform_tensor(rng, Shape{n, dv}, -3, 3);
    const Tensor out = sdp_attention(q, k, v);
    ASSERT_EQ(out.shape(), Shape({m, dv}));
    for (std::size_t r = 0; r < m; ++r) EXPECT_LT(max_abs_diff(out.row(r), brute_force_attention(q.row(r), k, v)), 1e-12);
  }
}

TEST(Sdp, SingleQueryEqualsVanilla) {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t dk = uniform_index(rng, 1, 16), n = uniform_index(rng, 1, 32);
    const Tensor rows = uniform_tensor(rng, Shape{n, dk}, -3, 3);
    const Tensor q = uniform_tensor(rng, Shape{dk}, -3, 3);
    const Tensor sdp = sdp_attention(q.reshaped(Shape{1, dk}), rows, rows);
    EXPECT_LT(max_abs_diff(sdp.reshaped(Shape{dk}), vanilla_attention(Query(q), KeySequence::from_rows(rows))), 1e-12);
  }
}

TEST(Sdp, ShapeErrors) {
  EXPECT_THROW(sdp_attention(Tensor::zeros(Shape{2, 3}), Tensor::zeros(Shape{4, 2}), Tensor::zeros(Shape{4, 2})),
               DimensionError);
  EXPECT_THROW(sdp_attention(Tensor::zeros(Shape{2, 3}), Tensor::zeros(Shape{4, 3}), Tensor::zeros(Shape{5, 2})),
               DimensionError);
}

TEST(MultiHead, OneHeadWithIdentityProjectionsIsSdp) {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = uniform_index(rng, 1, 8), m = uniform_index(rng, 1, 5), n = uniform_index(rng, 1, 9);
    MultiHeadParams p;
    p.w_q = {Tensor::identity(d)};
    p.w_k = {Tensor::identity(d)};
    p.w_v = {Tensor::identity(d)};
    p.w_o = Tensor::identity(d);
    const Tensor q = uniform_tensor(rng, Shape{m, d}, -3, 3);
    const Tensor k = uniform_tensor(rng, Shape{n, d}, -3, 3);
    const Tensor v = uniform_tensor(rng, Shape{n, d}, -3, 3);
    EXPECT_LT(max_abs_diff(multi_head(q, k, v, p), sdp_attention(q, k, v)), 1e-12);
  }
}

TEST(MultiHead, MatchesConcatenatedHeads) {
  Rng rng(7);
  const std::size_t d_model = 6, dk = 3, heads = 2, m = 4, n = 5;
  MultiHeadParams p;
  for (std::size_t h = 0; h < heads; ++h) {
    p.w_q.push_back(uniform_tensor(rng, Shape{d_model, dk}, -1, 1));
    p.w_k.push_back(uniform_tensor(rng, Shape{d_model, dk}, -1, 1));
    p.w_v.push_back(uniform_tensor(rng, Shape{d_model, dk}, -1, 1));
  }
  p.w_o = uniform_tensor(rng, Shape{heads * dk, d_model}, -1, 1);
  const Tensor q = uniform_tensor(rng, Shape{m, d_model}, -2, 2);
  const Tensor k = uniform_tensor(rng, Shape{n, d_model}, -2, 2);
  const Tensor v = uniform_tensor(rng, Shape{n, d_model}, -2, 2);

  Tensor concat(Shape{m, heads * dk});
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = matmul(q, p.w_q[h]), kh = matmul(k, p.w_k[h]), vh = matmul(v, p.w_v[h]);
    for (std::size_t r = 0; r < m; ++r) {
      const Tensor row = brute_force_attention(qh.row(r), kh, vh);
      for (std::size_t j = 0; j < dk; ++j) concat.at(r, h * dk + j) = row[j];
    }
  }
  EXPECT_LT(max_abs_diff(multi_head(q, k, v, p), matmul(concat, p.w_o)), 1e-12);
}

TEST(MultiHead, InconsistentProjectionsRejected) {
  MultiHeadParams p;
  p.w_q = {Tensor::identity(3)};
  p.w_k = {Tensor::identity(3)};
  p.w_v = {Tensor::identity(3)};
  p.w_o = Tensor::identity(2);
  EXPECT_THROW(p.validate(3), DimensionError);
}

TEST(MultiLevel, DepthOneIsVanillaAndZeroIsRejected) {
  const KeySequence keys = KeySequence::from_rows(Tensor::matrix({{1, 2}, {-0.5, 1}, {3, -1}}));
  const Query q(Tensor::vector({0.2, -0.7}));
  EXPECT_EQ(multi_level_attention(q, keys, 1), vanilla_attention(q, keys));
  EXPECT_THROW(multi_level_attention(q, keys, 0), DomainError);
}

TEST(MultiLevel, FeedsOutputBackAsQuery) {
  const KeySequence keys = KeySequence::from_rows(Tensor::matrix({{1, 2}, {-0.5, 1}, {3, -1}}));
  const Query q(Tensor::vector({0.2, -0.7}));
  Tensor expected = q.vector();
  for (int t = 0; t < 4; ++t) expected = vanilla_attention(Query(expected), keys);
  EXPECT_EQ(multi_level_attention(q, keys, 4), expected);
}

TEST(SelfAttention, IsSdpOfTheSequenceWithItself) {
  Rng rng(8);
  const Tensor x = uniform_tensor(rng, Shape{5, 3}, -2, 2);
  EXPECT_EQ(self_attention_layer(x), sdp_attention(x, x, x));
}

TEST(SelfAttention, EquivariantToTokenOrder) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = uniform_index(rng, 2, 8), dk = uniform_index(rng, 1, 6);
    const Tensor x = uniform_tensor(rng, Shape{n, dk}, -3, 3);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    EXPECT_LT(max_abs_diff(self_attention_layer(permute_rows(x, perm)), permute_rows(self_attention_layer(x), perm)),
              1e-12);
  }
}

TEST(TapedAttention, MatchesPlainForward) {
  Rng rng(10);
  const Tensor rows = uniform_tensor(rng, Shape{4, 3}, -2, 2);
  const Tensor q = uniform_tensor(rng, Shape{3}, -2, 2);
  ad::Tape tape;
  const Tensor got = ad::vanilla_attention(tape.constant(q), tape.constant(rows)).value();
  EXPECT_LT(max_abs_diff(got, vanilla_attention(Query(q), KeySequence::from_rows(rows))), 1e-15);

  // The batched layout gives each batch row its own keys.
  Tensor qb(Shape{2, 3}), kb(Shape{2, 4, 3});
  const Tensor rows2 = uniform_tensor(rng, Shape{4, 3}, -2, 2);
  const Tensor q2 = uniform_tensor(rng, Shape{3}, -2, 2);
  for (std::size_t j = 0; j < 3; ++j) {
    qb.at(0, j) = q[j];
    qb.at(1, j) = q2[j];
  }
  for (std::size_t i = 0; i < 12; ++i) {
    kb[i] = rows[i];
    kb[12 + i] = rows2[i];
  }
  const Tensor batched = ad::vanilla_attention(tape.constant(qb), tape.constant(kb)).value();
  EXPECT_LT(max_abs_diff(batched.row(0), vanilla_attention(Query(q), KeySequence::from_rows(rows))), 1e-15);
  EXPECT_LT(max_abs_diff(batched.row(1), vanilla_attention(Query(q2), KeySequence::from_rows(rows2))), 1e-15);
}
