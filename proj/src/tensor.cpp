#include "ham/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ham {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!(a.shape() == b.shape())) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
  }
}

}  // namespace

Shape::Shape(std::initializer_list<std::size_t> extents)
    : Shape(std::span<const std::size_t>(extents.begin(), extents.size())) {}

Shape::Shape(std::span<const std::size_t> extents) {
  if (extents.empty() || extents.size() > kMaxRank) {
    throw DimensionError("shape rank must be in [1, 4], got " + std::to_string(extents.size()));
  }
  for (std::size_t e : extents) {
    if (e == 0) throw DomainError("shape extents must be positive");
    extents_[rank_++] = e;
  }
}

std::size_t Shape::size() const {
  if (rank_ == 0) return 0;
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank_; ++i) n *= extents_[i];
  return n;
}

bool Shape::operator==(const Shape& other) const {
  if (rank_ != other.rank_) return false;
  return std::equal(extents_.begin(), extents_.begin() + rank_, other.extents_.begin());
}

std::string Shape::str() const {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < rank_; ++i) {
    if (i) out << 'x';
    out << extents_[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.size(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_.str());
  }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  if (rows.size() == 0) throw DomainError("matrix: no rows");
  const std::size_t ncols = rows.begin()->size();
  std::vector<double> data;
  data.reserve(rows.size() * ncols);
  for (const auto& r : rows) {
    if (r.size() != ncols) throw DimensionError("matrix: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor(Shape{rows.size(), ncols}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor out(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) out.at(i, i) = 1.0;
  return out;
}

Tensor Tensor::row(std::size_t r) const {
  if (rank() != 2 || r >= rows()) throw DimensionError("row: index out of range");
  const auto n = cols();
  return Tensor(Shape{n}, std::vector<double>(data_.begin() + r * n, data_.begin() + (r + 1) * n));
}

Tensor Tensor::col(std::size_t c) const {
  if (rank() != 2 || c >= cols()) throw DimensionError("col: index out of range");
  Tensor out(Shape{rows()});
  for (std::size_t r = 0; r < rows(); ++r) out[r] = at(r, c);
  return out;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.size() != size()) {
    throw DimensionError("reshape: " + shape_.str() + " -> " + shape.str());
  }
  return Tensor(shape, data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor operator*(double s, const Tensor& a) {
  Tensor out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + a.shape().str() + " by " + b.shape().str());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out(Shape{m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      double* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose: expected a matrix, got " + a.shape().str());
  Tensor out(Shape{a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: " + a.shape().str() + " vs " + b.shape().str());
  }
  return std::inner_product(a.data().begin(), a.data().end(), b.data().begin(), 0.0);
}

std::vector<double> softmax(std::span<const double> x) {
  if (x.empty()) throw DomainError("softmax of an empty vector");
  const double mx = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

Tensor softmax_vec(const Tensor& x) {
  if (x.rank() != 1) throw DimensionError("softmax_vec: expected a vector, got " + x.shape().str());
  return Tensor(x.shape(), softmax(x.data()));
}

Tensor softmax_rows(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("softmax_rows: expected a matrix, got " + x.shape().str());
  Tensor out(x.shape());
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto p = softmax(x.data().subspan(r * n, n));
    std::copy(p.begin(), p.end(), out.data().begin() + r * n);
  }
  return out;
}

double l2_norm(const Tensor& x) { return std::sqrt(dot(x, x)); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Tensor columns(std::span<const Tensor> vectors) {
  if (vectors.empty()) throw DomainError("columns: no vectors");
  const std::size_t dim = vectors.front().size();
  Tensor out(Shape{dim, vectors.size()});
  for (std::size_t c = 0; c < vectors.size(); ++c) {
    if (vectors[c].rank() != 1 || vectors[c].size() != dim) {
      throw DimensionError("columns: vector " + std::to_string(c) + " has shape " +
                           vectors[c].shape().str());
    }
    for (std::size_t r = 0; r < dim; ++r) out.at(r, c) = vectors[c][r];
  }
  return out;
}

}  // namespace ham
