#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ham {

/// Raised when operand shapes are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an argument lies outside an operation's domain
/// (empty sequences, zero depth, non-scalar loss, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Extents of a dense array, rank 1 to 4. Every extent is positive.
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> extents);
  explicit Shape(std::span<const std::size_t> extents);

  std::size_t rank() const { return rank_; }
  std::size_t operator[](std::size_t axis) const { return extents_[axis]; }
  std::size_t size() const;

  bool operator==(const Shape& other) const;

  std::string str() const;

 private:
  std::array<std::size_t, kMaxRank> extents_{};
  std::size_t rank_ = 0;
};

/// Dense row-major float64 array with value semantics.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(shape, 0.0); }
  static Tensor ones(Shape shape) { return Tensor(shape, 1.0); }
  static Tensor vector(std::initializer_list<double> values);
  /// Builds a matrix from nested rows; all rows must have equal length.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.rank(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_[0]; }
  std::size_t cols() const { return shape_[1]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  /// Copy of row r of a matrix as a vector.
  Tensor row(std::size_t r) const;
  /// Copy of column c of a matrix as a vector.
  Tensor col(std::size_t c) const;

  /// Same data, different shape; sizes must agree.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Elementwise arithmetic; shapes must match exactly (no broadcasting).
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);
Tensor hadamard(const Tensor& a, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);

/// Numerically stable softmax (max-subtracted). Throws DomainError on empty input.
std::vector<double> softmax(std::span<const double> x);
Tensor softmax_vec(const Tensor& x);
/// Softmax along the last axis of a matrix.
Tensor softmax_rows(const Tensor& x);

double l2_norm(const Tensor& x);
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Stacks equal-length vectors as the columns of a matrix.
Tensor columns(std::span<const Tensor> vectors);

}  // namespace ham
