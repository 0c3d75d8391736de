#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace baet::ad {

/// Raised when operand shapes are incompatible. The message carries both shapes.
class ShapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major 2-D matrix of doubles. Vectors are 1xN rows.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Tensor row(std::initializer_list<double> values);
  static Tensor column(std::initializer_list<double> values);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  bool same_shape(const Tensor& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> row_span(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row_span(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  void fill(double v);
  Tensor transposed() const;

  /// this += scale * other
  void add_scaled(const Tensor& other, double scale = 1.0);

  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

std::string shape_of(const Tensor& t);

/// Dense kernels. All accumulate into `out` (out += ...), which must be pre-shaped.
namespace kernels {
// out (m x n) += a (m x k) * b (k x n)
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& out);
// out (m x n) += a (m x k) * b^T, b is (n x k)
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& out);
// out (k x n) += a^T * b, a is (m x k), b is (m x n)
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& out);
}  // namespace kernels

Tensor matmul(const Tensor& a, const Tensor& b);

}  // namespace baet::ad
