#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <vector>

namespace bregopt {

/// Row-major dense matrix of doubles.
///
/// Constructors that take external data reject non-finite entries. Arithmetic
/// results are not re-validated; the solver checks finiteness where it matters.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static DenseMatrix identity(std::size_t n);
  static DenseMatrix diagonal(std::span<const double> diag);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::vector<double> column(std::size_t j) const;

  DenseMatrix transposed() const;

  DenseMatrix& operator+=(const DenseMatrix& other);
  DenseMatrix& operator-=(const DenseMatrix& other);
  DenseMatrix& operator*=(double alpha);

  bool same_shape(const DenseMatrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool operator==(const DenseMatrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b);
DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b);
DenseMatrix operator*(double alpha, DenseMatrix a);

/// y += alpha * x
void axpy(double alpha, const DenseMatrix& x, DenseMatrix& y);

/// A * B
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
/// A^T * B
DenseMatrix matmul_at_b(const DenseMatrix& a, const DenseMatrix& b);
/// A * B^T
DenseMatrix matmul_a_bt(const DenseMatrix& a, const DenseMatrix& b);

double squared_norm(const DenseMatrix& a);
double frobenius_norm(const DenseMatrix& a);
/// Frobenius inner product <A, B>.
double dot(const DenseMatrix& a, const DenseMatrix& b);
bool all_finite(const DenseMatrix& a);
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);

void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* what);

}  // namespace bregopt
