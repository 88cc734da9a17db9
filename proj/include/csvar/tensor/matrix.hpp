#pragma once

#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace csvar {

// Dense row-major matrix of doubles. Vectors are 1xN or Nx1 matrices.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  void fill(double v);
  void resize(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix transposed() const;

  Matrix& operator+=(const Matrix& other);
  bool same_shape(const Matrix& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// out (+)= a * b
void matmul(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
// out (+)= a * b^T
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
// out (+)= a^T * b
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);

// In-place numerically stable softmax over each row.
void softmax_rows(Matrix& m);

double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace csvar
