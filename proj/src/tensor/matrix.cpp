#include "csvar/tensor/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "csvar/simd/kernels.hpp"

namespace csvar {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) throw std::invalid_argument("Matrix: data size mismatch");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw std::invalid_argument("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Matrix::resize(std::size_t rows, std::size_t cols, double fill) {
  rows_ = rows;
  cols_ = cols;
  data_.assign(rows * cols, fill);
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix& Matrix::operator+=(const Matrix& other) {
  assert(same_shape(other));
  simd::axpy(1.0, other.data(), data(), data_.size());
  return *this;
}

void matmul(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  assert(a.cols() == b.rows());
  if (!accumulate) out.resize(a.rows(), b.cols());
  assert(out.rows() == a.rows() && out.cols() == b.cols());
  const auto& k = simd::active();
  const std::size_t inner = a.cols();
  const std::size_t m = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* dst = out.data() + i * m;
    const double* arow = a.data() + i * inner;
    for (std::size_t p = 0; p < inner; ++p) {
      const double s = arow[p];
      if (s != 0.0) k.axpy(s, b.data() + p * m, dst, m);
    }
  }
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  assert(a.cols() == b.cols());
  if (!accumulate) out.resize(a.rows(), b.rows());
  assert(out.rows() == a.rows() && out.cols() == b.rows());
  const auto& k = simd::active();
  const std::size_t inner = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.data() + i * inner;
    double* dst = out.data() + i * out.cols();
    for (std::size_t j = 0; j < b.rows(); ++j) dst[j] += k.dot(arow, b.data() + j * inner, inner);
  }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  assert(a.rows() == b.rows());
  if (!accumulate) out.resize(a.cols(), b.cols());
  assert(out.rows() == a.cols() && out.cols() == b.cols());
  const auto& k = simd::active();
  const std::size_t n = a.cols();
  const std::size_t m = b.cols();
  for (std::size_t p = 0; p < a.rows(); ++p) {
    const double* arow = a.data() + p * n;
    const double* brow = b.data() + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = arow[i];
      if (s != 0.0) k.axpy(s, brow, out.data() + i * m, m);
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out;
  matmul(a, b, out);
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  Matrix out;
  matmul_nt(a, b, out);
  return out;
}

void softmax_rows(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) return INFINITY;
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
  return d;
}

}  // namespace csvar
