#include "csvar/simd/kernels.hpp"

namespace csvar::simd {
namespace {

double dot_ref(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_ref(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_ref(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

double dot_f32_ref(const float* a, const float* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

constexpr KernelTable kScalarTable{Backend::kScalar, dot_ref, axpy_ref, scale_ref, dot_f32_ref};

}  // namespace

const KernelTable& scalar_kernels() { return kScalarTable; }

}  // namespace csvar::simd
