#pragma once

// Inner-loop arithmetic kernels with a scalar reference implementation and
// vectorized variants (AVX2+FMA on x86-64, NEON on AArch64). The variant is
// picked once at startup from CPU features; CSVAR_SIMD=scalar in the
// environment forces the reference path.

#include <cstddef>
#include <string_view>

namespace csvar::simd {

enum class Backend { kScalar, kAvx2, kNeon };

struct KernelTable {
  Backend backend;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // x[i] *= alpha
  void (*scale)(double alpha, double* x, std::size_t n);
  // float inputs, double accumulation
  double (*dot_f32)(const float* a, const float* b, std::size_t n);
};

const KernelTable& scalar_kernels();
// nullptr when the variant was not compiled in or the CPU lacks it.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

const KernelTable& kernels_for(Backend backend);
bool backend_available(Backend backend);

// Active table; selected on first call.
const KernelTable& active();
void set_backend(Backend backend);
Backend active_backend();
std::string_view backend_name(Backend backend);

inline double dot(const double* a, const double* b, std::size_t n) {
  return active().dot(a, b, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}
inline void scale(double alpha, double* x, std::size_t n) { active().scale(alpha, x, n); }
inline double dot_f32(const float* a, const float* b, std::size_t n) {
  return active().dot_f32(a, b, n);
}

}  // namespace csvar::simd
