#include <atomic>
#include <cstdlib>
#include <string>

#include "csvar/core/error.hpp"
#include "csvar/simd/kernels.hpp"

namespace csvar::simd {

namespace detail {
#if defined(CSVAR_HAVE_AVX2)
const KernelTable& avx2_table();
#endif
#if defined(CSVAR_HAVE_NEON)
const KernelTable& neon_table();
#endif
}  // namespace detail

const KernelTable* avx2_kernels() {
#if defined(CSVAR_HAVE_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &detail::avx2_table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* neon_kernels() {
#if defined(CSVAR_HAVE_NEON)
  return &detail::neon_table();
#else
  return nullptr;
#endif
}

bool backend_available(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
      return avx2_kernels() != nullptr;
    case Backend::kNeon:
      return neon_kernels() != nullptr;
  }
  return false;
}

const KernelTable& kernels_for(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return scalar_kernels();
    case Backend::kAvx2:
      if (const auto* t = avx2_kernels()) return *t;
      break;
    case Backend::kNeon:
      if (const auto* t = neon_kernels()) return *t;
      break;
  }
  throw ConfigError("SIMD backend not available: " + std::string(backend_name(backend)));
}

namespace {

const KernelTable* pick_default() {
  if (const char* env = std::getenv("CSVAR_SIMD"); env != nullptr && std::string(env) == "scalar") {
    return &scalar_kernels();
  }
  if (const auto* t = avx2_kernels()) return t;
  if (const auto* t = neon_kernels()) return t;
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> table{pick_default()};
  return table;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

void set_backend(Backend backend) { slot().store(&kernels_for(backend)); }

Backend active_backend() { return active().backend; }

std::string_view backend_name(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
    case Backend::kNeon:
      return "neon";
  }
  return "unknown";
}

}  // namespace csvar::simd
