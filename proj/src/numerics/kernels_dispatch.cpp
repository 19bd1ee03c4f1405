#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "dnmt/numerics/kernels.hpp"

namespace dnmt::kernels {
namespace {

Backend detect_default() {
  if (const char* env = std::getenv("DNMT_KERNELS")) {
    if (std::string(env) == "scalar") return Backend::kScalar;
  }
  return backend_supported(Backend::kAvx2) ? Backend::kAvx2 : Backend::kScalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> backend{detect_default()};
  return backend;
}

}  // namespace

std::string_view backend_name(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
  }
  return "unknown";
}

bool backend_supported(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Backend active_backend() { return current().load(std::memory_order_relaxed); }

void set_backend(Backend backend) {
  if (!backend_supported(backend)) {
    throw std::invalid_argument("kernel backend '" +
                                std::string(backend_name(backend)) +
                                "' is not supported on this CPU");
  }
  current().store(backend, std::memory_order_relaxed);
}

template <typename T>
const KernelTable<T>& table(Backend backend) {
  return backend == Backend::kAvx2 ? avx2::table<T>() : scalar::table<T>();
}

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a,
             const T* b, T* c, bool accumulate) {
  const auto& kt = active<T>();
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, T(0));
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      if (arow[p] != T(0)) kt.axpy(arow[p], b + p * n, crow, n);
    }
  }
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a,
             const T* b, T* c, bool accumulate) {
  const auto& kt = active<T>();
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const T v = kt.dot(arow, b + j * k, k);
      crow[j] = accumulate ? crow[j] + v : v;
    }
  }
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a,
             const T* b, T* c, bool accumulate) {
  const auto& kt = active<T>();
  if (!accumulate) std::fill(c, c + k * n, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      if (arow[p] != T(0)) kt.axpy(arow[p], brow, c + p * n, n);
    }
  }
}

#define DNMT_INSTANTIATE_KERNELS(T)                                           \
  template const KernelTable<T>& table<T>(Backend);                          \
  template void gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*, \
                           const T*, T*, bool);                              \
  template void gemm_nt<T>(std::size_t, std::size_t, std::size_t, const T*, \
                           const T*, T*, bool);                              \
  template void gemm_tn<T>(std::size_t, std::size_t, std::size_t, const T*, \
                           const T*, T*, bool);

DNMT_INSTANTIATE_KERNELS(float)
DNMT_INSTANTIATE_KERNELS(double)

#undef DNMT_INSTANTIATE_KERNELS

}  // namespace dnmt::kernels
