#pragma once

// Inner-loop arithmetic kernels. Every kernel has a scalar reference
// implementation; an AVX2+FMA variant is selected at runtime when the CPU
// supports it. Backends produce results that agree to rounding, but are
// not bitwise interchangeable, so a process should stick to one backend
// for reproducible runs.

#include <cstddef>
#include <string_view>

namespace dnmt::kernels {

enum class Backend { kScalar, kAvx2 };

std::string_view backend_name(Backend backend);

// True if the running CPU can execute `backend`.
bool backend_supported(Backend backend);

// The backend in use. Defaults to the best supported backend, unless the
// environment variable DNMT_KERNELS=scalar forces the reference path.
Backend active_backend();

// Throws std::invalid_argument if the backend is not supported here.
void set_backend(Backend backend);

template <typename T>
struct KernelTable {
  T (*dot)(const T* a, const T* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
  // y = x * alpha
  void (*scale)(T alpha, const T* x, T* y, std::size_t n);
  // out = a + b
  void (*add)(const T* a, const T* b, T* out, std::size_t n);
  // out = a * b (elementwise)
  void (*mul)(const T* a, const T* b, T* out, std::size_t n);
};

template <typename T>
const KernelTable<T>& table(Backend backend);

template <typename T>
const KernelTable<T>& active() {
  return table<T>(active_backend());
}

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  return active<T>().dot(a, b, n);
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  active<T>().axpy(alpha, x, y, n);
}

template <typename T>
void scale(T alpha, const T* x, T* y, std::size_t n) {
  active<T>().scale(alpha, x, y, n);
}

template <typename T>
void add(const T* a, const T* b, T* out, std::size_t n) {
  active<T>().add(a, b, out, n);
}

template <typename T>
void mul(const T* a, const T* b, T* out, std::size_t n) {
  active<T>().mul(a, b, out, n);
}

// Row-major GEMM variants built on dot/axpy. When `accumulate` is false the
// output is overwritten, otherwise the product is added to it.
//   gemm_nn: C[m x n] = A[m x k] * B[k x n]
//   gemm_nt: C[m x n] = A[m x k] * B[n x k]^T
//   gemm_tn: C[k x n] = A[m x k]^T * B[m x n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a,
             const T* b, T* c, bool accumulate);
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a,
             const T* b, T* c, bool accumulate);
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a,
             const T* b, T* c, bool accumulate);

namespace scalar {
template <typename T>
const KernelTable<T>& table();
}  // namespace scalar

namespace avx2 {
// Only valid to call when backend_supported(Backend::kAvx2).
template <typename T>
const KernelTable<T>& table();
}  // namespace avx2

}  // namespace dnmt::kernels
