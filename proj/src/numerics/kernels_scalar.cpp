#include "dnmt/numerics/kernels.hpp"

namespace dnmt::kernels::scalar {
namespace {

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void scale(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * alpha;
}

template <typename T>
void add(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void mul(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

}  // namespace

template <typename T>
const KernelTable<T>& table() {
  static const KernelTable<T> kTable{&dot<T>, &axpy<T>, &scale<T>, &add<T>,
                                     &mul<T>};
  return kTable;
}

template const KernelTable<float>& table<float>();
template const KernelTable<double>& table<double>();

}  // namespace dnmt::kernels::scalar
