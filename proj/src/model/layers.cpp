#include "dnmt/model/layers.hpp"

#include <cmath>

namespace dnmt::model {

using namespace numerics;

template <typename T>
Tensor<T> ParamBuilder<T>::projection(const std::string& name, std::size_t in,
                                      std::size_t out) {
  return store_.add(name, xavier_uniform<T>(in, out, rng_));
}

template <typename T>
Tensor<T> ParamBuilder<T>::normal(const std::string& name, Shape shape, double stddev) {
  return store_.add(name, numerics::normal<T>(std::move(shape), stddev, rng_));
}

template <typename T>
Tensor<T> ParamBuilder<T>::constant(const std::string& name, Shape shape, T value) {
  return store_.add(name, Tensor<T>::full(std::move(shape), value));
}

template <typename T>
AttentionParams<T> ParamBuilder<T>::attention(const std::string& prefix, std::size_t d) {
  AttentionParams<T> p;
  p.wq = projection(prefix + ".wq", d, d);
  p.wk = projection(prefix + ".wk", d, d);
  p.wv = projection(prefix + ".wv", d, d);
  p.wo = projection(prefix + ".wo", d, d);
  return p;
}

template <typename T>
FeedForwardParams<T> ParamBuilder<T>::feed_forward(const std::string& prefix, std::size_t d,
                                                   std::size_t d_ffn) {
  FeedForwardParams<T> p;
  p.w1 = projection(prefix + ".w1", d, d_ffn);
  p.b1 = constant(prefix + ".b1", {d_ffn}, T(0));
  p.w2 = projection(prefix + ".w2", d_ffn, d);
  p.b2 = constant(prefix + ".b2", {d}, T(0));
  return p;
}

template <typename T>
LayerNormParams<T> ParamBuilder<T>::layer_norm(const std::string& prefix, std::size_t d) {
  return {constant(prefix + ".gain", {d}, T(1)), constant(prefix + ".bias", {d}, T(0))};
}

template <typename T>
Tensor<T> sinusoid_table(std::size_t rows, std::size_t d) {
  std::vector<T> data(rows * d);
  for (std::size_t p = 0; p < rows; ++p) {
    for (std::size_t i = 0; i < d; i += 2) {
      const double angle = static_cast<double>(p) /
                           std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
      data[p * d + i] = static_cast<T>(std::sin(angle));
      if (i + 1 < d) data[p * d + i + 1] = static_cast<T>(std::cos(angle));
    }
  }
  return Tensor<T>::from({rows, d}, std::move(data));
}

template <typename T>
Tensor<T> apply_dropout(const Tensor<T>& x, double rate, ForwardContext& ctx) {
  if (!ctx.training || rate <= 0 || ctx.rng == nullptr) return x;
  return dropout(x, static_cast<T>(rate), *ctx.rng);
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               const Mask& mask, std::size_t n_heads, double drop,
                               ForwardContext& ctx, std::vector<Tensor<T>>* weights) {
  const std::size_t d = q.cols(), dh = d / n_heads;
  const T factor = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  std::vector<Tensor<T>> heads;
  heads.reserve(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const auto qh = slice_cols(q, h * dh, (h + 1) * dh);
    const auto kh = slice_cols(k, h * dh, (h + 1) * dh);
    const auto vh = slice_cols(v, h * dh, (h + 1) * dh);
    auto alpha = masked_softmax(scale(matmul_nt(qh, kh), factor), mask);
    if (weights) weights->push_back(alpha);
    heads.push_back(matmul(apply_dropout(alpha, drop, ctx), vh));
  }
  return n_heads == 1 ? heads[0] : concat_cols<T>(heads);
}

template <typename T>
Tensor<T> feed_forward(const Tensor<T>& x, const FeedForwardParams<T>& p, double drop,
                       ForwardContext& ctx) {
  auto hidden = relu(add_row(matmul(x, p.w1), p.b1));
  return add_row(matmul(apply_dropout(hidden, drop, ctx), p.w2), p.b2);
}

template <typename T>
Tensor<T> residual_norm(const Tensor<T>& x, const Tensor<T>& sublayer,
                        const LayerNormParams<T>& ln, double eps, double drop,
                        ForwardContext& ctx) {
  return layer_norm(add(x, apply_dropout(sublayer, drop, ctx)), ln.gain, ln.bias,
                    static_cast<T>(eps));
}

#define DNMT_INSTANTIATE(T)                                                              \
  template class ParamBuilder<T>;                                                        \
  template Tensor<T> sinusoid_table<T>(std::size_t, std::size_t);                        \
  template Tensor<T> apply_dropout(const Tensor<T>&, double, ForwardContext&);           \
  template Tensor<T> multi_head_attention(const Tensor<T>&, const Tensor<T>&,            \
                                          const Tensor<T>&, const Mask&, std::size_t,    \
                                          double, ForwardContext&,                       \
                                          std::vector<Tensor<T>>*);                      \
  template Tensor<T> feed_forward(const Tensor<T>&, const FeedForwardParams<T>&, double, \
                                  ForwardContext&);                                      \
  template Tensor<T> residual_norm(const Tensor<T>&, const Tensor<T>&,                   \
                                   const LayerNormParams<T>&, double, double,            \
                                   ForwardContext&);

DNMT_INSTANTIATE(float)
DNMT_INSTANTIATE(double)

}  // namespace dnmt::model
