#pragma once

// Building blocks shared by the encoder and decoder.

#include <string>
#include <vector>

#include "dnmt/numerics/ops.hpp"
#include "dnmt/numerics/optim.hpp"

namespace dnmt::model {

using numerics::Mask;
using numerics::ParamStore;
using numerics::Rng;
using numerics::Tensor;

// Carries the train/eval switch and the dropout generator through a forward
// pass. Dropout is active only when training is set and rng is non-null.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
};

template <typename T>
struct LayerNormParams {
  Tensor<T> gain;
  Tensor<T> bias;
};

// Bias-free projections; inputs are row vectors, so weights are [in x out].
template <typename T>
struct AttentionParams {
  Tensor<T> wq, wk, wv, wo;
};

template <typename T>
struct FeedForwardParams {
  Tensor<T> w1, b1, w2, b2;
};

// Registers parameters under a common prefix with the default
// initialization scheme.
template <typename T>
class ParamBuilder {
 public:
  ParamBuilder(ParamStore<T>& store, Rng& rng) : store_(store), rng_(rng) {}

  Tensor<T> projection(const std::string& name, std::size_t in, std::size_t out);
  Tensor<T> normal(const std::string& name, numerics::Shape shape, double stddev);
  Tensor<T> constant(const std::string& name, numerics::Shape shape, T value);

  AttentionParams<T> attention(const std::string& prefix, std::size_t d_model);
  FeedForwardParams<T> feed_forward(const std::string& prefix, std::size_t d_model,
                                    std::size_t d_ffn);
  LayerNormParams<T> layer_norm(const std::string& prefix, std::size_t d_model);

 private:
  ParamStore<T>& store_;
  Rng& rng_;
};

// Fixed sinusoidal encodings: row p holds sin/cos of p / 10000^(2i/d).
template <typename T>
Tensor<T> sinusoid_table(std::size_t rows, std::size_t d_model);

template <typename T>
Tensor<T> apply_dropout(const Tensor<T>& x, double rate, ForwardContext& ctx);

// Scaled dot-product attention over pre-projected q [Tq x d], k, v [Tk x d],
// split into n_heads column blocks. Returns the concatenated head outputs
// [Tq x d] before the output projection. If weights is non-null it receives
// each head's attention matrix (before dropout).
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               const Mask& mask, std::size_t n_heads, double dropout,
                               ForwardContext& ctx,
                               std::vector<Tensor<T>>* weights = nullptr);

// relu(x W1 + b1) W2 + b2
template <typename T>
Tensor<T> feed_forward(const Tensor<T>& x, const FeedForwardParams<T>& p, double dropout,
                       ForwardContext& ctx);

// LayerNorm(x + dropout(sublayer))
template <typename T>
Tensor<T> residual_norm(const Tensor<T>& x, const Tensor<T>& sublayer,
                        const LayerNormParams<T>& ln, double eps, double dropout,
                        ForwardContext& ctx);

}  // namespace dnmt::model
