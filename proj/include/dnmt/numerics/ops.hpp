#pragma once

// Differentiable primitives. Unless noted, operands are rank-2 [rows x cols]
// tensors; bias-like operands may be rank 1 or [1 x n].

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "dnmt/numerics/tensor.hpp"

namespace dnmt::numerics {

using Rng = std::mt19937_64;
using TokenId = std::int32_t;

// Attention mask: blocked(r, c) marks entries excluded from a softmax row.
// A mask with a single row broadcasts over every logit row.
struct Mask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> blocked;

  Mask() = default;
  Mask(std::size_t r, std::size_t c, bool value = false)
      : rows(r), cols(c), blocked(r * c, value ? 1 : 0) {}

  bool at(std::size_t r, std::size_t c) const {
    return blocked[(rows == 1 ? 0 : r) * cols + c] != 0;
  }
  void set(std::size_t r, std::size_t c, bool value) {
    blocked[r * cols + c] = value ? 1 : 0;
  }
};

enum class Reduction { kMean, kSum };

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// a [m x k] * b[n x k]^T
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
// a [m x n] + row (n elements) broadcast over rows.
template <typename T>
Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& row);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// Row softmax over unblocked entries; blocked entries are exactly zero.
// Throws ContractError when a row has no unblocked entry.
template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& logits, const Mask& mask);
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);
template <typename T>
Tensor<T> log_softmax(const Tensor<T>& logits);

// Normalizes each row to zero mean / unit population variance, then applies
// gain and bias (length = cols).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias, T eps);

// Row lookup: out[i] = table[ids[i]]. Throws ContractError on ids outside
// [0, table.rows()).
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const TokenId> ids);

// out[r][j] = src[r][index[r * width + j]]; output is [src.rows() x width].
template <typename T>
Tensor<T> gather_cols(const Tensor<T>& src, std::span<const std::uint32_t> index,
                      std::size_t width);
// Adjoint of gather_cols: out[r][index[r * src.cols() + j]] += src[r][j];
// output is [src.rows() x out_cols].
template <typename T>
Tensor<T> scatter_cols(const Tensor<T>& src, std::span<const std::uint32_t> index,
                       std::size_t out_cols);

template <typename T>
Tensor<T> concat_cols(std::span<const Tensor<T>> parts);
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end);
template <typename T>
Tensor<T> concat_rows(std::span<const Tensor<T>> parts);
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t end);

// Inverted dropout. Identity when rate == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, T rate, Rng& rng);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

// Label-smoothed negative log-likelihood with smoothing mass spread
// uniformly over all V classes (the true class included):
//   q = (1 - eps) * onehot(target) + eps / V,  loss_t = -sum_v q_v log p_v.
// Positions whose target equals pad_id are skipped. kMean averages over the
// remaining positions; throws ContractError if there are none.
template <typename T>
Tensor<T> label_smoothed_nll(const Tensor<T>& logits,
                             std::span<const TokenId> targets, T epsilon,
                             TokenId pad_id, Reduction reduction = Reduction::kMean);

}  // namespace dnmt::numerics
