#include "dnmt/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dnmt/error.hpp"
#include "dnmt/numerics/kernels.hpp"

namespace dnmt::numerics {
namespace {

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data,
                      std::initializer_list<Tensor<T>> inputs,
                      std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const auto& in : inputs) node->parents.push_back(in.node_ptr());
      node->backward = std::move(backward);
    }
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
Tensor<T> make_result_n(Shape shape, std::vector<T> data,
                        std::span<const Tensor<T>> inputs,
                        std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const auto& in : inputs) node->parents.push_back(in.node_ptr());
      node->backward = std::move(backward);
    }
  }
  return Tensor<T>(std::move(node));
}

// Gradient buffer of parent i, or nullptr when it does not take gradients.
template <typename T>
T* parent_grad(Node<T>& node, std::size_t i) {
  Node<T>* p = node.parents[i].get();
  if (!p->requires_grad) return nullptr;
  p->ensure_grad();
  return p->grad.data();
}

template <typename T>
void require_rank2(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a rank-2 tensor, got " +
                     shape_string(t.shape()));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ, " +
                     shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  std::vector<T> out(m * n);
  kernels::gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data(), false);
  return make_result<T>({m, n}, std::move(out), {a, b}, [m, n, k](Node<T>& self) {
    const T* a_data = self.parents[0]->data.data();
    const T* b_data = self.parents[1]->data.data();
    if (T* ga = parent_grad(self, 0)) {
      kernels::gemm_nt(m, k, n, self.grad.data(), b_data, ga, true);
    }
    if (T* gb = parent_grad(self, 1)) {
      kernels::gemm_tn(m, n, k, a_data, self.grad.data(), gb, true);
    }
  });
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw ShapeError("matmul_nt: inner dimensions differ, " +
                     shape_string(a.shape()) + " x " + shape_string(b.shape()) +
                     "^T");
  }
  std::vector<T> out(m * n);
  kernels::gemm_nt(m, n, k, a.data().data(), b.data().data(), out.data(), false);
  return make_result<T>({m, n}, std::move(out), {a, b}, [m, n, k](Node<T>& self) {
    const T* a_data = self.parents[0]->data.data();
    const T* b_data = self.parents[1]->data.data();
    if (T* ga = parent_grad(self, 0)) {
      kernels::gemm_nn(m, k, n, self.grad.data(), b_data, ga, true);
    }
    if (T* gb = parent_grad(self, 1)) {
      kernels::gemm_tn(m, k, n, self.grad.data(), a_data, gb, true);
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.size());
  kernels::add(a.data().data(), b.data().data(), out.data(), out.size());
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    const std::size_t n = self.data.size();
    if (T* ga = parent_grad(self, 0)) kernels::axpy(T(1), self.grad.data(), ga, n);
    if (T* gb = parent_grad(self, 1)) kernels::axpy(T(1), self.grad.data(), gb, n);
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    const std::size_t n = self.data.size();
    if (T* ga = parent_grad(self, 0)) kernels::axpy(T(1), self.grad.data(), ga, n);
    if (T* gb = parent_grad(self, 1)) kernels::axpy(T(-1), self.grad.data(), gb, n);
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.size());
  kernels::mul(a.data().data(), b.data().data(), out.data(), out.size());
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    const std::size_t n = self.data.size();
    const T* a_data = self.parents[0]->data.data();
    const T* b_data = self.parents[1]->data.data();
    if (T* ga = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[i] * b_data[i];
    }
    if (T* gb = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) gb[i] += self.grad[i] * a_data[i];
    }
  });
}

template <typename T>
Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& row) {
  require_rank2(a, "add_row");
  const std::size_t m = a.rows(), n = a.cols();
  if (row.size() != n) {
    throw ShapeError("add_row: row of shape " + shape_string(row.shape()) +
                     " does not broadcast over " + shape_string(a.shape()));
  }
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    kernels::add(a.data().data() + i * n, row.data().data(), out.data() + i * n, n);
  }
  return make_result<T>(a.shape(), std::move(out), {a, row}, [m, n](Node<T>& self) {
    if (T* ga = parent_grad(self, 0)) kernels::axpy(T(1), self.grad.data(), ga, m * n);
    if (T* gr = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < m; ++i) kernels::axpy(T(1), self.grad.data() + i * n, gr, n);
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.size());
  kernels::scale(factor, a.data().data(), out.data(), out.size());
  return make_result<T>(a.shape(), std::move(out), {a}, [factor](Node<T>& self) {
    if (T* ga = parent_grad(self, 0)) {
      kernels::axpy(factor, self.grad.data(), ga, self.grad.size());
    }
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x.data()[i];
    // Split by sign so exp never overflows.
    if (v >= 0) {
      out[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      out[i] = e / (T(1) + e);
    }
  }
  return make_result<T>(x.shape(), std::move(out), {x}, [](Node<T>& self) {
    if (T* gx = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.data.size(); ++i) {
        const T y = self.data[i];
        gx[i] += self.grad[i] * y * (T(1) - y);
      }
    }
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(x.data()[i], T(0));
  return make_result<T>(x.shape(), std::move(out), {x}, [](Node<T>& self) {
    if (T* gx = parent_grad(self, 0)) {
      const T* in = self.parents[0]->data.data();
      for (std::size_t i = 0; i < self.data.size(); ++i) {
        if (in[i] > T(0)) gx[i] += self.grad[i];
      }
    }
  });
}

namespace {

// Backward of a row softmax whose output is stored in self.data.
template <typename T>
void softmax_backward(Node<T>& self, std::size_t rows, std::size_t cols) {
  T* gx = parent_grad(self, 0);
  if (!gx) return;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* y = self.data.data() + r * cols;
    const T* gy = self.grad.data() + r * cols;
    const T inner = kernels::dot(y, gy, cols);
    T* g = gx + r * cols;
    for (std::size_t c = 0; c < cols; ++c) g[c] += y[c] * (gy[c] - inner);
  }
}

}  // namespace

template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& logits, const Mask& mask) {
  require_rank2(logits, "masked_softmax");
  const std::size_t rows = logits.rows(), cols = logits.cols();
  if (mask.cols != cols || (mask.rows != rows && mask.rows != 1)) {
    throw ShapeError("masked_softmax: mask [" + std::to_string(mask.rows) + "," +
                     std::to_string(mask.cols) + "] does not broadcast to " +
                     shape_string(logits.shape()));
  }
  std::vector<T> out(rows * cols, T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = logits.data().data() + r * cols;
    T* y = out.data() + r * cols;
    T max_v = -std::numeric_limits<T>::infinity();
    bool any = false;
    for (std::size_t c = 0; c < cols; ++c) {
      if (mask.at(r, c)) continue;
      any = true;
      max_v = std::max(max_v, x[c]);
    }
    if (!any) {
      throw ContractError("masked_softmax: row " + std::to_string(r) +
                          " has every entry masked (empty attention context)");
    }
    T total = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (mask.at(r, c)) continue;
      y[c] = std::exp(x[c] - max_v);
      total += y[c];
    }
    const T inv = T(1) / total;
    for (std::size_t c = 0; c < cols; ++c) y[c] *= inv;
  }
  return make_result<T>(logits.shape(), std::move(out), {logits},
                        [rows, cols](Node<T>& self) { softmax_backward(self, rows, cols); });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  require_rank2(logits, "softmax");
  return masked_softmax(logits, Mask(1, logits.cols(), false));
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& logits) {
  require_rank2(logits, "log_softmax");
  const std::size_t rows = logits.rows(), cols = logits.cols();
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = logits.data().data() + r * cols;
    T* y = out.data() + r * cols;
    const T max_v = *std::max_element(x, x + cols);
    T total = 0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(x[c] - max_v);
    const T lse = max_v + std::log(total);
    for (std::size_t c = 0; c < cols; ++c) y[c] = x[c] - lse;
  }
  return make_result<T>(logits.shape(), std::move(out), {logits}, [rows, cols](Node<T>& self) {
    T* gx = parent_grad(self, 0);
    if (!gx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.data.data() + r * cols;
      const T* gy = self.grad.data() + r * cols;
      T gsum = 0;
      for (std::size_t c = 0; c < cols; ++c) gsum += gy[c];
      T* g = gx + r * cols;
      for (std::size_t c = 0; c < cols; ++c) g[c] += gy[c] - std::exp(y[c]) * gsum;
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias, T eps) {
  require_rank2(x, "layer_norm");
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gain.size() != cols || bias.size() != cols) {
    throw ShapeError("layer_norm: gain " + shape_string(gain.shape()) + " / bias " +
                     shape_string(bias.shape()) + " do not match last axis of " +
                     shape_string(x.shape()));
  }
  std::vector<T> out(rows * cols);
  auto xhat = std::make_shared<std::vector<T>>(rows * cols);
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  const T* g = gain.data().data();
  const T* b = bias.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data().data() + r * cols;
    T mean = 0;
    for (std::size_t c = 0; c < cols; ++c) mean += in[c];
    mean /= T(cols);
    T var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= T(cols);
    const T inv = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t c = 0; c < cols; ++c) {
      const T h = (in[c] - mean) * inv;
      (*xhat)[r * cols + c] = h;
      out[r * cols + c] = g[c] * h + b[c];
    }
  }
  return make_result<T>(
      x.shape(), std::move(out), {x, gain, bias},
      [rows, cols, xhat, inv_std](Node<T>& self) {
        const T* g = self.parents[1]->data.data();
        T* gx = parent_grad(self, 0);
        T* gg = parent_grad(self, 1);
        T* gb = parent_grad(self, 2);
        std::vector<T> dxhat(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* gy = self.grad.data() + r * cols;
          const T* h = xhat->data() + r * cols;
          if (gg) for (std::size_t c = 0; c < cols; ++c) gg[c] += gy[c] * h[c];
          if (gb) for (std::size_t c = 0; c < cols; ++c) gb[c] += gy[c];
          if (!gx) continue;
          T sum_d = 0, sum_dh = 0;
          for (std::size_t c = 0; c < cols; ++c) {
            dxhat[c] = gy[c] * g[c];
            sum_d += dxhat[c];
            sum_dh += dxhat[c] * h[c];
          }
          const T inv = (*inv_std)[r];
          const T n = T(cols);
          T* out = gx + r * cols;
          for (std::size_t c = 0; c < cols; ++c) {
            out[c] += inv / n * (n * dxhat[c] - sum_d - h[c] * sum_dh);
          }
        }
      });
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const TokenId> ids) {
  require_rank2(table, "embedding");
  const std::size_t vocab = table.rows(), d = table.cols();
  std::vector<T> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw ContractError("embedding: id " + std::to_string(ids[i]) +
                          " outside table of " + std::to_string(vocab) + " rows");
    }
    std::copy_n(table.data().data() + ids[i] * d, d, out.data() + i * d);
  }
  std::vector<TokenId> saved(ids.begin(), ids.end());
  return make_result<T>({ids.size(), d}, std::move(out), {table},
                        [saved = std::move(saved), d](Node<T>& self) {
                          T* gt = parent_grad(self, 0);
                          if (!gt) return;
                          for (std::size_t i = 0; i < saved.size(); ++i) {
                            kernels::axpy(T(1), self.grad.data() + i * d,
                                          gt + saved[i] * d, d);
                          }
                        });
}

template <typename T>
Tensor<T> gather_cols(const Tensor<T>& src, std::span<const std::uint32_t> index,
                      std::size_t width) {
  require_rank2(src, "gather_cols");
  const std::size_t rows = src.rows(), cols = src.cols();
  if (index.size() != rows * width) {
    throw ShapeError("gather_cols: index size " + std::to_string(index.size()) +
                     " != rows*width for " + shape_string(src.shape()));
  }
  std::vector<T> out(rows * width);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < width; ++j) {
      const std::uint32_t c = index[r * width + j];
      if (c >= cols) throw ShapeError("gather_cols: column index out of range");
      out[r * width + j] = src.data()[r * cols + c];
    }
  }
  std::vector<std::uint32_t> saved(index.begin(), index.end());
  return make_result<T>({rows, width}, std::move(out), {src},
                        [saved = std::move(saved), rows, cols, width](Node<T>& self) {
                          T* gs = parent_grad(self, 0);
                          if (!gs) return;
                          for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t j = 0; j < width; ++j) {
                              gs[r * cols + saved[r * width + j]] += self.grad[r * width + j];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> scatter_cols(const Tensor<T>& src, std::span<const std::uint32_t> index,
                       std::size_t out_cols) {
  require_rank2(src, "scatter_cols");
  const std::size_t rows = src.rows(), width = src.cols();
  if (index.size() != rows * width) {
    throw ShapeError("scatter_cols: index size does not match " +
                     shape_string(src.shape()));
  }
  std::vector<T> out(rows * out_cols, T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < width; ++j) {
      const std::uint32_t c = index[r * width + j];
      if (c >= out_cols) throw ShapeError("scatter_cols: column index out of range");
      out[r * out_cols + c] += src.data()[r * width + j];
    }
  }
  std::vector<std::uint32_t> saved(index.begin(), index.end());
  return make_result<T>({rows, out_cols}, std::move(out), {src},
                        [saved = std::move(saved), rows, width, out_cols](Node<T>& self) {
                          T* gs = parent_grad(self, 0);
                          if (!gs) return;
                          for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t j = 0; j < width; ++j) {
                              gs[r * width + j] += self.grad[r * out_cols + saved[r * width + j]];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> concat_cols(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: row count mismatch " +
                       shape_string(parts[0].shape()) + " vs " + shape_string(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<T> out(rows * total);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      std::copy_n(parts[i].data().data() + r * widths[i], widths[i],
                  out.data() + r * total + offset);
      offset += widths[i];
    }
  }
  return make_result_n<T>({rows, total}, std::move(out), parts,
                          [widths, rows, total](Node<T>& self) {
                            std::size_t offset = 0;
                            for (std::size_t i = 0; i < widths.size(); ++i) {
                              if (T* g = parent_grad(self, i)) {
                                for (std::size_t r = 0; r < rows; ++r) {
                                  kernels::axpy(T(1), self.grad.data() + r * total + offset,
                                                g + r * widths[i], widths[i]);
                                }
                              }
                              offset += widths[i];
                            }
                          });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  require_rank2(a, "slice_cols");
  const std::size_t rows = a.rows(), cols = a.cols();
  if (begin > end || end > cols) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") outside " + shape_string(a.shape()));
  }
  const std::size_t width = end - begin;
  std::vector<T> out(rows * width);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data().data() + r * cols + begin, width, out.data() + r * width);
  }
  return make_result<T>({rows, width}, std::move(out), {a},
                        [rows, cols, begin, width](Node<T>& self) {
                          T* g = parent_grad(self, 0);
                          if (!g) return;
                          for (std::size_t r = 0; r < rows; ++r) {
                            kernels::axpy(T(1), self.grad.data() + r * width,
                                          g + r * cols + begin, width);
                          }
                        });
}

template <typename T>
Tensor<T> concat_rows(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::vector<std::size_t> heights;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.cols() != cols) {
      throw ShapeError("concat_rows: column count mismatch " +
                       shape_string(parts[0].shape()) + " vs " + shape_string(p.shape()));
    }
    heights.push_back(p.rows());
    total += p.rows();
  }
  std::vector<T> out;
  out.reserve(total * cols);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result_n<T>({total, cols}, std::move(out), parts,
                          [heights, cols](Node<T>& self) {
                            std::size_t offset = 0;
                            for (std::size_t i = 0; i < heights.size(); ++i) {
                              const std::size_t n = heights[i] * cols;
                              if (T* g = parent_grad(self, i)) {
                                kernels::axpy(T(1), self.grad.data() + offset, g, n);
                              }
                              offset += n;
                            }
                          });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  require_rank2(a, "slice_rows");
  const std::size_t cols = a.cols();
  if (begin > end || end > a.rows()) {
    throw ShapeError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") outside " + shape_string(a.shape()));
  }
  std::vector<T> out(a.data().begin() + begin * cols, a.data().begin() + end * cols);
  return make_result<T>({end - begin, cols}, std::move(out), {a},
                        [begin, cols](Node<T>& self) {
                          if (T* g = parent_grad(self, 0)) {
                            kernels::axpy(T(1), self.grad.data(), g + begin * cols,
                                          self.grad.size());
                          }
                        });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, T rate, Rng& rng) {
  if (rate <= T(0)) return x;
  if (rate >= T(1)) throw ContractError("dropout: rate must be < 1");
  const T keep_scale = T(1) / (T(1) - rate);
  std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
  auto mask = std::make_shared<std::vector<T>>(x.size());
  for (auto& m : *mask) m = keep(rng) ? keep_scale : T(0);
  std::vector<T> out(x.size());
  kernels::mul(x.data().data(), mask->data(), out.data(), out.size());
  return make_result<T>(x.shape(), std::move(out), {x}, [mask](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  return make_result<T>({}, {total}, {x}, [](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      const T gy = self.grad[0];
      const std::size_t n = self.parents[0]->data.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += gy;
    }
  });
}

template <typename T>
Tensor<T> label_smoothed_nll(const Tensor<T>& logits, std::span<const TokenId> targets,
                             T epsilon, TokenId pad_id, Reduction reduction) {
  require_rank2(logits, "label_smoothed_nll");
  const std::size_t rows = logits.rows(), vocab = logits.cols();
  if (targets.size() != rows) {
    throw ShapeError("label_smoothed_nll: " + std::to_string(targets.size()) +
                     " targets for logits " + shape_string(logits.shape()));
  }
  if (!(epsilon >= T(0) && epsilon < T(1))) {
    throw ContractError("label_smoothed_nll: epsilon must lie in [0, 1)");
  }
  auto probs = std::make_shared<std::vector<T>>(rows * vocab, T(0));
  std::size_t count = 0;
  T total = 0;
  const T off = epsilon / T(vocab);
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] == pad_id) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= vocab) {
      throw ContractError("label_smoothed_nll: target id " + std::to_string(targets[r]) +
                          " outside vocabulary of " + std::to_string(vocab));
    }
    ++count;
    const T* x = logits.data().data() + r * vocab;
    const T max_v = *std::max_element(x, x + vocab);
    T z = 0;
    for (std::size_t c = 0; c < vocab; ++c) z += std::exp(x[c] - max_v);
    const T lse = max_v + std::log(z);
    T sum_logp = 0;
    for (std::size_t c = 0; c < vocab; ++c) {
      const T logp = x[c] - lse;
      sum_logp += logp;
      (*probs)[r * vocab + c] = std::exp(logp);
    }
    const T logp_true = x[targets[r]] - lse;
    total += -(T(1) - epsilon) * logp_true - off * sum_logp;
  }
  if (count == 0) {
    throw ContractError("label_smoothed_nll: every target position is padding");
  }
  const T norm = reduction == Reduction::kMean ? T(1) / T(count) : T(1);
  std::vector<TokenId> saved(targets.begin(), targets.end());
  return make_result<T>(
      {}, {total * norm}, {logits},
      [probs, saved = std::move(saved), rows, vocab, norm, epsilon, off,
       pad_id](Node<T>& self) {
        T* g = parent_grad(self, 0);
        if (!g) return;
        const T gy = self.grad[0] * norm;
        for (std::size_t r = 0; r < rows; ++r) {
          if (saved[r] == pad_id) continue;
          T* gr = g + r * vocab;
          const T* p = probs->data() + r * vocab;
          for (std::size_t c = 0; c < vocab; ++c) gr[c] += gy * (p[c] - off);
          gr[saved[r]] -= gy * (T(1) - epsilon);
        }
      });
}

#define DNMT_INSTANTIATE_OPS(T)                                                      \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> add_row(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> scale(const Tensor<T>&, T);                                    \
  template Tensor<T> sigmoid(const Tensor<T>&);                                     \
  template Tensor<T> relu(const Tensor<T>&);                                        \
  template Tensor<T> masked_softmax(const Tensor<T>&, const Mask&);                 \
  template Tensor<T> softmax(const Tensor<T>&);                                     \
  template Tensor<T> log_softmax(const Tensor<T>&);                                 \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T); \
  template Tensor<T> embedding(const Tensor<T>&, std::span<const TokenId>);         \
  template Tensor<T> gather_cols(const Tensor<T>&, std::span<const std::uint32_t>,  \
                                 std::size_t);                                      \
  template Tensor<T> scatter_cols(const Tensor<T>&, std::span<const std::uint32_t>, \
                                  std::size_t);                                     \
  template Tensor<T> concat_cols(std::span<const Tensor<T>>);                       \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);        \
  template Tensor<T> concat_rows(std::span<const Tensor<T>>);                       \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);        \
  template Tensor<T> dropout(const Tensor<T>&, T, Rng&);                            \
  template Tensor<T> sum(const Tensor<T>&);                                         \
  template Tensor<T> label_smoothed_nll(const Tensor<T>&, std::span<const TokenId>, \
                                        T, TokenId, Reduction);

DNMT_INSTANTIATE_OPS(float)
DNMT_INSTANTIATE_OPS(double)

#undef DNMT_INSTANTIATE_OPS

}  // namespace dnmt::numerics
