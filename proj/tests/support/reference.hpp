#pragma once

// Straightforward double-precision reference implementations used as test
// oracles. Everything is written with explicit loops over plain nested
// vectors and shares no code with the library's forward passes.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "dnmt/numerics/tensor.hpp"

namespace dnmt::testing::ref {

using Mat = std::vector<std::vector<double>>;

template <typename T>
Mat to_mat(const numerics::Tensor<T>& t) {
  const std::size_t rows = t.rank() == 1 ? 1 : t.rows();
  const std::size_t cols = t.rank() == 1 ? t.size() : t.cols();
  Mat m(rows, std::vector<double>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) m[r][c] = t.data()[r * cols + c];
  }
  return m;
}

template <typename T>
std::vector<double> to_vec(const numerics::Tensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

inline Mat zeros(std::size_t r, std::size_t c) { return Mat(r, std::vector<double>(c, 0.0)); }

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c = zeros(a.size(), b[0].size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Mat add(const Mat& a, const Mat& b) {
  Mat c = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) c[i][j] += b[i][j];
  return c;
}

inline Mat rows(const Mat& a, std::size_t begin, std::size_t end) {
  return Mat(a.begin() + begin, a.begin() + end);
}

inline Mat cols(const Mat& a, std::size_t begin, std::size_t end) {
  Mat out;
  for (const auto& r : a) out.emplace_back(r.begin() + begin, r.begin() + end);
  return out;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline std::vector<double> softmax(const std::vector<double>& logits,
                                   const std::vector<bool>& allowed) {
  double mx = -INFINITY;
  for (std::size_t j = 0; j < logits.size(); ++j)
    if (allowed[j]) mx = std::max(mx, logits[j]);
  std::vector<double> p(logits.size(), 0.0);
  double z = 0;
  for (std::size_t j = 0; j < logits.size(); ++j)
    if (allowed[j]) z += (p[j] = std::exp(logits[j] - mx));
  for (auto& v : p) v /= z;
  return p;
}

inline Mat layer_norm(const Mat& x, const std::vector<double>& gain,
                      const std::vector<double>& bias, double eps) {
  Mat out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double n = static_cast<double>(x[i].size());
    double mean = 0, var = 0;
    for (double v : x[i]) mean += v;
    mean /= n;
    for (double v : x[i]) var += (v - mean) * (v - mean);
    var /= n;
    for (std::size_t j = 0; j < x[i].size(); ++j)
      out[i][j] = (x[i][j] - mean) / std::sqrt(var + eps) * gain[j] + bias[j];
  }
  return out;
}

inline Mat relu(Mat x) {
  for (auto& r : x)
    for (auto& v : r) v = std::max(v, 0.0);
  return x;
}

inline Mat add_bias(Mat x, const std::vector<double>& b) {
  for (auto& r : x)
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += b[j];
  return x;
}

inline std::vector<double> sinusoid(double pos, std::size_t d) {
  std::vector<double> e(d);
  for (std::size_t i = 0; i < d; i += 2) {
    const double angle = pos / std::pow(10000.0, static_cast<double>(i) / d);
    e[i] = std::sin(angle);
    if (i + 1 < d) e[i + 1] = std::cos(angle);
  }
  return e;
}

// Multi-head attention with explicit per-pair logits. `logit(h, i, j, qh,
// kh)` may add extra terms; `value(h, i, j)` returns extra value terms;
// `allowed(i, j)` decides visibility. Inputs are already projected.
struct AttentionHooks {
  std::function<double(std::size_t, std::size_t, std::size_t)> extra_logit;
  std::function<std::vector<double>(std::size_t, std::size_t, std::size_t)> extra_value;
  std::function<bool(std::size_t, std::size_t)> allowed;
};

inline Mat attention(const Mat& q, const Mat& k, const Mat& v, std::size_t n_heads,
                     const AttentionHooks& hooks, std::vector<Mat>* weights = nullptr) {
  const std::size_t tq = q.size(), tk = k.size(), d = q[0].size(), dh = d / n_heads;
  Mat out = zeros(tq, d);
  for (std::size_t h = 0; h < n_heads; ++h) {
    Mat w = zeros(tq, tk);
    for (std::size_t i = 0; i < tq; ++i) {
      std::vector<double> logits(tk);
      std::vector<bool> ok(tk);
      for (std::size_t j = 0; j < tk; ++j) {
        double e = 0;
        for (std::size_t c = 0; c < dh; ++c) e += q[i][h * dh + c] * k[j][h * dh + c];
        if (hooks.extra_logit) e += hooks.extra_logit(h, i, j);
        logits[j] = e / std::sqrt(static_cast<double>(dh));
        ok[j] = hooks.allowed ? hooks.allowed(i, j) : true;
      }
      const auto p = softmax(logits, ok);
      w[i] = p;
      for (std::size_t j = 0; j < tk; ++j) {
        if (p[j] == 0) continue;
        std::vector<double> extra;
        if (hooks.extra_value) extra = hooks.extra_value(h, i, j);
        for (std::size_t c = 0; c < dh; ++c)
          out[i][h * dh + c] += p[j] * (v[j][h * dh + c] + (extra.empty() ? 0.0 : extra[c]));
      }
    }
    if (weights) weights->push_back(w);
  }
  return out;
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) m = std::max(m, std::abs(a[i][j] - b[i][j]));
  return m;
}

}  // namespace dnmt::testing::ref
