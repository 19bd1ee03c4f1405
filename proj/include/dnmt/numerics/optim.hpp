#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dnmt/numerics/ops.hpp"
#include "dnmt/numerics/tensor.hpp"

namespace dnmt::numerics {

// Named, ordered collection of trainable tensors. Iteration order is the
// lexicographic order of names, which fixes checkpoint layout.
template <typename T>
class ParamStore {
 public:
  // Registers a new parameter; throws ContractError on duplicate names.
  Tensor<T> add(const std::string& name, Tensor<T> value);
  const Tensor<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) > 0; }

  const std::map<std::string, Tensor<T>>& all() const { return params_; }
  std::size_t total_elements() const;
  void zero_grad();

 private:
  std::map<std::string, Tensor<T>> params_;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

template <typename T>
struct AdamState {
  AdamOptions options;
  std::int64_t step = 0;
  std::map<std::string, std::vector<T>> first_moment;
  std::map<std::string, std::vector<T>> second_moment;
};

// One bias-corrected Adam update of every parameter in `params` that has a
// gradient. Throws Error naming the parameter if a gradient is non-finite;
// in that case nothing is modified.
template <typename T>
void adam_step(ParamStore<T>& params, AdamState<T>& state, double lr);

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping. max_norm <= 0 disables clipping.
template <typename T>
double clip_grad_norm(ParamStore<T>& params, double max_norm);

// d_model^-0.5 * min(step^-0.5, step * warmup^-1.5)
double lr_at_step(std::int64_t step, std::int64_t d_model, std::int64_t warmup);

// Xavier/Glorot uniform in (-r, r), r = sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

template <typename T>
Tensor<T> normal(Shape shape, double stddev, Rng& rng);

}  // namespace dnmt::numerics
