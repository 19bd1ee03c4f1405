#include "dnmt/numerics/optim.hpp"

#include <cmath>

#include "dnmt/error.hpp"

namespace dnmt::numerics {

template <typename T>
Tensor<T> ParamStore<T>::add(const std::string& name, Tensor<T> value) {
  if (params_.count(name)) throw ContractError("duplicate parameter name: " + name);
  value.set_requires_grad(true);
  params_.emplace(name, value);
  return value;
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

template <typename T>
std::size_t ParamStore<T>::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.size();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& [name, p] : params_) {
    Tensor<T> handle = p;
    handle.zero_grad();
  }
}

template <typename T>
void adam_step(ParamStore<T>& params, AdamState<T>& state, double lr) {
  if (lr < 0) throw ContractError("adam_step: negative learning rate");
  for (const auto& [name, p] : params.all()) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw Error("adam_step: non-finite gradient in parameter " + name);
      }
    }
  }
  state.step += 1;
  const double b1 = state.options.beta1, b2 = state.options.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (const auto& [name, p] : params.all()) {
    if (!p.has_grad()) continue;
    auto& m = state.first_moment[name];
    auto& v = state.second_moment[name];
    if (m.size() != p.size()) m.assign(p.size(), T(0));
    if (v.size() != p.size()) v.assign(p.size(), T(0));
    Tensor<T> handle = p;
    auto data = handle.mutable_data();
    auto grad = p.grad();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i];
      m[i] = static_cast<T>(b1 * m[i] + (1.0 - b1) * g);
      v[i] = static_cast<T>(b2 * v[i] + (1.0 - b2) * g * g);
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      data[i] = static_cast<T>(data[i] - lr * m_hat / (std::sqrt(v_hat) + state.options.eps));
    }
  }
}

template <typename T>
double clip_grad_norm(ParamStore<T>& params, double max_norm) {
  double sq = 0;
  for (const auto& [name, p] : params.all()) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T factor = static_cast<T>(max_norm / (norm + 1e-6));
    for (const auto& [name, p] : params.all()) {
      if (!p.has_grad()) continue;
      Tensor<T> handle = p;
      for (T& g : handle.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

double lr_at_step(std::int64_t step, std::int64_t d_model, std::int64_t warmup) {
  if (step < 1) throw ContractError("lr_at_step: step must be >= 1");
  if (d_model < 1 || warmup < 1) {
    throw ContractError("lr_at_step: d_model and warmup must be positive");
  }
  const double s = static_cast<double>(step);
  return std::pow(static_cast<double>(d_model), -0.5) *
         std::min(std::pow(s, -0.5), s * std::pow(static_cast<double>(warmup), -1.5));
}

template <typename T>
Tensor<T> xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-r, r);
  std::vector<T> data(fan_in * fan_out);
  for (auto& v : data) v = static_cast<T>(dist(rng));
  return Tensor<T>::from({fan_in, fan_out}, std::move(data));
}

template <typename T>
Tensor<T> normal(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<T> data(numel(shape));
  for (auto& v : data) v = static_cast<T>(dist(rng));
  return Tensor<T>::from(std::move(shape), std::move(data));
}

template class ParamStore<float>;
template class ParamStore<double>;
template void adam_step(ParamStore<float>&, AdamState<float>&, double);
template void adam_step(ParamStore<double>&, AdamState<double>&, double);
template double clip_grad_norm(ParamStore<float>&, double);
template double clip_grad_norm(ParamStore<double>&, double);
template Tensor<float> xavier_uniform<float>(std::size_t, std::size_t, Rng&);
template Tensor<double> xavier_uniform<double>(std::size_t, std::size_t, Rng&);
template Tensor<float> normal<float>(Shape, double, Rng&);
template Tensor<double> normal<double>(Shape, double, Rng&);

}  // namespace dnmt::numerics
