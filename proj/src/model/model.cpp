#include "dnmt/model/model.hpp"

#include <algorithm>

#include "dnmt/error.hpp"

namespace dnmt::model {

namespace {

const ModelConfig& validated(const ModelConfig& config) {
  config.validate();
  return config;
}

}  // namespace

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed)
    : config_(validated(config)),
      init_rng_(seed),
      encoder_(config.encoder, config.layer_norm_eps, config.src_vocab_size, params_, init_rng_),
      decoder_(config.decoder, config.layer_norm_eps, config.tgt_vocab_size, params_, init_rng_) {}

template <typename T>
std::size_t Model<T>::memory_span(std::optional<std::size_t> context_limit) const {
  const std::size_t span = config_.decoder.memory_span;
  return context_limit ? std::min(span, *context_limit) : span;
}

template <typename T>
Tensor<T> sentence_rows(const Tensor<T>& states, const corpus::SourceInput& input,
                        std::size_t k) {
  if (k >= input.num_sentences()) {
    throw ContractError("sentence " + std::to_string(k) + " outside a document of " +
                        std::to_string(input.num_sentences()));
  }
  if (states.rows() != input.num_tokens()) {
    throw ShapeError("encoder states have " + std::to_string(states.rows()) + " rows for " +
                     std::to_string(input.num_tokens()) + " source tokens");
  }
  return numerics::slice_rows(states, input.sentence_offsets[k], input.sentence_offsets[k + 1]);
}

template class Model<float>;
template class Model<double>;
template Tensor<float> sentence_rows(const Tensor<float>&, const corpus::SourceInput&,
                                     std::size_t);
template Tensor<double> sentence_rows(const Tensor<double>&, const corpus::SourceInput&,
                                      std::size_t);

}  // namespace dnmt::model
