#pragma once

#include <cstdint>
#include <optional>

#include "dnmt/model/config.hpp"
#include "dnmt/model/decoder.hpp"
#include "dnmt/model/encoder.hpp"

namespace dnmt::model {

// Owns every parameter of the translation model. Encoder and decoder hold
// handles into the same ParamStore, so updating a stored tensor in place is
// visible to both. Not copyable for that reason.
template <typename T>
class Model {
 public:
  // Parameters are initialized from a generator seeded with `seed`.
  explicit Model(const ModelConfig& config, std::uint64_t seed = 1);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  const Encoder<T>& encoder() const { return encoder_; }
  const Decoder<T>& decoder() const { return decoder_; }

  // Number of previous sentences kept in decoder memory, optionally capped
  // by a context limit.
  std::size_t memory_span(std::optional<std::size_t> context_limit = std::nullopt) const;

 private:
  ModelConfig config_;
  ParamStore<T> params_;
  Rng init_rng_;
  Encoder<T> encoder_;
  Decoder<T> decoder_;
};

// Rows of the encoder states that belong to sentence k.
template <typename T>
Tensor<T> sentence_rows(const Tensor<T>& states, const corpus::SourceInput& input,
                        std::size_t k);

}  // namespace dnmt::model
