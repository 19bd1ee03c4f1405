#pragma once

#include <optional>
#include <vector>

#include "dnmt/corpus/batch.hpp"
#include "dnmt/model/config.hpp"
#include "dnmt/model/layers.hpp"

namespace dnmt::model {

template <typename T>
struct GlobalAttention {
  Tensor<T> h_global;               // [N x d], after the output projection
  std::vector<Tensor<T>> alpha;     // per head, [N x N] query token x key token
};

template <typename T>
struct Fusion {
  Tensor<T> h;
  Tensor<T> gate;  // undefined when the gate is ablated
};

template <typename T>
struct EncoderOutput {
  Tensor<T> h;        // fused states, [N x d]
  Tensor<T> h_local;
  Tensor<T> h_global; // undefined when the global layer is bypassed
  Tensor<T> gate;     // undefined when bypassed or ablated
  std::vector<Tensor<T>> alpha;

  bool global_active() const { return h_global.defined(); }
};

// Source document encoder: word + segment + sentence-local position
// embeddings, N-1 sentence-local Transformer layers, and one global layer of
// segment-level relative attention whose output is gated into the local
// states. Tokens of the whole document are processed as one flat sequence;
// sentence boundaries come from SourceInput.
template <typename T>
class Encoder {
 public:
  struct LocalLayer {
    AttentionParams<T> attn;
    LayerNormParams<T> ln1;
    FeedForwardParams<T> ffn;
    LayerNormParams<T> ln2;
  };

  Encoder(const EncoderConfig& config, double ln_eps, std::size_t vocab_size,
          ParamStore<T>& store, Rng& rng);

  const EncoderConfig& config() const { return config_; }

  Tensor<T> embed_source(const corpus::SourceInput& input) const;
  Tensor<T> local_encode(const Tensor<T>& x, const corpus::SourceInput& input,
                         ForwardContext& ctx) const;
  // context_limit restricts each query to sentences within that distance.
  GlobalAttention<T> segment_relative_attention(
      const Tensor<T>& h_local, const corpus::SourceInput& input, ForwardContext& ctx,
      std::optional<std::size_t> context_limit = std::nullopt) const;
  Fusion<T> fuse_contexts(const Tensor<T>& h_local, const Tensor<T>& h_global) const;

  // Documents with a single sentence, a disabled global layer or a context
  // limit of 0 skip the global layer: h is h_local itself.
  EncoderOutput<T> encode_document(const corpus::SourceInput& input, ForwardContext& ctx,
                                   std::optional<std::size_t> context_limit = std::nullopt) const;

  // Index into the relative-distance tables for query sentence k and key
  // sentence kappa.
  std::size_t distance_index(std::int64_t k, std::int64_t kappa) const;

 private:
  EncoderConfig config_;
  double ln_eps_;
  Tensor<T> embed_;
  Tensor<T> segment_;
  Tensor<T> positions_;  // constant sinusoid table
  std::vector<LocalLayer> layers_;
  AttentionParams<T> global_;
  Tensor<T> gamma_k_, gamma_v_;
  Tensor<T> gate_w_;
  LayerNormParams<T> fuse_ln_;
};

}  // namespace dnmt::model
