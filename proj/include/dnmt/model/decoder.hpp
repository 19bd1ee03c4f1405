#pragma once

#include <span>
#include <vector>

#include "dnmt/model/config.hpp"
#include "dnmt/model/layers.hpp"

namespace dnmt::model {

using numerics::TokenId;

// Per-layer input states of the previous target sentence(s), detached from
// any graph. An empty memory has no layers.
template <typename T>
struct DecoderMemory {
  std::vector<Tensor<T>> layers;
  std::vector<std::size_t> sentence_lengths;

  bool empty() const { return layers.empty(); }
  std::size_t rows() const { return empty() ? 0 : layers.front().rows(); }
};

template <typename T>
struct DecoderResult {
  Tensor<T> logits;                     // [T x V]
  std::vector<Tensor<T>> layer_inputs;  // per layer, [T x d]
};

// Transformer-XL style decoder. Each layer runs relative-position causal
// self-attention over [memory; current sentence], cross-attention to the
// current source sentence and a feed-forward block, each followed by a
// residual connection and layer normalization. The output projection reuses
// the target embedding table.
template <typename T>
class Decoder {
 public:
  struct Layer {
    AttentionParams<T> self;
    Tensor<T> wr;        // relative position projection [d x d]
    Tensor<T> u, v;      // content and position biases [1 x d]
    LayerNormParams<T> ln1;
    AttentionParams<T> cross;
    LayerNormParams<T> ln2;
    FeedForwardParams<T> ffn;
    LayerNormParams<T> ln3;
  };

  // Cached cross-attention keys and values of one source sentence.
  struct SourceCache {
    std::vector<Tensor<T>> keys, values;
  };

  // Incremental decoding state of one hypothesis.
  struct StepState {
    std::vector<Tensor<T>> keys, values;  // per layer, rows of [memory; prefix]
    std::vector<Tensor<T>> inputs;        // per layer, rows of the prefix only
  };

  Decoder(const DecoderConfig& config, double ln_eps, std::size_t vocab_size,
          ParamStore<T>& store, Rng& rng);

  const DecoderConfig& config() const { return config_; }
  const Tensor<T>& embedding() const { return embed_; }
  const Tensor<T>& output_projection() const { return embed_; }
  const Layer& layer(std::size_t l) const { return layers_.at(l); }
  std::size_t num_layers() const { return layers_.size(); }

  // x: current layer input [Tq x d]; memory: [M x d] or undefined. Query i
  // sits at absolute position M + i and sees keys 0..M+i.
  Tensor<T> rel_self_attention(std::size_t layer, const Tensor<T>& x, const Tensor<T>& memory,
                               ForwardContext& ctx,
                               std::vector<Tensor<T>>* weights = nullptr) const;

  // source_mask, when given, is a single row marking padded source columns.
  Tensor<T> cross_attention(std::size_t layer, const Tensor<T>& s, const Tensor<T>& source,
                            const Mask* source_mask, ForwardContext& ctx,
                            std::vector<Tensor<T>>* weights = nullptr) const;

  // inputs: bos y_1 .. y_T. Row t of the logits scores the token after
  // inputs[t].
  DecoderResult<T> decode_teacher_forced(std::span<const TokenId> inputs,
                                         const Tensor<T>& source,
                                         const DecoderMemory<T>& memory, ForwardContext& ctx,
                                         const Mask* source_mask = nullptr) const;

  // Memory for the next sentence: the last span-1 sentences of `memory`
  // followed by the detached layer inputs of the sentence just decoded.
  DecoderMemory<T> advance_memory(const DecoderMemory<T>& memory,
                                  const std::vector<Tensor<T>>& layer_inputs,
                                  std::size_t span) const;

  Tensor<T> output_logits(const Tensor<T>& states) const;

  SourceCache prepare_source(const Tensor<T>& source) const;
  StepState start(const DecoderMemory<T>& memory) const;
  // Feeds one token and returns the logits of the next one, [1 x V].
  Tensor<T> step(StepState& state, TokenId token, const SourceCache& source) const;

 private:
  Tensor<T> rel_attend(const Layer& layer, const Tensor<T>& q, const Tensor<T>& k,
                       const Tensor<T>& v, std::size_t offset, ForwardContext& ctx,
                       std::vector<Tensor<T>>* weights) const;
  Tensor<T> cross_attend(const Layer& layer, const Tensor<T>& s, const Tensor<T>& k,
                         const Tensor<T>& v, const Mask* source_mask, ForwardContext& ctx,
                         std::vector<Tensor<T>>* weights) const;
  void check_memory(const DecoderMemory<T>& memory) const;

  DecoderConfig config_;
  double ln_eps_;
  Tensor<T> embed_;
  Tensor<T> relative_;  // constant sinusoid table of distances 0..max_rel_word_dist
  std::vector<Layer> layers_;
};

}  // namespace dnmt::model
