#pragma once

#include <cstddef>

#include "dnmt/util/keyvalue.hpp"

namespace dnmt::model {

struct EncoderConfig {
  std::size_t d_model = 256;
  std::size_t d_ffn = 512;
  std::size_t n_layers = 4;  // N-1 local layers plus the global layer
  std::size_t n_heads = 4;
  std::size_t max_doc_sents = 32;
  std::size_t max_rel_sent_dist = 20;
  double dropout = 0.1;

  // Ablation switches; all on for the full model.
  bool reset_positions = true;
  bool segment_embedding = true;
  bool global_layer = true;
  bool relative_segments = true;
  bool fusion_gate = true;
};

struct DecoderConfig {
  std::size_t d_model = 256;
  std::size_t d_ffn = 512;
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t memory_span = 1;  // previous sentences kept as memory; 0 disables
  std::size_t max_rel_word_dist = 256;
  double dropout = 0.1;
};

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  std::size_t src_vocab_size = 0;
  std::size_t tgt_vocab_size = 0;
  double layer_norm_eps = 1e-5;

  // Throws ContractError describing the first violated constraint.
  void validate() const;

  // Stable `model.*` keys, used in checkpoints and run configs.
  util::KeyValues to_key_values() const;
  // Missing keys keep their defaults.
  static ModelConfig from_key_values(const util::KeyValues& kv);
};

}  // namespace dnmt::model
