#include "dnmt/model/config.hpp"

#include <cstdio>
#include <string>

#include "dnmt/error.hpp"

namespace dnmt::model {
namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

void read(const util::KeyValues& kv, const std::string& key, std::size_t& out) {
  if (!kv.has(key)) return;
  const auto v = kv.get_int(key);
  if (v < 0) throw ContractError("config key " + key + " must be non-negative");
  out = static_cast<std::size_t>(v);
}
void read(const util::KeyValues& kv, const std::string& key, double& out) {
  if (kv.has(key)) out = kv.get_double(key);
}
void read(const util::KeyValues& kv, const std::string& key, bool& out) {
  if (kv.has(key)) out = kv.get_bool(key);
}

}  // namespace

void ModelConfig::validate() const {
  const auto& e = encoder;
  const auto& d = decoder;
  if (e.d_model == 0 || e.n_heads == 0 || e.d_model % e.n_heads != 0) {
    throw ContractError("encoder.d_model must be a positive multiple of encoder.n_heads");
  }
  if (d.d_model == 0 || d.n_heads == 0 || d.d_model % d.n_heads != 0) {
    throw ContractError("decoder.d_model must be a positive multiple of decoder.n_heads");
  }
  if (e.d_model != d.d_model) {
    throw ContractError("encoder.d_model and decoder.d_model must agree");
  }
  if (e.n_layers < 2) throw ContractError("encoder.n_layers must be at least 2");
  if (d.n_layers < 1) throw ContractError("decoder.n_layers must be at least 1");
  if (e.d_ffn == 0 || d.d_ffn == 0) throw ContractError("d_ffn must be positive");
  if (e.max_doc_sents == 0) throw ContractError("encoder.max_doc_sents must be positive");
  if (e.dropout < 0 || e.dropout >= 1 || d.dropout < 0 || d.dropout >= 1) {
    throw ContractError("dropout must lie in [0, 1)");
  }
  if (src_vocab_size < 5 || tgt_vocab_size < 5) {
    throw ContractError("vocabularies must hold at least one regular token");
  }
  if (layer_norm_eps <= 0) throw ContractError("layer_norm_eps must be positive");
}

util::KeyValues ModelConfig::to_key_values() const {
  util::KeyValues kv;
  const auto& e = encoder;
  const auto& d = decoder;
  kv.set("encoder.d_model", std::to_string(e.d_model));
  kv.set("encoder.d_ffn", std::to_string(e.d_ffn));
  kv.set("encoder.n_layers", std::to_string(e.n_layers));
  kv.set("encoder.n_heads", std::to_string(e.n_heads));
  kv.set("encoder.max_doc_sents", std::to_string(e.max_doc_sents));
  kv.set("encoder.max_rel_sent_dist", std::to_string(e.max_rel_sent_dist));
  kv.set("encoder.dropout", fmt_double(e.dropout));
  kv.set("encoder.reset_positions", fmt_bool(e.reset_positions));
  kv.set("encoder.segment_embedding", fmt_bool(e.segment_embedding));
  kv.set("encoder.global_layer", fmt_bool(e.global_layer));
  kv.set("encoder.relative_segments", fmt_bool(e.relative_segments));
  kv.set("encoder.fusion_gate", fmt_bool(e.fusion_gate));
  kv.set("decoder.d_model", std::to_string(d.d_model));
  kv.set("decoder.d_ffn", std::to_string(d.d_ffn));
  kv.set("decoder.n_layers", std::to_string(d.n_layers));
  kv.set("decoder.n_heads", std::to_string(d.n_heads));
  kv.set("decoder.memory_span", std::to_string(d.memory_span));
  kv.set("decoder.max_rel_word_dist", std::to_string(d.max_rel_word_dist));
  kv.set("decoder.dropout", fmt_double(d.dropout));
  kv.set("model.src_vocab_size", std::to_string(src_vocab_size));
  kv.set("model.tgt_vocab_size", std::to_string(tgt_vocab_size));
  kv.set("model.layer_norm_eps", fmt_double(layer_norm_eps));
  return kv;
}

ModelConfig ModelConfig::from_key_values(const util::KeyValues& kv) {
  ModelConfig c;
  auto& e = c.encoder;
  auto& d = c.decoder;
  read(kv, "encoder.d_model", e.d_model);
  read(kv, "encoder.d_ffn", e.d_ffn);
  read(kv, "encoder.n_layers", e.n_layers);
  read(kv, "encoder.n_heads", e.n_heads);
  read(kv, "encoder.max_doc_sents", e.max_doc_sents);
  read(kv, "encoder.max_rel_sent_dist", e.max_rel_sent_dist);
  read(kv, "encoder.dropout", e.dropout);
  read(kv, "encoder.reset_positions", e.reset_positions);
  read(kv, "encoder.segment_embedding", e.segment_embedding);
  read(kv, "encoder.global_layer", e.global_layer);
  read(kv, "encoder.relative_segments", e.relative_segments);
  read(kv, "encoder.fusion_gate", e.fusion_gate);
  read(kv, "decoder.d_model", d.d_model);
  read(kv, "decoder.d_ffn", d.d_ffn);
  read(kv, "decoder.n_layers", d.n_layers);
  read(kv, "decoder.n_heads", d.n_heads);
  read(kv, "decoder.memory_span", d.memory_span);
  read(kv, "decoder.max_rel_word_dist", d.max_rel_word_dist);
  read(kv, "decoder.dropout", d.dropout);
  read(kv, "model.src_vocab_size", c.src_vocab_size);
  read(kv, "model.tgt_vocab_size", c.tgt_vocab_size);
  read(kv, "model.layer_norm_eps", c.layer_norm_eps);
  return c;
}

}  // namespace dnmt::model
