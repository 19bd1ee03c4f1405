#include "dnmt/model/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "dnmt/error.hpp"

namespace dnmt::model {

using namespace numerics;

namespace {

constexpr std::size_t kPositionTableRows = 512;

}  // namespace

template <typename T>
Encoder<T>::Encoder(const EncoderConfig& config, double ln_eps, std::size_t vocab_size,
                    ParamStore<T>& store, Rng& rng)
    : config_(config), ln_eps_(ln_eps) {
  ParamBuilder<T> b(store, rng);
  const std::size_t d = config.d_model, dh = d / config.n_heads;
  const double emb_std = 1.0 / std::sqrt(static_cast<double>(d));
  embed_ = b.normal("enc.embed", {vocab_size, d}, emb_std);
  if (config.segment_embedding) {
    segment_ = b.normal("enc.segment", {config.max_doc_sents, d}, emb_std);
  }
  positions_ = sinusoid_table<T>(kPositionTableRows, d);
  for (std::size_t l = 0; l + 1 < config.n_layers; ++l) {
    const std::string p = "enc.layer" + std::to_string(l);
    layers_.push_back({b.attention(p + ".attn", d), b.layer_norm(p + ".ln1", d),
                       b.feed_forward(p + ".ffn", d, config.d_ffn), b.layer_norm(p + ".ln2", d)});
  }
  if (config.global_layer) {
    global_ = b.attention("enc.global.attn", d);
    if (config.relative_segments) {
      const std::size_t rows = 2 * config.max_rel_sent_dist + 1;
      const double gamma_std = 1.0 / std::sqrt(static_cast<double>(dh));
      gamma_k_ = b.normal("enc.global.gamma_k", {rows, dh}, gamma_std);
      gamma_v_ = b.normal("enc.global.gamma_v", {rows, dh}, gamma_std);
    }
    if (config.fusion_gate) gate_w_ = b.projection("enc.fuse.wg", 2 * d, d);
    fuse_ln_ = b.layer_norm("enc.fuse.ln", d);
  }
}

template <typename T>
std::size_t Encoder<T>::distance_index(std::int64_t k, std::int64_t kappa) const {
  const auto D = static_cast<std::int64_t>(config_.max_rel_sent_dist);
  return static_cast<std::size_t>(std::clamp<std::int64_t>(k - kappa, -D, D) + D);
}

template <typename T>
Tensor<T> Encoder<T>::embed_source(const corpus::SourceInput& input) const {
  const std::size_t n = input.num_tokens(), d = config_.d_model;
  if (n == 0) throw ContractError("cannot encode an empty document");
  auto x = embedding(embed_, std::span<const TokenId>(input.tokens));

  std::vector<T> pos(n * d);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t p = config_.reset_positions ? static_cast<std::size_t>(input.positions[t]) : t;
    if (p < kPositionTableRows) {
      std::copy_n(positions_.data().begin() + p * d, d, pos.begin() + t * d);
    } else {
      auto row = sinusoid_table<T>(p + 1, d);
      std::copy_n(row.data().begin() + p * d, d, pos.begin() + t * d);
    }
  }
  x = add(x, Tensor<T>::from({n, d}, std::move(pos)));

  if (config_.segment_embedding) {
    std::vector<TokenId> seg(n);
    const auto last = static_cast<TokenId>(config_.max_doc_sents - 1);
    for (std::size_t t = 0; t < n; ++t) seg[t] = std::min<TokenId>(input.segments[t], last);
    x = add(x, embedding(segment_, std::span<const TokenId>(seg)));
  }
  return x;
}

template <typename T>
Tensor<T> Encoder<T>::local_encode(const Tensor<T>& x, const corpus::SourceInput& input,
                                   ForwardContext& ctx) const {
  const std::size_t n = input.num_tokens();
  Mask mask(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) mask.set(i, j, input.segments[i] != input.segments[j]);
  }
  const double drop = config_.dropout;
  Tensor<T> h = apply_dropout(x, drop, ctx);
  for (const auto& layer : layers_) {
    auto a = multi_head_attention(matmul(h, layer.attn.wq), matmul(h, layer.attn.wk),
                                  matmul(h, layer.attn.wv), mask, config_.n_heads, drop, ctx);
    h = residual_norm(h, matmul(a, layer.attn.wo), layer.ln1, ln_eps_, drop, ctx);
    h = residual_norm(h, feed_forward(h, layer.ffn, drop, ctx), layer.ln2, ln_eps_, drop, ctx);
  }
  return h;
}

template <typename T>
GlobalAttention<T> Encoder<T>::segment_relative_attention(
    const Tensor<T>& h_local, const corpus::SourceInput& input, ForwardContext& ctx,
    std::optional<std::size_t> context_limit) const {
  if (!config_.global_layer) throw ContractError("global layer is disabled in this model");
  const std::size_t n = h_local.rows(), d = config_.d_model, dh = d / config_.n_heads;
  if (n != input.num_tokens()) {
    throw ShapeError("segment attention: " + std::to_string(n) + " states for " +
                     std::to_string(input.num_tokens()) + " tokens");
  }
  const std::size_t R = 2 * config_.max_rel_sent_dist + 1;
  std::vector<std::uint32_t> idx(n * n);
  Mask mask = context_limit ? Mask(n, n) : Mask(1, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::int64_t k = input.segments[i], kappa = input.segments[j];
      idx[i * n + j] = static_cast<std::uint32_t>(distance_index(k, kappa));
      if (context_limit && static_cast<std::size_t>(std::llabs(k - kappa)) > *context_limit) {
        mask.set(i, j, true);
      }
    }
  }

  const auto q = matmul(h_local, global_.wq);
  const auto kk = matmul(h_local, global_.wk);
  const auto v = matmul(h_local, global_.wv);
  const T factor = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  const bool relative = config_.relative_segments;

  GlobalAttention<T> out;
  std::vector<Tensor<T>> heads;
  for (std::size_t h = 0; h < config_.n_heads; ++h) {
    const auto qh = slice_cols(q, h * dh, (h + 1) * dh);
    const auto kh = slice_cols(kk, h * dh, (h + 1) * dh);
    const auto vh = slice_cols(v, h * dh, (h + 1) * dh);
    auto logits = matmul_nt(qh, kh);
    if (relative) {
      logits = add(logits, gather_cols(matmul_nt(qh, gamma_k_), idx, n));
    }
    auto alpha = masked_softmax(scale(logits, factor), mask);
    out.alpha.push_back(alpha);
    const auto dropped = apply_dropout(alpha, config_.dropout, ctx);
    auto z = matmul(dropped, vh);
    if (relative) z = add(z, matmul(scatter_cols(dropped, idx, R), gamma_v_));
    heads.push_back(z);
  }
  const auto z = config_.n_heads == 1 ? heads[0] : concat_cols<T>(heads);
  out.h_global = matmul(z, global_.wo);
  return out;
}

template <typename T>
Fusion<T> Encoder<T>::fuse_contexts(const Tensor<T>& h_local, const Tensor<T>& h_global) const {
  if (h_local.shape() != h_global.shape()) {
    throw ShapeError("fuse_contexts: " + shape_string(h_local.shape()) + " vs " +
                     shape_string(h_global.shape()));
  }
  const T eps = static_cast<T>(ln_eps_);
  Fusion<T> out;
  if (!config_.fusion_gate) {
    out.h = layer_norm(add(h_local, h_global), fuse_ln_.gain, fuse_ln_.bias, eps);
    return out;
  }
  const Tensor<T> both[] = {h_local, h_global};
  out.gate = sigmoid(matmul(concat_cols<T>(both), gate_w_));
  // (1 - g) * hL + g * hG
  const auto mixed = add(h_local, mul(out.gate, sub(h_global, h_local)));
  out.h = layer_norm(mixed, fuse_ln_.gain, fuse_ln_.bias, eps);
  return out;
}

template <typename T>
EncoderOutput<T> Encoder<T>::encode_document(const corpus::SourceInput& input,
                                             ForwardContext& ctx,
                                             std::optional<std::size_t> context_limit) const {
  EncoderOutput<T> out;
  out.h_local = local_encode(embed_source(input), input, ctx);
  const bool bypass = input.num_sentences() < 2 || !config_.global_layer ||
                      (context_limit && *context_limit == 0);
  if (bypass) {
    out.h = out.h_local;
    return out;
  }
  auto global = segment_relative_attention(out.h_local, input, ctx, context_limit);
  out.alpha = std::move(global.alpha);
  out.h_global = global.h_global;
  auto fused = fuse_contexts(out.h_local, apply_dropout(global.h_global, config_.dropout, ctx));
  out.h = fused.h;
  out.gate = fused.gate;
  return out;
}

template class Encoder<float>;
template class Encoder<double>;

}  // namespace dnmt::model
