#include "dnmt/model/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "dnmt/error.hpp"

namespace dnmt::model {

using namespace numerics;

template <typename T>
Decoder<T>::Decoder(const DecoderConfig& config, double ln_eps, std::size_t vocab_size,
                    ParamStore<T>& store, Rng& rng)
    : config_(config), ln_eps_(ln_eps) {
  ParamBuilder<T> b(store, rng);
  const std::size_t d = config.d_model;
  embed_ = b.normal("dec.embed", {vocab_size, d}, 1.0 / std::sqrt(static_cast<double>(d)));
  relative_ = sinusoid_table<T>(config.max_rel_word_dist + 1, d);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    const std::string p = "dec.layer" + std::to_string(l);
    Layer layer;
    layer.self = b.attention(p + ".self", d);
    layer.wr = b.projection(p + ".self.wr", d, d);
    layer.u = b.constant(p + ".self.u", {1, d}, T(0));
    layer.v = b.constant(p + ".self.v", {1, d}, T(0));
    layer.ln1 = b.layer_norm(p + ".ln1", d);
    layer.cross = b.attention(p + ".cross", d);
    layer.ln2 = b.layer_norm(p + ".ln2", d);
    layer.ffn = b.feed_forward(p + ".ffn", d, config.d_ffn);
    layer.ln3 = b.layer_norm(p + ".ln3", d);
    layers_.push_back(std::move(layer));
  }
}

template <typename T>
Tensor<T> Decoder<T>::rel_attend(const Layer& layer, const Tensor<T>& q, const Tensor<T>& k,
                                 const Tensor<T>& v, std::size_t offset, ForwardContext& ctx,
                                 std::vector<Tensor<T>>* weights) const {
  const std::size_t tq = q.rows(), tk = k.rows(), d = config_.d_model;
  const std::size_t dh = d / config_.n_heads, max_dist = config_.max_rel_word_dist;
  if (offset + tq != tk) {
    throw ShapeError("relative attention: " + std::to_string(tq) + " queries at offset " +
                     std::to_string(offset) + " against " + std::to_string(tk) + " keys");
  }
  const std::size_t n_dist = std::min(tk, max_dist + 1);
  const auto rel = slice_rows(relative_, 0, n_dist);

  Mask mask(tq, tk);
  std::vector<std::uint32_t> idx(tq * tk, 0);
  for (std::size_t i = 0; i < tq; ++i) {
    const std::size_t pos = offset + i;
    for (std::size_t j = 0; j < tk; ++j) {
      if (j > pos) {
        mask.set(i, j, true);
      } else {
        idx[i * tk + j] = static_cast<std::uint32_t>(std::min(pos - j, max_dist));
      }
    }
  }

  const T factor = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  std::vector<Tensor<T>> heads;
  for (std::size_t h = 0; h < config_.n_heads; ++h) {
    const std::size_t c0 = h * dh, c1 = (h + 1) * dh;
    const auto qh = slice_cols(q, c0, c1);
    const auto kh = slice_cols(k, c0, c1);
    const auto vh = slice_cols(v, c0, c1);
    const auto content = matmul_nt(add_row(qh, slice_cols(layer.u, c0, c1)), kh);
    // (q + v) (R W_r)^T computed as ((q + v) W_r^T) R^T
    const auto qv = add_row(qh, slice_cols(layer.v, c0, c1));
    const auto by_dist = matmul_nt(matmul_nt(qv, slice_cols(layer.wr, c0, c1)), rel);
    const auto logits = add(content, gather_cols(by_dist, idx, tk));
    auto alpha = masked_softmax(scale(logits, factor), mask);
    if (weights) weights->push_back(alpha);
    heads.push_back(matmul(apply_dropout(alpha, config_.dropout, ctx), vh));
  }
  const auto z = config_.n_heads == 1 ? heads[0] : concat_cols<T>(heads);
  return matmul(z, layer.self.wo);
}

template <typename T>
Tensor<T> Decoder<T>::rel_self_attention(std::size_t l, const Tensor<T>& x,
                                         const Tensor<T>& memory, ForwardContext& ctx,
                                         std::vector<Tensor<T>>* weights) const {
  const auto& layer = layers_.at(l);
  Tensor<T> context = x;
  std::size_t offset = 0;
  if (memory.defined() && memory.rows() > 0) {
    if (memory.cols() != x.cols()) {
      throw ShapeError("decoder memory width " + std::to_string(memory.cols()) +
                       " != state width " + std::to_string(x.cols()));
    }
    const Tensor<T> parts[] = {memory, x};
    context = concat_rows<T>(parts);
    offset = memory.rows();
  }
  return rel_attend(layer, matmul(x, layer.self.wq), matmul(context, layer.self.wk),
                    matmul(context, layer.self.wv), offset, ctx, weights);
}

template <typename T>
Tensor<T> Decoder<T>::cross_attend(const Layer& layer, const Tensor<T>& s, const Tensor<T>& k,
                                   const Tensor<T>& v, const Mask* source_mask,
                                   ForwardContext& ctx, std::vector<Tensor<T>>* weights) const {
  const Mask open(1, k.rows());
  const Mask& mask = source_mask ? *source_mask : open;
  if (mask.cols != k.rows()) {
    throw ShapeError("cross attention: mask covers " + std::to_string(mask.cols) +
                     " source tokens, states have " + std::to_string(k.rows()));
  }
  auto z = multi_head_attention(matmul(s, layer.cross.wq), k, v, mask, config_.n_heads,
                                config_.dropout, ctx, weights);
  return matmul(z, layer.cross.wo);
}

template <typename T>
Tensor<T> Decoder<T>::cross_attention(std::size_t l, const Tensor<T>& s,
                                      const Tensor<T>& source, const Mask* source_mask,
                                      ForwardContext& ctx,
                                      std::vector<Tensor<T>>* weights) const {
  const auto& layer = layers_.at(l);
  return cross_attend(layer, s, matmul(source, layer.cross.wk), matmul(source, layer.cross.wv),
                      source_mask, ctx, weights);
}

template <typename T>
void Decoder<T>::check_memory(const DecoderMemory<T>& memory) const {
  if (!memory.empty() && memory.layers.size() != layers_.size()) {
    throw ContractError("decoder memory has " + std::to_string(memory.layers.size()) +
                        " layers, decoder has " + std::to_string(layers_.size()));
  }
}

template <typename T>
DecoderResult<T> Decoder<T>::decode_teacher_forced(std::span<const TokenId> inputs,
                                                   const Tensor<T>& source,
                                                   const DecoderMemory<T>& memory,
                                                   ForwardContext& ctx,
                                                   const Mask* source_mask) const {
  if (inputs.empty()) throw ContractError("decoder input is empty");
  check_memory(memory);
  DecoderResult<T> out;
  Tensor<T> x = apply_dropout(numerics::embedding(embed_, inputs), config_.dropout, ctx);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    out.layer_inputs.push_back(x);
    const Tensor<T> mem = memory.empty() ? Tensor<T>() : memory.layers[l];
    x = residual_norm(x, rel_self_attention(l, x, mem, ctx), layer.ln1, ln_eps_,
                      config_.dropout, ctx);
    x = residual_norm(x, cross_attention(l, x, source, source_mask, ctx), layer.ln2, ln_eps_,
                      config_.dropout, ctx);
    x = residual_norm(x, feed_forward(x, layer.ffn, config_.dropout, ctx), layer.ln3, ln_eps_,
                      config_.dropout, ctx);
  }
  out.logits = output_logits(x);
  return out;
}

template <typename T>
Tensor<T> Decoder<T>::output_logits(const Tensor<T>& states) const {
  return matmul_nt(states, embed_);
}

template <typename T>
DecoderMemory<T> Decoder<T>::advance_memory(const DecoderMemory<T>& memory,
                                            const std::vector<Tensor<T>>& layer_inputs,
                                            std::size_t span) const {
  check_memory(memory);
  if (span == 0) return {};
  if (layer_inputs.size() != layers_.size()) {
    throw ContractError("advance_memory: expected " + std::to_string(layers_.size()) +
                        " layer inputs, got " + std::to_string(layer_inputs.size()));
  }
  DecoderMemory<T> next;
  const std::size_t keep =
      std::min(memory.sentence_lengths.size(), span - 1);
  const std::size_t drop = memory.sentence_lengths.size() - keep;
  std::size_t first_row = 0;
  for (std::size_t s = 0; s < drop; ++s) first_row += memory.sentence_lengths[s];
  next.sentence_lengths.assign(memory.sentence_lengths.begin() + drop,
                               memory.sentence_lengths.end());
  next.sentence_lengths.push_back(layer_inputs.front().rows());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Tensor<T> current = layer_inputs[l].detach();
    if (keep == 0) {
      next.layers.push_back(current);
    } else {
      const auto& old = memory.layers[l];
      const Tensor<T> parts[] = {slice_rows(old, first_row, old.rows()).detach(), current};
      next.layers.push_back(concat_rows<T>(parts).detach());
    }
  }
  return next;
}

template <typename T>
typename Decoder<T>::SourceCache Decoder<T>::prepare_source(const Tensor<T>& source) const {
  SourceCache cache;
  for (const auto& layer : layers_) {
    cache.keys.push_back(matmul(source, layer.cross.wk));
    cache.values.push_back(matmul(source, layer.cross.wv));
  }
  return cache;
}

template <typename T>
typename Decoder<T>::StepState Decoder<T>::start(const DecoderMemory<T>& memory) const {
  check_memory(memory);
  StepState state;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (memory.empty() || memory.rows() == 0) {
      state.keys.emplace_back();
      state.values.emplace_back();
    } else {
      state.keys.push_back(matmul(memory.layers[l], layers_[l].self.wk));
      state.values.push_back(matmul(memory.layers[l], layers_[l].self.wv));
    }
    state.inputs.emplace_back();
  }
  return state;
}

template <typename T>
Tensor<T> Decoder<T>::step(StepState& state, TokenId token, const SourceCache& source) const {
  ForwardContext eval;
  const TokenId ids[] = {token};
  Tensor<T> x = numerics::embedding(embed_, std::span<const TokenId>(ids));
  auto append = [](const Tensor<T>& rows, const Tensor<T>& row) {
    if (!rows.defined()) return row;
    const Tensor<T> parts[] = {rows, row};
    return concat_rows<T>(parts);
  };
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    state.inputs[l] = append(state.inputs[l], x);
    state.keys[l] = append(state.keys[l], matmul(x, layer.self.wk));
    state.values[l] = append(state.values[l], matmul(x, layer.self.wv));
    const std::size_t offset = state.keys[l].rows() - 1;
    auto a = rel_attend(layer, matmul(x, layer.self.wq), state.keys[l], state.values[l], offset,
                        eval, nullptr);
    x = residual_norm(x, a, layer.ln1, ln_eps_, 0.0, eval);
    auto c = cross_attend(layer, x, source.keys[l], source.values[l], nullptr, eval, nullptr);
    x = residual_norm(x, c, layer.ln2, ln_eps_, 0.0, eval);
    x = residual_norm(x, feed_forward(x, layer.ffn, 0.0, eval), layer.ln3, ln_eps_, 0.0, eval);
  }
  return output_logits(x);
}

template class Decoder<float>;
template class Decoder<double>;

}  // namespace dnmt::model
