#include "dnmt/training/loss.hpp"

#include "dnmt/corpus/vocabulary.hpp"
#include "dnmt/error.hpp"

namespace dnmt::training {

using namespace numerics;

namespace {

template <typename T>
Tensor<T> sentence_loss(const Tensor<T>& logits, const std::vector<TokenId>& target,
                        double epsilon) {
  std::span<const TokenId> next(target.data() + 1, target.size() - 1);
  return label_smoothed_nll(logits, next, static_cast<T>(epsilon), corpus::kPadId,
                            Reduction::kSum);
}

void check_target(const std::vector<TokenId>& target, std::size_t k) {
  if (target.size() < 2 || target.front() != corpus::kBosId) {
    throw ContractError("target sentence " + std::to_string(k) +
                        " must start with bos and hold at least one more token");
  }
}

}  // namespace

template <typename T>
DocLoss<T> doc_nll_loss(const Model<T>& model, const corpus::SourceInput& source,
                        const std::vector<std::vector<TokenId>>& targets, double epsilon,
                        ForwardContext& ctx, std::optional<std::size_t> context_limit) {
  if (targets.size() != source.num_sentences()) {
    throw ContractError("document has " + std::to_string(source.num_sentences()) +
                        " source sentences and " + std::to_string(targets.size()) +
                        " target sentences");
  }
  const auto encoded = model.encoder().encode_document(source, ctx, context_limit);
  const auto& decoder = model.decoder();
  const std::size_t span = model.memory_span(context_limit);
  model::DecoderMemory<T> memory;
  DocLoss<T> out;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    check_target(targets[k], k);
    const auto h_k = model::sentence_rows(encoded.h, source, k);
    std::span<const TokenId> inputs(targets[k].data(), targets[k].size() - 1);
    auto result = decoder.decode_teacher_forced(inputs, h_k, memory, ctx);
    auto loss = sentence_loss(result.logits, targets[k], epsilon);
    out.total = out.total.defined() ? add(out.total, loss) : loss;
    out.tokens += targets[k].size() - 1;
    if (k + 1 < targets.size()) memory = decoder.advance_memory(memory, result.layer_inputs, span);
  }
  return out;
}

template <typename T>
DocLoss<T> doc_nll_loss(const Model<T>& model, const corpus::BatchDocument& doc,
                        double epsilon, ForwardContext& ctx,
                        std::optional<std::size_t> context_limit) {
  return doc_nll_loss(model, doc.source_input(), doc.target_sentences(), epsilon, ctx,
                      context_limit);
}

template <typename T>
DocLoss<T> sentence_nll_loss(const Model<T>& model, const std::vector<TokenId>& source,
                             const std::vector<TokenId>& target, double epsilon,
                             ForwardContext& ctx) {
  check_target(target, 0);
  const auto input = corpus::SourceInput::from_sentences({source});
  const auto& enc = model.encoder();
  const auto h = enc.local_encode(enc.embed_source(input), input, ctx);
  std::span<const TokenId> inputs(target.data(), target.size() - 1);
  auto result = model.decoder().decode_teacher_forced(inputs, h, {}, ctx);
  return {sentence_loss(result.logits, target, epsilon), target.size() - 1};
}

#define DNMT_INSTANTIATE(T)                                                                   \
  template DocLoss<T> doc_nll_loss(const Model<T>&, const corpus::SourceInput&,               \
                                   const std::vector<std::vector<TokenId>>&, double,          \
                                   ForwardContext&, std::optional<std::size_t>);              \
  template DocLoss<T> doc_nll_loss(const Model<T>&, const corpus::BatchDocument&, double,     \
                                   ForwardContext&, std::optional<std::size_t>);              \
  template DocLoss<T> sentence_nll_loss(const Model<T>&, const std::vector<TokenId>&,         \
                                        const std::vector<TokenId>&, double, ForwardContext&);

DNMT_INSTANTIATE(float)
DNMT_INSTANTIATE(double)

}  // namespace dnmt::training
