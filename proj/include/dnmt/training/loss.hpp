#pragma once

#include <optional>
#include <vector>

#include "dnmt/corpus/batch.hpp"
#include "dnmt/model/model.hpp"

namespace dnmt::training {

using model::ForwardContext;
using model::Model;
using numerics::Tensor;
using numerics::TokenId;

template <typename T>
struct DocLoss {
  Tensor<T> total;          // summed over predicted tokens
  std::size_t tokens = 0;   // predicted (non-pad) target tokens
};

// Document negative log-likelihood: the source is encoded once, then each
// target sentence (bos .. eos) is teacher-forced with decoder memory carried
// over from the previous sentence. Label smoothing uses `epsilon`.
template <typename T>
DocLoss<T> doc_nll_loss(const Model<T>& model, const corpus::SourceInput& source,
                        const std::vector<std::vector<TokenId>>& targets, double epsilon,
                        ForwardContext& ctx,
                        std::optional<std::size_t> context_limit = std::nullopt);

template <typename T>
DocLoss<T> doc_nll_loss(const Model<T>& model, const corpus::BatchDocument& doc,
                        double epsilon, ForwardContext& ctx,
                        std::optional<std::size_t> context_limit = std::nullopt);

// Plain sentence-level loss: local encoder layers only and a decoder without
// memory. Used as the reference for the single-sentence degenerate case.
template <typename T>
DocLoss<T> sentence_nll_loss(const Model<T>& model, const std::vector<TokenId>& source,
                             const std::vector<TokenId>& target, double epsilon,
                             ForwardContext& ctx);

}  // namespace dnmt::training
