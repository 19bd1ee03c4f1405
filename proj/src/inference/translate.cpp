#include "dnmt/inference/translate.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace dnmt::inference {

using numerics::Tensor;

template <typename T>
std::vector<double> DecoderScorer<T>::advance(State& state, TokenId token) const {
  const auto logits = decoder_.step(state, token, source_);
  const auto lp = numerics::log_softmax(logits);
  return {lp.data().begin(), lp.data().end()};
}

template <typename T>
SentenceTranslation<T> beam_search_sentence(const model::Model<T>& model, const Tensor<T>& h_k,
                                            const model::DecoderMemory<T>& memory,
                                            const BeamOptions& options) {
  numerics::NoGradGuard guard;
  DecoderScorer<T> scorer(model.decoder(), h_k, memory);
  auto best = beam_search(scorer, options);
  SentenceTranslation<T> out;
  out.log_prob = best.log_prob;
  out.finished = best.finished;
  out.tokens = best.tokens;
  if (out.finished) out.tokens.pop_back();
  out.layer_inputs = best.state.inputs;
  return out;
}

template <typename T>
DocumentTranslation<T> translate_document(const model::Model<T>& model,
                                          const corpus::SourceInput& source,
                                          const TranslateOptions& options) {
  if (source.num_sentences() == 0) throw ContractError("cannot translate an empty document");
  numerics::NoGradGuard guard;
  model::ForwardContext ctx;
  const auto encoded = model.encoder().encode_document(source, ctx, options.context_limit);
  const std::size_t span = model.memory_span(options.context_limit);
  DocumentTranslation<T> out;
  model::DecoderMemory<T> memory;
  for (std::size_t k = 0; k < source.num_sentences(); ++k) {
    BeamOptions beam = options.beam;
    if (beam.max_len == 0) beam.max_len = 2 * source.sentence_length(k) + 10;
    auto sent = beam_search_sentence(model, model::sentence_rows(encoded.h, source, k), memory, beam);
    if (k + 1 < source.num_sentences()) {
      memory = model.decoder().advance_memory(memory, sent.layer_inputs, span);
    }
    out.sentences.push_back(std::move(sent));
  }
  return out;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < threads; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);
}

template <typename T>
std::vector<DocumentTranslation<T>> translate_documents(
    const model::Model<T>& model, const std::vector<corpus::SourceInput>& sources,
    const TranslateOptions& options, std::size_t threads) {
  std::vector<DocumentTranslation<T>> out(sources.size());
  parallel_for(sources.size(), threads,
               [&](std::size_t i) { out[i] = translate_document(model, sources[i], options); });
  return out;
}

template <typename T>
double rescore_sentence(const model::Model<T>& model, const Tensor<T>& h_k,
                        const model::DecoderMemory<T>& memory, const std::vector<TokenId>& tokens,
                        bool with_eos) {
  numerics::NoGradGuard guard;
  model::ForwardContext ctx;
  std::vector<TokenId> inputs{corpus::kBosId};
  inputs.insert(inputs.end(), tokens.begin(), tokens.end());
  std::vector<TokenId> next(tokens);
  if (with_eos) {
    next.push_back(corpus::kEosId);
  } else {
    inputs.pop_back();
  }
  if (next.empty()) return 0.0;
  const auto r = model.decoder().decode_teacher_forced(inputs, h_k, memory, ctx);
  const auto lp = numerics::log_softmax(r.logits);
  double total = 0;
  for (std::size_t t = 0; t < next.size(); ++t) {
    total += static_cast<double>(lp.at(t, static_cast<std::size_t>(next[t])));
  }
  return total;
}

#define DNMT_INSTANTIATE(T)                                                                   \
  template class DecoderScorer<T>;                                                            \
  template SentenceTranslation<T> beam_search_sentence(const model::Model<T>&,                \
                                                       const Tensor<T>&,                      \
                                                       const model::DecoderMemory<T>&,        \
                                                       const BeamOptions&);                   \
  template DocumentTranslation<T> translate_document(const model::Model<T>&,                  \
                                                     const corpus::SourceInput&,              \
                                                     const TranslateOptions&);                \
  template std::vector<DocumentTranslation<T>> translate_documents(                           \
      const model::Model<T>&, const std::vector<corpus::SourceInput>&,                        \
      const TranslateOptions&, std::size_t);                                                  \
  template double rescore_sentence(const model::Model<T>&, const Tensor<T>&,                  \
                                   const model::DecoderMemory<T>&,                            \
                                   const std::vector<TokenId>&, bool);

DNMT_INSTANTIATE(float)
DNMT_INSTANTIATE(double)

}  // namespace dnmt::inference
