#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "dnmt/corpus/batch.hpp"
#include "dnmt/inference/beam_search.hpp"
#include "dnmt/model/model.hpp"

namespace dnmt::inference {

// Incremental scorer over the memory decoder for one source sentence.
template <typename T>
class DecoderScorer {
 public:
  using State = typename model::Decoder<T>::StepState;

  DecoderScorer(const model::Decoder<T>& decoder, const numerics::Tensor<T>& source,
                const model::DecoderMemory<T>& memory)
      : decoder_(decoder), source_(decoder.prepare_source(source)), memory_(memory) {}

  State start() const { return decoder_.start(memory_); }
  std::vector<double> advance(State& state, TokenId token) const;

 private:
  const model::Decoder<T>& decoder_;
  typename model::Decoder<T>::SourceCache source_;
  const model::DecoderMemory<T>& memory_;
};

template <typename T>
struct SentenceTranslation {
  std::vector<TokenId> tokens;  // without bos and eos
  double log_prob = 0;          // sum over generated tokens, eos included when finished
  bool finished = false;
  std::vector<numerics::Tensor<T>> layer_inputs;  // decoder inputs of [bos, tokens...]
};

// Beam search for one sentence given its encoder states and the memory
// built from earlier sentences.
template <typename T>
SentenceTranslation<T> beam_search_sentence(const model::Model<T>& model,
                                            const numerics::Tensor<T>& h_k,
                                            const model::DecoderMemory<T>& memory,
                                            const BeamOptions& options);

struct TranslateOptions {
  BeamOptions beam;
  std::optional<std::size_t> context_limit;  // nullopt = full context
};

template <typename T>
struct DocumentTranslation {
  std::vector<SentenceTranslation<T>> sentences;
};

// Encodes the document once and translates its sentences in order. Memory
// for sentence k comes from the emitted translations of the sentences
// before it. BeamOptions::max_len == 0 gives each sentence 2 * |x_k| + 10.
template <typename T>
DocumentTranslation<T> translate_document(const model::Model<T>& model,
                                          const corpus::SourceInput& source,
                                          const TranslateOptions& options);

// Translates documents in parallel on `threads` workers; results keep the
// input order and do not depend on the thread count.
template <typename T>
std::vector<DocumentTranslation<T>> translate_documents(
    const model::Model<T>& model, const std::vector<corpus::SourceInput>& sources,
    const TranslateOptions& options, std::size_t threads = 1);

// Log-probability of `tokens` followed by eos under teacher forcing.
template <typename T>
double rescore_sentence(const model::Model<T>& model, const numerics::Tensor<T>& h_k,
                        const model::DecoderMemory<T>& memory,
                        const std::vector<TokenId>& tokens, bool with_eos = true);

// Runs `fn(i)` for i in [0, n) on up to `threads` worker threads.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace dnmt::inference
