#pragma once

#include <cstdint>
#include <vector>

#include "dnmt/corpus/document.hpp"
#include "dnmt/corpus/vocabulary.hpp"

namespace dnmt::corpus {

// Flattened, unpadded source document as consumed by the encoder. Word
// positions restart at 0 in every sentence; segment k tags every token of
// sentence k.
struct SourceInput {
  std::vector<TokenId> tokens;
  std::vector<std::int32_t> positions;
  std::vector<std::int32_t> segments;
  std::vector<std::size_t> sentence_offsets;  // size = num_sentences + 1

  std::size_t num_sentences() const {
    return sentence_offsets.empty() ? 0 : sentence_offsets.size() - 1;
  }
  std::size_t num_tokens() const { return tokens.size(); }
  std::size_t sentence_length(std::size_t k) const {
    return sentence_offsets[k + 1] - sentence_offsets[k];
  }

  static SourceInput from_sentences(const std::vector<std::vector<TokenId>>& sentences);
};

// One document of a batch, padded to rectangular [sentences x width] grids.
struct BatchDocument {
  std::size_t num_sentences = 0;

  std::size_t src_width = 0;
  std::vector<TokenId> src_tokens;
  std::vector<std::int32_t> src_positions;
  std::vector<std::int32_t> src_segments;
  std::vector<std::uint8_t> src_pad;  // 1 exactly on padding
  std::vector<std::size_t> src_lengths;

  // Target sentences as bos y_1 .. y_T eos.
  std::size_t tgt_width = 0;
  std::vector<TokenId> tgt_tokens;
  std::vector<std::uint8_t> tgt_pad;
  std::vector<std::size_t> tgt_lengths;

  SourceInput source_input() const;
  // Unpadded bos..eos target sentences.
  std::vector<std::vector<TokenId>> target_sentences() const;
  std::size_t source_token_count() const;
  std::size_t target_token_count() const;  // excludes bos (predicted tokens)
};

struct Batch {
  std::vector<BatchDocument> documents;
  std::size_t source_tokens = 0;
  std::size_t target_tokens = 0;
};

struct BatchOptions {
  std::size_t token_budget = 2048;       // per side
  std::size_t max_sentence_len = 200;    // tokens, excluding bos/eos
};

BatchDocument make_batch_document(const DocumentPair& pair, const Vocabulary& src_vocab,
                                  const Vocabulary& tgt_vocab, std::size_t max_sentence_len);

// All pairs in a single batch, ignoring the token budget.
Batch make_batch(const std::vector<DocumentPair>& pairs, const Vocabulary& src_vocab,
                 const Vocabulary& tgt_vocab, std::size_t max_sentence_len = 200);

// Greedy in-order packing of whole documents: a document joins the current
// batch while both token sides stay within budget. A document larger than
// the budget forms a batch by itself. Throws ContractError naming any
// sentence longer than max_sentence_len.
std::vector<Batch> make_batches(const std::vector<DocumentPair>& pairs,
                                const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                                const BatchOptions& options);

}  // namespace dnmt::corpus
