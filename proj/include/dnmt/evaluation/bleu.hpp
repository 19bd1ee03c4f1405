#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "dnmt/corpus/document.hpp"

namespace dnmt::evaluation {

using corpus::Document;
using corpus::Sentence;

struct BleuResult {
  double score = 0;                  // 0..100
  std::vector<std::size_t> matches;  // clipped n-gram matches, n = 1..max_n
  std::vector<std::size_t> totals;   // hypothesis n-grams, n = 1..max_n
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;
  double brevity_penalty = 0;

  double precision(std::size_t n) const;  // n is 1-based
};

// Corpus BLEU over aligned sentence pairs with one reference each. Without
// smoothing, any zero precision makes the score 0. With smoothing, orders
// n >= 2 add one to both matches and totals. Throws ContractError when the
// counts differ or a reference is empty.
BleuResult corpus_bleu(const std::vector<Sentence>& hypotheses,
                       const std::vector<Sentence>& references, std::size_t max_n = 4,
                       bool smooth = false);

// Corpus BLEU over documents, each document's sentences concatenated into a
// single token sequence.
BleuResult doc_bleu(const std::vector<Document>& hypotheses,
                    const std::vector<Document>& references, std::size_t max_n = 4,
                    bool smooth = false);

// Sentence-aligned corpus BLEU over every sentence of the documents.
BleuResult sentence_bleu_of_documents(const std::vector<Document>& hypotheses,
                                      const std::vector<Document>& references,
                                      std::size_t max_n = 4, bool smooth = false);

}  // namespace dnmt::evaluation
