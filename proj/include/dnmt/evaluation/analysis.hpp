#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dnmt/corpus/document.hpp"
#include "dnmt/corpus/synthetic.hpp"
#include "dnmt/corpus/vocabulary.hpp"
#include "dnmt/inference/translate.hpp"
#include "dnmt/model/model.hpp"

namespace dnmt::evaluation {

using corpus::Document;
using corpus::TokenId;

// Sentence-to-sentence weights of the global encoder layer:
//   A[k][kappa] = 1/|x_k| * sum_{i in k} sum_{j in kappa} alpha_ij,
// averaged over heads. Rows are querying sentences.
struct AttentionSummary {
  std::vector<std::size_t> sentence_lengths;
  std::vector<std::vector<double>> matrix;
  std::vector<std::vector<std::vector<double>>> per_head;
};

// Throws ContractError when the document has fewer than two sentences or
// the model has no global layer, since no attention weights exist then.
template <typename T>
AttentionSummary attention_summary(const model::Model<T>& model,
                                   const corpus::SourceInput& source);

// CSV with a header row and column of sentence indices.
std::string attention_csv(const AttentionSummary& summary);
// JSON sidecar: document index, sentence lengths and source sentences.
std::string attention_json(const AttentionSummary& summary, std::size_t document_index,
                           const Document& source);

// Fraction of ambiguous sites whose expected translation appears at the
// site position of the hypothesis sentence.
double ambiguous_token_accuracy(const std::vector<Document>& hypotheses,
                                const std::vector<corpus::AmbiguousSite>& sites);

struct AblationRow {
  std::optional<std::size_t> context;  // nullopt = full context
  double bleu = 0;
  double ambiguous_token_accuracy = 0;
};

struct AblationOptions {
  inference::BeamOptions beam;
  std::size_t threads = 1;
};

// Translates `pairs` once per context size and scores every run.
template <typename T>
std::vector<AblationRow> context_ablation(const model::Model<T>& model,
                                          const corpus::Vocabulary& src_vocab,
                                          const corpus::Vocabulary& tgt_vocab,
                                          const std::vector<corpus::DocumentPair>& pairs,
                                          const std::vector<corpus::AmbiguousSite>& sites,
                                          const std::vector<std::optional<std::size_t>>& contexts,
                                          const AblationOptions& options = {});

// Columns: context_size, bleu, ambiguous_token_accuracy. Full context is
// written as "full".
std::string ablation_csv(const std::vector<AblationRow>& rows);

// Translation of whole source documents to token documents.
template <typename T>
std::vector<Document> translate_corpus(const model::Model<T>& model,
                                       const corpus::Vocabulary& src_vocab,
                                       const corpus::Vocabulary& tgt_vocab,
                                       const std::vector<Document>& sources,
                                       const inference::TranslateOptions& options,
                                       std::size_t threads = 1);

corpus::SourceInput encode_source(const corpus::Vocabulary& vocab, const Document& doc);

}  // namespace dnmt::evaluation
