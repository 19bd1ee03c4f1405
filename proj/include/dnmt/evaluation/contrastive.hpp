#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dnmt/corpus/document.hpp"
#include "dnmt/corpus/synthetic.hpp"
#include "dnmt/corpus/vocabulary.hpp"
#include "dnmt/model/model.hpp"

namespace dnmt::evaluation {

using corpus::Document;
using corpus::TokenId;

struct ContrastiveGroup {
  Document source;
  Document positive;
  std::vector<Document> negatives;
};

// Suite file: JSON list of {source: [sentences], positive: [sentences],
// negatives: [[sentences]]}, each sentence a whitespace-tokenized string.
std::vector<ContrastiveGroup> parse_contrastive_suite(const std::string& json_text,
                                                      const std::string& origin = "suite");
std::vector<ContrastiveGroup> read_contrastive_suite(const std::filesystem::path& path);
std::string format_contrastive_suite(const std::vector<ContrastiveGroup>& groups);

// One group per synthetic document holding ambiguous tokens; the single
// negative swaps every ambiguous translation to the other topic.
std::vector<ContrastiveGroup> make_topic_flip_suite(const corpus::SyntheticTask& task);

struct ContrastiveResult {
  double accuracy = 0;
  std::size_t correct = 0;
  std::size_t total = 0;
  // Per group: score of the positive followed by the negatives.
  std::vector<std::vector<double>> scores;
};

using DocumentScorer = std::function<double(const Document& source, const Document& candidate)>;

// A group counts as correct only when the positive scores strictly higher
// than every negative.
ContrastiveResult contrastive_accuracy(const std::vector<ContrastiveGroup>& groups,
                                       const DocumentScorer& scorer, std::size_t threads = 1);

// Document log-probability under teacher forcing with memory chaining and
// no label smoothing.
template <typename T>
double document_log_prob(const model::Model<T>& model, const corpus::Vocabulary& src_vocab,
                         const corpus::Vocabulary& tgt_vocab, const Document& source,
                         const Document& target,
                         std::optional<std::size_t> context_limit = std::nullopt);

template <typename T>
ContrastiveResult contrastive_score(const model::Model<T>& model,
                                    const corpus::Vocabulary& src_vocab,
                                    const corpus::Vocabulary& tgt_vocab,
                                    const std::vector<ContrastiveGroup>& groups,
                                    std::size_t threads = 1);

}  // namespace dnmt::evaluation
