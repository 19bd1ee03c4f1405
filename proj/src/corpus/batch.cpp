#include "dnmt/corpus/batch.hpp"

#include <algorithm>

#include "dnmt/error.hpp"

namespace dnmt::corpus {

SourceInput SourceInput::from_sentences(const std::vector<std::vector<TokenId>>& sentences) {
  SourceInput in;
  in.sentence_offsets.push_back(0);
  for (std::size_t k = 0; k < sentences.size(); ++k) {
    if (sentences[k].empty()) {
      throw ContractError("source sentence " + std::to_string(k) + " is empty");
    }
    for (std::size_t i = 0; i < sentences[k].size(); ++i) {
      in.tokens.push_back(sentences[k][i]);
      in.positions.push_back(static_cast<std::int32_t>(i));
      in.segments.push_back(static_cast<std::int32_t>(k));
    }
    in.sentence_offsets.push_back(in.tokens.size());
  }
  return in;
}

BatchDocument make_batch_document(const DocumentPair& pair, const Vocabulary& src_vocab,
                                  const Vocabulary& tgt_vocab, std::size_t max_sentence_len) {
  if (pair.source.size() != pair.target.size()) {
    throw ContractError("document is not sentence-aligned");
  }
  if (pair.source.size() == 0) throw ContractError("document has no sentences");
  BatchDocument doc;
  doc.num_sentences = pair.source.size();
  for (std::size_t k = 0; k < doc.num_sentences; ++k) {
    const auto& src = pair.source.sentences[k];
    const auto& tgt = pair.target.sentences[k];
    if (src.size() > max_sentence_len || tgt.size() > max_sentence_len) {
      const auto& longer = src.size() > max_sentence_len ? src : tgt;
      throw ContractError("sentence " + std::to_string(k) + " (" +
                          join_tokens(longer).substr(0, 60) + ") has " +
                          std::to_string(longer.size()) + " tokens, above the limit of " +
                          std::to_string(max_sentence_len));
    }
    if (src.empty() || tgt.empty()) {
      throw ContractError("sentence " + std::to_string(k) + " is empty");
    }
    doc.src_lengths.push_back(src.size());
    doc.tgt_lengths.push_back(tgt.size() + 2);
  }
  doc.src_width = *std::max_element(doc.src_lengths.begin(), doc.src_lengths.end());
  doc.tgt_width = *std::max_element(doc.tgt_lengths.begin(), doc.tgt_lengths.end());
  const std::size_t n = doc.num_sentences;
  doc.src_tokens.assign(n * doc.src_width, kPadId);
  doc.src_positions.assign(n * doc.src_width, 0);
  doc.src_segments.assign(n * doc.src_width, 0);
  doc.src_pad.assign(n * doc.src_width, 1);
  doc.tgt_tokens.assign(n * doc.tgt_width, kPadId);
  doc.tgt_pad.assign(n * doc.tgt_width, 1);
  for (std::size_t k = 0; k < n; ++k) {
    const auto src = src_vocab.encode(pair.source.sentences[k]);
    for (std::size_t i = 0; i < src.size(); ++i) {
      const std::size_t at = k * doc.src_width + i;
      doc.src_tokens[at] = src[i];
      doc.src_positions[at] = static_cast<std::int32_t>(i);
      doc.src_segments[at] = static_cast<std::int32_t>(k);
      doc.src_pad[at] = 0;
    }
    for (std::size_t i = src.size(); i < doc.src_width; ++i) {
      doc.src_segments[k * doc.src_width + i] = static_cast<std::int32_t>(k);
    }
    auto tgt = tgt_vocab.encode(pair.target.sentences[k]);
    tgt.insert(tgt.begin(), kBosId);
    tgt.push_back(kEosId);
    for (std::size_t i = 0; i < tgt.size(); ++i) {
      doc.tgt_tokens[k * doc.tgt_width + i] = tgt[i];
      doc.tgt_pad[k * doc.tgt_width + i] = 0;
    }
  }
  return doc;
}

SourceInput BatchDocument::source_input() const {
  SourceInput in;
  in.sentence_offsets.push_back(0);
  for (std::size_t k = 0; k < num_sentences; ++k) {
    for (std::size_t i = 0; i < src_width; ++i) {
      const std::size_t at = k * src_width + i;
      if (src_pad[at]) continue;
      in.tokens.push_back(src_tokens[at]);
      in.positions.push_back(src_positions[at]);
      in.segments.push_back(src_segments[at]);
    }
    in.sentence_offsets.push_back(in.tokens.size());
  }
  return in;
}

std::vector<std::vector<TokenId>> BatchDocument::target_sentences() const {
  std::vector<std::vector<TokenId>> out(num_sentences);
  for (std::size_t k = 0; k < num_sentences; ++k) {
    for (std::size_t i = 0; i < tgt_width; ++i) {
      const std::size_t at = k * tgt_width + i;
      if (!tgt_pad[at]) out[k].push_back(tgt_tokens[at]);
    }
  }
  return out;
}

std::size_t BatchDocument::source_token_count() const {
  std::size_t n = 0;
  for (auto l : src_lengths) n += l;
  return n;
}

std::size_t BatchDocument::target_token_count() const {
  std::size_t n = 0;
  for (auto l : tgt_lengths) n += l - 1;
  return n;
}

Batch make_batch(const std::vector<DocumentPair>& pairs, const Vocabulary& src_vocab,
                 const Vocabulary& tgt_vocab, std::size_t max_sentence_len) {
  Batch batch;
  for (const auto& p : pairs) {
    batch.documents.push_back(make_batch_document(p, src_vocab, tgt_vocab, max_sentence_len));
    batch.source_tokens += batch.documents.back().source_token_count();
    batch.target_tokens += batch.documents.back().target_token_count();
  }
  return batch;
}

std::vector<Batch> make_batches(const std::vector<DocumentPair>& pairs,
                                const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                                const BatchOptions& options) {
  std::vector<Batch> batches;
  Batch current;
  for (const auto& p : pairs) {
    auto doc = make_batch_document(p, src_vocab, tgt_vocab, options.max_sentence_len);
    const std::size_t s = doc.source_token_count(), t = doc.target_token_count();
    if (!current.documents.empty() &&
        (current.source_tokens + s > options.token_budget ||
         current.target_tokens + t > options.token_budget)) {
      batches.push_back(std::move(current));
      current = {};
    }
    current.documents.push_back(std::move(doc));
    current.source_tokens += s;
    current.target_tokens += t;
  }
  if (!current.documents.empty()) batches.push_back(std::move(current));
  return batches;
}

}  // namespace dnmt::corpus
