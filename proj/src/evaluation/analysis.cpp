#include "dnmt/evaluation/analysis.hpp"

#include <cstdio>
#include <sstream>

#include "json.hpp"

#include "dnmt/error.hpp"
#include "dnmt/evaluation/bleu.hpp"

namespace dnmt::evaluation {

corpus::SourceInput encode_source(const corpus::Vocabulary& vocab, const Document& doc) {
  std::vector<std::vector<TokenId>> ids;
  for (const auto& s : doc.sentences) ids.push_back(vocab.encode(s));
  return corpus::SourceInput::from_sentences(ids);
}

template <typename T>
AttentionSummary attention_summary(const model::Model<T>& model,
                                   const corpus::SourceInput& source) {
  const std::size_t n = source.num_sentences();
  if (n < 2) {
    throw ContractError("attention summary needs a document of at least two sentences; "
                        "single sentences bypass the global layer");
  }
  if (!model.config().encoder.global_layer) {
    throw ContractError("attention summary needs the global encoder layer");
  }
  numerics::NoGradGuard guard;
  model::ForwardContext ctx;
  const auto out = model.encoder().encode_document(source, ctx);
  if (out.alpha.empty()) throw ContractError("encoder produced no global attention weights");

  std::vector<std::size_t> sent_of(source.num_tokens());
  for (std::size_t k = 0; k < n; ++k) {
    for (auto t = source.sentence_offsets[k]; t < source.sentence_offsets[k + 1]; ++t) sent_of[t] = k;
  }
  AttentionSummary s;
  for (std::size_t k = 0; k < n; ++k) s.sentence_lengths.push_back(source.sentence_length(k));
  s.matrix.assign(n, std::vector<double>(n, 0.0));
  for (const auto& alpha : out.alpha) {
    std::vector<std::vector<double>> head(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < source.num_tokens(); ++i) {
      for (std::size_t j = 0; j < source.num_tokens(); ++j) {
        head[sent_of[i]][sent_of[j]] += static_cast<double>(alpha.at(i, j));
      }
    }
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t c = 0; c < n; ++c) {
        head[k][c] /= static_cast<double>(s.sentence_lengths[k]);
        s.matrix[k][c] += head[k][c] / static_cast<double>(out.alpha.size());
      }
    }
    s.per_head.push_back(std::move(head));
  }
  return s;
}

std::string attention_csv(const AttentionSummary& summary) {
  std::ostringstream out;
  const std::size_t n = summary.matrix.size();
  out << "sentence";
  for (std::size_t c = 0; c < n; ++c) out << ',' << c;
  out << '\n';
  char buf[32];
  for (std::size_t k = 0; k < n; ++k) {
    out << k;
    for (std::size_t c = 0; c < n; ++c) {
      std::snprintf(buf, sizeof buf, "%.9g", summary.matrix[k][c]);
      out << ',' << buf;
    }
    out << '\n';
  }
  return out.str();
}

std::string attention_json(const AttentionSummary& summary, std::size_t document_index,
                           const Document& source) {
  nlohmann::json j;
  j["document"] = document_index;
  j["num_sentences"] = summary.matrix.size();
  j["sentence_lengths"] = summary.sentence_lengths;
  nlohmann::json sents = nlohmann::json::array();
  for (const auto& s : source.sentences) sents.push_back(corpus::join_tokens(s));
  j["source"] = sents;
  j["heads"] = summary.per_head.size();
  j["rows"] = "querying sentence";
  j["columns"] = "attended sentence";
  return j.dump(2) + "\n";
}

double ambiguous_token_accuracy(const std::vector<Document>& hypotheses,
                                const std::vector<corpus::AmbiguousSite>& sites) {
  if (sites.empty()) throw ContractError("no ambiguous sites to score");
  std::size_t correct = 0;
  for (const auto& site : sites) {
    if (site.doc >= hypotheses.size()) {
      throw ContractError("ambiguous site refers to document " + std::to_string(site.doc) +
                          " but only " + std::to_string(hypotheses.size()) + " were translated");
    }
    const auto& doc = hypotheses[site.doc];
    if (site.sentence >= doc.size()) continue;
    const auto& sent = doc.sentences[site.sentence];
    if (site.position < sent.size() && sent[site.position] == site.expected) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(sites.size());
}

template <typename T>
std::vector<Document> translate_corpus(const model::Model<T>& model,
                                       const corpus::Vocabulary& src_vocab,
                                       const corpus::Vocabulary& tgt_vocab,
                                       const std::vector<Document>& sources,
                                       const inference::TranslateOptions& options,
                                       std::size_t threads) {
  std::vector<corpus::SourceInput> inputs;
  for (const auto& d : sources) inputs.push_back(encode_source(src_vocab, d));
  const auto out = inference::translate_documents(model, inputs, options, threads);
  std::vector<Document> docs;
  for (const auto& t : out) {
    Document d;
    for (const auto& s : t.sentences) {
      std::vector<TokenId> ids(s.tokens);
      d.sentences.push_back(tgt_vocab.decode(ids));
    }
    docs.push_back(std::move(d));
  }
  return docs;
}

template <typename T>
std::vector<AblationRow> context_ablation(const model::Model<T>& model,
                                          const corpus::Vocabulary& src_vocab,
                                          const corpus::Vocabulary& tgt_vocab,
                                          const std::vector<corpus::DocumentPair>& pairs,
                                          const std::vector<corpus::AmbiguousSite>& sites,
                                          const std::vector<std::optional<std::size_t>>& contexts,
                                          const AblationOptions& options) {
  std::vector<Document> sources, references;
  for (const auto& p : pairs) {
    sources.push_back(p.source);
    references.push_back(p.target);
  }
  std::vector<AblationRow> rows;
  for (const auto& c : contexts) {
    inference::TranslateOptions topts;
    topts.beam = options.beam;
    topts.context_limit = c;
    const auto hyps = translate_corpus(model, src_vocab, tgt_vocab, sources, topts, options.threads);
    AblationRow row;
    row.context = c;
    row.bleu = sentence_bleu_of_documents(hyps, references).score;
    row.ambiguous_token_accuracy = sites.empty() ? 0.0 : ambiguous_token_accuracy(hyps, sites);
    rows.push_back(row);
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "context_size,bleu,ambiguous_token_accuracy\n";
  char buf[64];
  for (const auto& r : rows) {
    out << (r.context ? std::to_string(*r.context) : std::string("full"));
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f\n", r.bleu, r.ambiguous_token_accuracy);
    out << buf;
  }
  return out.str();
}

#define DNMT_INSTANTIATE(T)                                                                   \
  template AttentionSummary attention_summary(const model::Model<T>&,                         \
                                              const corpus::SourceInput&);                    \
  template std::vector<Document> translate_corpus(                                            \
      const model::Model<T>&, const corpus::Vocabulary&, const corpus::Vocabulary&,           \
      const std::vector<Document>&, const inference::TranslateOptions&, std::size_t);         \
  template std::vector<AblationRow> context_ablation(                                         \
      const model::Model<T>&, const corpus::Vocabulary&, const corpus::Vocabulary&,           \
      const std::vector<corpus::DocumentPair>&, const std::vector<corpus::AmbiguousSite>&,    \
      const std::vector<std::optional<std::size_t>>&, const AblationOptions&);

DNMT_INSTANTIATE(float)
DNMT_INSTANTIATE(double)

}  // namespace dnmt::evaluation
