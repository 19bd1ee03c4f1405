#include "dnmt/evaluation/bleu.hpp"

#include <cmath>
#include <map>
#include <string>

#include "dnmt/error.hpp"

namespace dnmt::evaluation {
namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const Sentence& s, std::size_t n) {
  NgramCounts counts;
  if (s.size() < n) return counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    ++counts[std::vector<std::string>(s.begin() + static_cast<std::ptrdiff_t>(i),
                                      s.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

}  // namespace

double BleuResult::precision(std::size_t n) const {
  if (n == 0 || n > totals.size()) throw ContractError("BLEU order out of range");
  return totals[n - 1] == 0 ? 0.0
                            : static_cast<double>(matches[n - 1]) /
                                  static_cast<double>(totals[n - 1]);
}

BleuResult corpus_bleu(const std::vector<Sentence>& hypotheses,
                       const std::vector<Sentence>& references, std::size_t max_n, bool smooth) {
  if (hypotheses.size() != references.size()) {
    throw ContractError("BLEU needs as many hypotheses as references (" +
                        std::to_string(hypotheses.size()) + " vs " +
                        std::to_string(references.size()) + ")");
  }
  if (max_n == 0) throw ContractError("BLEU max_n must be positive");
  BleuResult r;
  r.matches.assign(max_n, 0);
  r.totals.assign(max_n, 0);
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto& hyp = hypotheses[i];
    const auto& ref = references[i];
    if (ref.empty()) throw ContractError("empty reference at index " + std::to_string(i));
    r.hyp_length += hyp.size();
    r.ref_length += ref.size();
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto h = count_ngrams(hyp, n);
      const auto g = count_ngrams(ref, n);
      for (const auto& [gram, c] : h) {
        auto it = g.find(gram);
        if (it != g.end()) r.matches[n - 1] += std::min(c, it->second);
        r.totals[n - 1] += c;
      }
    }
  }
  if (r.hyp_length == 0) return r;
  r.brevity_penalty =
      r.hyp_length >= r.ref_length
          ? 1.0
          : std::exp(1.0 - static_cast<double>(r.ref_length) / static_cast<double>(r.hyp_length));

  double log_sum = 0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    double m = static_cast<double>(r.matches[n - 1]);
    double t = static_cast<double>(r.totals[n - 1]);
    if (smooth && n >= 2) {
      m += 1;
      t += 1;
    }
    if (m == 0 || t == 0) return r;
    log_sum += std::log(m / t);
  }
  r.score = 100.0 * r.brevity_penalty * std::exp(log_sum / static_cast<double>(max_n));
  return r;
}

BleuResult doc_bleu(const std::vector<Document>& hypotheses,
                    const std::vector<Document>& references, std::size_t max_n, bool smooth) {
  if (hypotheses.size() != references.size()) {
    throw ContractError("doc_bleu needs as many hypothesis documents as references");
  }
  auto flatten = [](const Document& d) {
    Sentence out;
    for (const auto& s : d.sentences) out.insert(out.end(), s.begin(), s.end());
    return out;
  };
  std::vector<Sentence> hyp, ref;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    hyp.push_back(flatten(hypotheses[i]));
    ref.push_back(flatten(references[i]));
  }
  return corpus_bleu(hyp, ref, max_n, smooth);
}

BleuResult sentence_bleu_of_documents(const std::vector<Document>& hypotheses,
                                      const std::vector<Document>& references, std::size_t max_n,
                                      bool smooth) {
  if (hypotheses.size() != references.size()) {
    throw ContractError("BLEU needs as many hypothesis documents as references");
  }
  std::vector<Sentence> hyp, ref;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    if (hypotheses[i].size() != references[i].size()) {
      throw ContractError("document " + std::to_string(i) + " has " +
                          std::to_string(hypotheses[i].size()) + " hypothesis sentences and " +
                          std::to_string(references[i].size()) + " reference sentences");
    }
    hyp.insert(hyp.end(), hypotheses[i].sentences.begin(), hypotheses[i].sentences.end());
    ref.insert(ref.end(), references[i].sentences.begin(), references[i].sentences.end());
  }
  return corpus_bleu(hyp, ref, max_n, smooth);
}

}  // namespace dnmt::evaluation
