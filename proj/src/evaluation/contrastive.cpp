#include "dnmt/evaluation/contrastive.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

#include "dnmt/error.hpp"
#include "dnmt/inference/translate.hpp"
#include "dnmt/training/loss.hpp"

namespace dnmt::evaluation {

using nlohmann::json;

namespace {

Document parse_doc(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) {
    throw ContractError(where + " must be a non-empty list of sentences");
  }
  std::vector<std::string> lines;
  for (const auto& s : j) {
    if (!s.is_string()) throw ContractError(where + " holds a non-string sentence");
    lines.push_back(s.get<std::string>());
  }
  Document d;
  for (const auto& line : lines) {
    std::istringstream in(line);
    corpus::Sentence sent;
    for (std::string tok; in >> tok;) sent.push_back(tok);
    if (sent.empty()) throw ContractError(where + " holds an empty sentence");
    d.sentences.push_back(std::move(sent));
  }
  return d;
}

json doc_json(const Document& d) {
  json out = json::array();
  for (const auto& s : d.sentences) out.push_back(corpus::join_tokens(s));
  return out;
}

}  // namespace

std::vector<ContrastiveGroup> parse_contrastive_suite(const std::string& json_text,
                                                      const std::string& origin) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ContractError(origin + ": invalid JSON: " + e.what());
  }
  if (!root.is_array()) throw ContractError(origin + ": suite must be a JSON list of groups");
  std::vector<ContrastiveGroup> groups;
  for (std::size_t g = 0; g < root.size(); ++g) {
    const auto& j = root[g];
    const std::string where = origin + ": group " + std::to_string(g);
    if (!j.is_object() || !j.contains("source") || !j.contains("positive") ||
        !j.contains("negatives")) {
      throw ContractError(where + " needs source, positive and negatives");
    }
    ContrastiveGroup group;
    group.source = parse_doc(j["source"], where + " source");
    group.positive = parse_doc(j["positive"], where + " positive");
    if (!j["negatives"].is_array() || j["negatives"].empty()) {
      throw ContractError(where + " needs at least one negative");
    }
    for (const auto& n : j["negatives"]) group.negatives.push_back(parse_doc(n, where + " negative"));
    const auto n = group.source.size();
    if (group.positive.size() != n) throw ContractError(where + ": positive sentence count differs");
    for (const auto& neg : group.negatives) {
      if (neg.size() != n) throw ContractError(where + ": negative sentence count differs");
    }
    groups.push_back(std::move(group));
  }
  return groups;
}

std::vector<ContrastiveGroup> read_contrastive_suite(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open contrastive suite " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_contrastive_suite(ss.str(), path.string());
}

std::string format_contrastive_suite(const std::vector<ContrastiveGroup>& groups) {
  json root = json::array();
  for (const auto& g : groups) {
    json negs = json::array();
    for (const auto& n : g.negatives) negs.push_back(doc_json(n));
    root.push_back({{"source", doc_json(g.source)},
                    {"positive", doc_json(g.positive)},
                    {"negatives", negs}});
  }
  return root.dump(1) + "\n";
}

std::vector<ContrastiveGroup> make_topic_flip_suite(const corpus::SyntheticTask& task) {
  std::vector<std::vector<const corpus::AmbiguousSite*>> by_doc(task.pairs.size());
  for (const auto& site : task.sites) by_doc.at(site.doc).push_back(&site);
  std::vector<ContrastiveGroup> groups;
  for (std::size_t d = 0; d < task.pairs.size(); ++d) {
    if (by_doc[d].empty()) continue;
    ContrastiveGroup g;
    g.source = task.pairs[d].source;
    g.positive = task.pairs[d].target;
    Document neg = g.positive;
    for (const auto* site : by_doc[d]) {
      neg.sentences.at(site->sentence).at(site->position) = site->alternative;
    }
    g.negatives.push_back(std::move(neg));
    groups.push_back(std::move(g));
  }
  return groups;
}

ContrastiveResult contrastive_accuracy(const std::vector<ContrastiveGroup>& groups,
                                       const DocumentScorer& scorer, std::size_t threads) {
  if (groups.empty()) throw ContractError("contrastive suite holds no groups");
  ContrastiveResult r;
  r.total = groups.size();
  r.scores.resize(groups.size());
  inference::parallel_for(groups.size(), threads, [&](std::size_t i) {
    const auto& g = groups[i];
    auto& s = r.scores[i];
    s.push_back(scorer(g.source, g.positive));
    for (const auto& n : g.negatives) s.push_back(scorer(g.source, n));
  });
  for (const auto& s : r.scores) {
    bool best = true;
    for (std::size_t k = 1; k < s.size(); ++k) best = best && s[0] > s[k];
    r.correct += best ? 1 : 0;
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  return r;
}

template <typename T>
double document_log_prob(const model::Model<T>& model, const corpus::Vocabulary& src_vocab,
                         const corpus::Vocabulary& tgt_vocab, const Document& source,
                         const Document& target, std::optional<std::size_t> context_limit) {
  if (source.size() != target.size()) {
    throw ContractError("candidate has " + std::to_string(target.size()) +
                        " sentences but the source has " + std::to_string(source.size()));
  }
  std::vector<std::vector<TokenId>> src, tgt;
  for (std::size_t k = 0; k < source.size(); ++k) {
    src.push_back(src_vocab.encode(source.sentences[k]));
    auto ids = tgt_vocab.encode(target.sentences[k]);
    ids.insert(ids.begin(), corpus::kBosId);
    ids.push_back(corpus::kEosId);
    tgt.push_back(std::move(ids));
  }
  numerics::NoGradGuard guard;
  model::ForwardContext ctx;
  const auto loss = training::doc_nll_loss(model, corpus::SourceInput::from_sentences(src), tgt,
                                           0.0, ctx, context_limit);
  return -static_cast<double>(loss.total.item());
}

template <typename T>
ContrastiveResult contrastive_score(const model::Model<T>& model,
                                    const corpus::Vocabulary& src_vocab,
                                    const corpus::Vocabulary& tgt_vocab,
                                    const std::vector<ContrastiveGroup>& groups,
                                    std::size_t threads) {
  return contrastive_accuracy(
      groups,
      [&](const Document& src, const Document& cand) {
        return document_log_prob(model, src_vocab, tgt_vocab, src, cand);
      },
      threads);
}

#define DNMT_INSTANTIATE(T)                                                                   \
  template double document_log_prob(const model::Model<T>&, const corpus::Vocabulary&,        \
                                    const corpus::Vocabulary&, const Document&,               \
                                    const Document&, std::optional<std::size_t>);             \
  template ContrastiveResult contrastive_score(const model::Model<T>&,                        \
                                               const corpus::Vocabulary&,                     \
                                               const corpus::Vocabulary&,                     \
                                               const std::vector<ContrastiveGroup>&,          \
                                               std::size_t);

DNMT_INSTANTIATE(float)
DNMT_INSTANTIATE(double)

}  // namespace dnmt::evaluation
