#include "dnmt/corpus/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include "json.hpp"

#include "dnmt/error.hpp"

namespace dnmt::corpus {

std::string topic_tag(Topic topic) { return topic == Topic::kA ? "TAG_A" : "TAG_B"; }

std::string flip_ambiguous_translation(const std::string& target_token) {
  if (target_token.size() > 2 && target_token.rfind("amb", 0) == 0) {
    const std::string suffix = target_token.substr(target_token.size() - 2);
    const std::string stem = target_token.substr(0, target_token.size() - 2);
    if (suffix == "_A") return stem + "_B";
    if (suffix == "_B") return stem + "_A";
  }
  return target_token;
}

SyntheticTask make_synthetic_task(const SyntheticOptions& options) {
  if (options.sents_per_doc < 2) {
    throw ContractError("synthetic task needs at least 2 sentences per document");
  }
  if (options.sent_len < 1 || options.vocab_size < 1 || options.num_docs < 1) {
    throw ContractError("synthetic task needs positive sent_len, vocab_size and num_docs");
  }
  if (!(options.ambiguity_rate > 0.0 && options.ambiguity_rate < 1.0)) {
    throw ContractError("synthetic ambiguity_rate must lie in (0, 1)");
  }
  const std::size_t amb_types =
      options.ambiguous_types ? options.ambiguous_types
                              : std::max<std::size_t>(2, options.vocab_size / 4);

  std::mt19937_64 rng(options.seed);
  SyntheticTask task;
  task.topics.resize(options.num_docs);
  for (std::size_t d = 0; d < options.num_docs; ++d) {
    task.topics[d] = d < (options.num_docs + 1) / 2 ? Topic::kA : Topic::kB;
  }
  std::shuffle(task.topics.begin(), task.topics.end(), rng);

  std::uniform_int_distribution<std::size_t> content(0, options.vocab_size - 1);
  std::uniform_int_distribution<std::size_t> ambiguous(0, amb_types - 1);
  std::bernoulli_distribution is_ambiguous(options.ambiguity_rate);
  std::uniform_int_distribution<std::size_t> tag_slot(0, options.sent_len - 1);

  for (std::size_t d = 0; d < options.num_docs; ++d) {
    const Topic topic = task.topics[d];
    const std::string suffix = topic == Topic::kA ? "_A" : "_B";
    const std::string other = topic == Topic::kA ? "_B" : "_A";
    DocumentPair pair;
    for (std::size_t k = 0; k < options.sents_per_doc; ++k) {
      Sentence src, tgt;
      const std::size_t tag_at = k == 0 ? tag_slot(rng) : options.sent_len;
      for (std::size_t i = 0; i < options.sent_len; ++i) {
        if (i == tag_at) {
          src.push_back(topic_tag(topic));
          tgt.push_back(topic_tag(topic) + "'");
        } else if (k > 0 && is_ambiguous(rng)) {
          const std::string stem = "amb" + std::to_string(ambiguous(rng));
          src.push_back(stem);
          tgt.push_back(stem + suffix);
          task.sites.push_back({d, k, i, stem, stem + suffix, stem + other});
        } else {
          const std::size_t w = content(rng);
          src.push_back("w" + std::to_string(w));
          tgt.push_back("v" + std::to_string(w));
        }
      }
      pair.source.sentences.push_back(std::move(src));
      pair.target.sentences.push_back(std::move(tgt));
    }
    task.pairs.push_back(std::move(pair));
  }
  return task;
}

std::string SyntheticTask::manifest_json(const SyntheticOptions& options) const {
  nlohmann::json j;
  j["num_docs"] = options.num_docs;
  j["sents_per_doc"] = options.sents_per_doc;
  j["sent_len"] = options.sent_len;
  j["vocab_size"] = options.vocab_size;
  j["ambiguity_rate"] = options.ambiguity_rate;
  j["seed"] = options.seed;
  auto& topics_json = j["topics"] = nlohmann::json::array();
  for (Topic t : topics) topics_json.push_back(t == Topic::kA ? "A" : "B");
  auto& sites_json = j["ambiguous_tokens"] = nlohmann::json::array();
  for (const auto& s : sites) {
    sites_json.push_back({{"doc", s.doc},
                          {"sentence", s.sentence},
                          {"position", s.position},
                          {"source", s.source},
                          {"expected", s.expected},
                          {"alternative", s.alternative}});
  }
  return j.dump(1);
}

void write_synthetic_task(const SyntheticTask& task, const SyntheticOptions& options,
                          const std::filesystem::path& source_path,
                          const std::filesystem::path& target_path,
                          const std::filesystem::path& manifest_path) {
  std::vector<Document> src, tgt;
  for (const auto& p : task.pairs) {
    src.push_back(p.source);
    tgt.push_back(p.target);
  }
  write_documents(source_path, src);
  write_documents(target_path, tgt);
  std::ofstream out(manifest_path, std::ios::binary);
  if (!out) throw Error("cannot write manifest " + manifest_path.string());
  out << task.manifest_json(options) << '\n';
}

std::vector<AmbiguousSite> read_manifest_sites(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error("cannot open manifest " + manifest_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ContractError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  std::vector<AmbiguousSite> sites;
  for (const auto& s : j.at("ambiguous_tokens")) {
    sites.push_back({s.at("doc").get<std::size_t>(), s.at("sentence").get<std::size_t>(),
                     s.at("position").get<std::size_t>(), s.at("source").get<std::string>(),
                     s.at("expected").get<std::string>(),
                     s.at("alternative").get<std::string>()});
  }
  return sites;
}

}  // namespace dnmt::corpus
