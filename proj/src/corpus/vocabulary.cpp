#include "dnmt/corpus/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "dnmt/error.hpp"

namespace dnmt::corpus {
namespace {

const char* const kReserved[] = {"<pad>", "<s>", "</s>", "<unk>"};

}  // namespace

Vocabulary::Vocabulary() {
  for (const char* r : kReserved) insert(r);
}

void Vocabulary::insert(const std::string& token) {
  if (index_.count(token)) throw ContractError("duplicate vocabulary token: " + token);
  index_.emplace(token, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<Document>& docs, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& d : docs) {
    for (const auto& s : d.sentences) {
      for (const auto& w : s) ++counts[w];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [w, c] : counts) {
    if (c >= min_count && w.size() > 0) kept.emplace_back(w, c);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary vocab;
  for (const auto& [w, c] : kept) {
    if (!vocab.contains(w)) vocab.insert(w);
  }
  return vocab;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary vocab;
  for (const auto& t : tokens) vocab.insert(t);
  return vocab;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocabulary file " + path.string());
  std::vector<std::string> tokens;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return from_tokens(tokens);
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write vocabulary file " + path.string());
  for (std::size_t i = kNumReserved; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

TokenId Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ContractError("token id " + std::to_string(id) + " outside vocabulary of " +
                        std::to_string(tokens_.size()));
  }
  return tokens_[id];
}

std::vector<TokenId> Vocabulary::encode(const Sentence& sentence) const {
  std::vector<TokenId> ids;
  ids.reserve(sentence.size());
  for (const auto& w : sentence) ids.push_back(id(w));
  return ids;
}

Sentence Vocabulary::decode(const std::vector<TokenId>& ids) const {
  Sentence out;
  for (TokenId t : ids) {
    if (t == kEosId) break;
    if (t == kPadId || t == kBosId) continue;
    out.push_back(token(t));
  }
  return out;
}

std::vector<std::string> Vocabulary::regular_tokens() const {
  return {tokens_.begin() + kNumReserved, tokens_.end()};
}

}  // namespace dnmt::corpus
