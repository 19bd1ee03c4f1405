#include "dnmt/corpus/document.hpp"

#include <fstream>
#include <sstream>

#include "dnmt/error.hpp"

namespace dnmt::corpus {

std::vector<Document> parse_documents(const std::string& text) {
  std::vector<Document> docs;
  Document current;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream words(line);
    Sentence sentence;
    for (std::string w; words >> w;) sentence.push_back(std::move(w));
    if (sentence.empty()) {
      if (!current.sentences.empty()) docs.push_back(std::move(current));
      current = {};
      continue;
    }
    current.sentences.push_back(std::move(sentence));
  }
  if (!current.sentences.empty()) docs.push_back(std::move(current));
  return docs;
}

std::vector<Document> read_documents(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  auto docs = parse_documents(buffer.str());
  if (docs.empty()) throw ContractError("corpus file " + path.string() + " is empty");
  return docs;
}

std::string join_tokens(const Sentence& sentence) {
  std::string out;
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    if (i) out += ' ';
    out += sentence[i];
  }
  return out;
}

std::string format_documents(const std::vector<Document>& docs) {
  std::string out;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (d) out += '\n';
    for (const auto& s : docs[d].sentences) {
      out += join_tokens(s);
      out += '\n';
    }
  }
  return out;
}

void write_documents(const std::filesystem::path& path, const std::vector<Document>& docs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write corpus file " + path.string());
  out << format_documents(docs);
  if (!out) throw Error("failed writing corpus file " + path.string());
}

std::vector<DocumentPair> zip_documents(std::vector<Document> source,
                                        std::vector<Document> target) {
  if (source.size() != target.size()) {
    throw ContractError("document count mismatch: source has " +
                        std::to_string(source.size()) + " documents, target has " +
                        std::to_string(target.size()));
  }
  std::vector<DocumentPair> pairs;
  pairs.reserve(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (source[i].size() != target[i].size()) {
      throw ContractError("document " + std::to_string(i) + " is not sentence-aligned: source has " +
                          std::to_string(source[i].size()) + " sentences, target has " +
                          std::to_string(target[i].size()));
    }
    pairs.push_back({std::move(source[i]), std::move(target[i])});
  }
  return pairs;
}

std::vector<DocumentPair> load_parallel_corpus(const std::filesystem::path& source_path,
                                               const std::filesystem::path& target_path) {
  return zip_documents(read_documents(source_path), read_documents(target_path));
}

std::vector<DocumentPair> split_document(const DocumentPair& doc, std::size_t max_sents) {
  if (max_sents == 0) throw ContractError("split_document: max_sents must be >= 1");
  std::vector<DocumentPair> chunks;
  const std::size_t n = doc.source.size();
  for (std::size_t begin = 0; begin < n; begin += max_sents) {
    const std::size_t end = std::min(n, begin + max_sents);
    DocumentPair chunk;
    chunk.source.sentences.assign(doc.source.sentences.begin() + begin,
                                  doc.source.sentences.begin() + end);
    chunk.target.sentences.assign(doc.target.sentences.begin() + begin,
                                  doc.target.sentences.begin() + end);
    chunks.push_back(std::move(chunk));
  }
  return chunks;
}

std::vector<DocumentPair> split_documents(const std::vector<DocumentPair>& docs,
                                          std::size_t max_sents) {
  std::vector<DocumentPair> out;
  for (const auto& d : docs) {
    auto chunks = split_document(d, max_sents);
    out.insert(out.end(), std::make_move_iterator(chunks.begin()),
               std::make_move_iterator(chunks.end()));
  }
  return out;
}

}  // namespace dnmt::corpus
