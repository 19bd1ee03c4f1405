#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace dnmt::corpus {

using Sentence = std::vector<std::string>;

// Ordered, non-empty list of non-empty sentences.
struct Document {
  std::vector<Sentence> sentences;

  std::size_t size() const { return sentences.size(); }
  bool operator==(const Document&) const = default;
};

// Sentence-aligned document translation pair.
struct DocumentPair {
  Document source;
  Document target;

  bool operator==(const DocumentPair&) const = default;
};

// Corpus text format: UTF-8, one whitespace-tokenized sentence per line, a
// blank line between documents. Runs of blank lines count as one separator.
// Throws Error if the file cannot be read or holds no sentences.
std::vector<Document> read_documents(const std::filesystem::path& path);
std::vector<Document> parse_documents(const std::string& text);
void write_documents(const std::filesystem::path& path,
                     const std::vector<Document>& docs);
std::string format_documents(const std::vector<Document>& docs);

// Loads aligned source/target files. Throws ContractError naming the first
// document whose counts disagree.
std::vector<DocumentPair> load_parallel_corpus(
    const std::filesystem::path& source_path,
    const std::filesystem::path& target_path);

std::vector<DocumentPair> zip_documents(std::vector<Document> source,
                                        std::vector<Document> target);

// Consecutive chunks of at most max_sents sentences, order preserved.
std::vector<DocumentPair> split_document(const DocumentPair& doc,
                                         std::size_t max_sents);
std::vector<DocumentPair> split_documents(const std::vector<DocumentPair>& docs,
                                          std::size_t max_sents);

std::string join_tokens(const Sentence& sentence);

}  // namespace dnmt::corpus
