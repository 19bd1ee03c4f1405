#pragma once

// Context-dependent toy translation task.
//
// Every source document opens with a topic tag (TAG_A or TAG_B) in its
// first sentence. Content tokens wN translate one-to-one to vN. Ambiguous
// tokens ambN appear only from the second sentence on and translate to
// ambN_A or ambN_B depending on the document topic, so a translator that
// ignores other sentences is right on them only half of the time.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dnmt/corpus/document.hpp"

namespace dnmt::corpus {

struct SyntheticOptions {
  std::size_t num_docs = 200;
  std::size_t sents_per_doc = 6;
  std::size_t sent_len = 6;
  std::size_t vocab_size = 32;        // content word types
  double ambiguity_rate = 0.3;        // chance a token in sentences 2..n is ambiguous
  std::size_t ambiguous_types = 0;    // 0 picks max(2, vocab_size / 4)
  std::uint64_t seed = 1;
};

enum class Topic : std::uint8_t { kA, kB };

struct AmbiguousSite {
  std::size_t doc = 0;
  std::size_t sentence = 0;
  std::size_t position = 0;
  std::string source;       // ambN
  std::string expected;     // ambN_<topic>
  std::string alternative;  // ambN_<other topic>
};

struct SyntheticTask {
  std::vector<DocumentPair> pairs;
  std::vector<Topic> topics;
  std::vector<AmbiguousSite> sites;

  // JSON manifest listing topics and every ambiguous token position.
  std::string manifest_json(const SyntheticOptions& options) const;
};

// Deterministic given options.seed. Topics are balanced exactly (the extra
// document of an odd count gets topic A). Throws ContractError when
// sents_per_doc < 2, sent_len < 1, vocab_size < 1, or the ambiguity rate
// is outside (0, 1).
SyntheticTask make_synthetic_task(const SyntheticOptions& options);

void write_synthetic_task(const SyntheticTask& task, const SyntheticOptions& options,
                          const std::filesystem::path& source_path,
                          const std::filesystem::path& target_path,
                          const std::filesystem::path& manifest_path);

// Reads the sites back from a manifest file.
std::vector<AmbiguousSite> read_manifest_sites(const std::filesystem::path& manifest_path);

std::string topic_tag(Topic topic);
std::string flip_ambiguous_translation(const std::string& target_token);

}  // namespace dnmt::corpus
