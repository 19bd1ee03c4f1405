#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "dnmt/corpus/batch.hpp"
#include "dnmt/corpus/vocabulary.hpp"
#include "dnmt/model/model.hpp"

namespace dnmt::testing {

inline model::ModelConfig micro_config(std::size_t d = 8, std::size_t heads = 2,
                                       std::size_t layers = 2, std::size_t vocab = 12) {
  model::ModelConfig c;
  c.encoder.d_model = c.decoder.d_model = d;
  c.encoder.d_ffn = c.decoder.d_ffn = 2 * d;
  c.encoder.n_layers = std::max<std::size_t>(layers, 2);
  c.decoder.n_layers = layers;
  c.encoder.n_heads = c.decoder.n_heads = heads;
  c.encoder.max_doc_sents = 8;
  c.encoder.max_rel_sent_dist = 2;
  c.encoder.dropout = c.decoder.dropout = 0.0;
  c.decoder.max_rel_word_dist = 16;
  c.src_vocab_size = c.tgt_vocab_size = vocab;
  return c;
}

// Overwrites every parameter with uniform noise so that biases, gains and
// the zero-initialized relative-attention terms all take generic values.
template <typename T>
void randomize(numerics::ParamStore<T>& params, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (const auto& [name, tensor] : params.all()) {
    auto t = tensor;
    const bool is_gain = name.size() > 5 && name.compare(name.size() - 5, 5, ".gain") == 0;
    for (auto& v : t.mutable_data()) v = static_cast<T>(is_gain ? 1.0 + dist(rng) : dist(rng));
  }
}

template <typename T>
void fill(numerics::ParamStore<T>& params, const std::string& name, T value) {
  auto t = params.get(name);
  for (auto& v : t.mutable_data()) v = value;
}

inline std::vector<numerics::TokenId> random_ids(std::size_t n, std::size_t vocab,
                                                 std::mt19937_64& rng) {
  std::uniform_int_distribution<numerics::TokenId> dist(corpus::kNumReserved,
                                                        static_cast<int>(vocab) - 1);
  std::vector<numerics::TokenId> ids(n);
  for (auto& id : ids) id = dist(rng);
  return ids;
}

inline corpus::SourceInput random_source(const std::vector<std::size_t>& lengths,
                                         std::size_t vocab, std::mt19937_64& rng) {
  std::vector<std::vector<numerics::TokenId>> sents;
  for (auto len : lengths) sents.push_back(random_ids(len, vocab, rng));
  return corpus::SourceInput::from_sentences(sents);
}

// bos + random tokens + eos
inline std::vector<numerics::TokenId> random_target(std::size_t len, std::size_t vocab,
                                                    std::mt19937_64& rng) {
  auto ids = random_ids(len, vocab, rng);
  ids.insert(ids.begin(), corpus::kBosId);
  ids.push_back(corpus::kEosId);
  return ids;
}

}  // namespace dnmt::testing
