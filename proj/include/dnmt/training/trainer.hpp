#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dnmt/corpus/batch.hpp"
#include "dnmt/corpus/document.hpp"
#include "dnmt/corpus/vocabulary.hpp"
#include "dnmt/model/model.hpp"
#include "dnmt/numerics/optim.hpp"
#include "dnmt/training/checkpoint.hpp"

namespace dnmt::training {

struct TrainConfig {
  std::size_t token_budget = 2048;
  std::int64_t warmup_steps = 8000;
  double label_smoothing = 0.1;
  std::size_t max_epochs = 100;
  std::int64_t max_steps = 100000;
  std::uint64_t seed = 1;
  std::int64_t checkpoint_interval = 1000;  // steps; 0 writes no periodic checkpoints
  std::size_t doc_split = 20;               // max sentences per training document
  double lr_scale = 1.0;
  double clip_norm = 1.0;                   // 0 disables clipping
  std::size_t patience = 0;                 // epochs without dev improvement; 0 disables
  std::size_t max_sentence_len = 200;
  // Trains every sentence independently with the local encoder and an
  // empty decoder memory instead of the document objective.
  bool sentence_level = false;

  void validate() const;
  util::KeyValues to_key_values() const;
  static TrainConfig from_key_values(const util::KeyValues& kv);
};

struct StepRecord {
  std::int64_t step = 0;
  std::size_t epoch = 0;
  double lr = 0;
  double loss = 0;  // per predicted target token
  double tokens_per_sec = 0;
  std::size_t tokens = 0;
};

struct TrainSummary {
  std::int64_t steps = 0;
  std::size_t epochs = 0;
  std::optional<double> best_dev_loss;
  bool early_stopped = false;
};

// Where run() writes its artifacts. Empty paths disable the output.
struct TrainOutputs {
  std::filesystem::path checkpoint_dir;
  std::ostream* log = nullptr;  // JSON lines {step, lr, loss, tokens_per_sec}
};

template <typename T>
class Trainer {
 public:
  Trainer(const model::ModelConfig& model_config, const TrainConfig& config,
          corpus::Vocabulary src_vocab, corpus::Vocabulary tgt_vocab,
          std::vector<corpus::DocumentPair> train, std::vector<corpus::DocumentPair> dev = {});

  // Continues a run saved by save(). The corpus must be the one the run
  // started with; `config` overrides are ignored except for max_steps,
  // max_epochs, checkpoint_interval and patience.
  static std::unique_ptr<Trainer> resume(const std::filesystem::path& checkpoint,
                                         std::vector<corpus::DocumentPair> train,
                                         std::vector<corpus::DocumentPair> dev = {},
                                         const std::optional<TrainConfig>& config = {});

  // Runs one optimizer update on the next batch. Throws Error naming the
  // batch if the loss is not finite.
  StepRecord step();
  bool finished() const;
  TrainSummary run(const TrainOutputs& outputs = {});

  // Mean per-token NLL (no label smoothing) over the dev documents.
  double dev_loss() const;

  void save(const std::filesystem::path& path) const;
  CheckpointFile snapshot() const;

  model::Model<T>& model() { return *model_; }
  const model::Model<T>& model() const { return *model_; }
  const TrainConfig& config() const { return config_; }
  const corpus::Vocabulary& src_vocab() const { return src_vocab_; }
  const corpus::Vocabulary& tgt_vocab() const { return tgt_vocab_; }
  std::int64_t steps_done() const { return step_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t batches_per_epoch() const { return order_.size(); }

 private:
  void start_epoch();
  double batch_loss_and_grad(const corpus::Batch& batch, std::size_t& tokens);

  model::ModelConfig model_config_;
  TrainConfig config_;
  corpus::Vocabulary src_vocab_;
  corpus::Vocabulary tgt_vocab_;
  std::vector<corpus::DocumentPair> train_;
  std::vector<corpus::DocumentPair> dev_;
  std::unique_ptr<model::Model<T>> model_;
  numerics::AdamState<T> adam_;
  numerics::Rng dropout_rng_;

  std::int64_t step_ = 0;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;  // next batch within the epoch
  std::vector<corpus::Batch> order_;
  std::optional<double> best_dev_;
  std::size_t stale_epochs_ = 0;
};

// Documents of one epoch: `docs` permuted by a generator seeded from
// (seed, epoch). Sentences inside a document keep their order.
std::vector<corpus::DocumentPair> shuffled_documents(const std::vector<corpus::DocumentPair>& docs,
                                                     std::uint64_t seed, std::size_t epoch);

// Model configuration and vocabularies restored from a checkpoint.
template <typename T>
struct LoadedModel {
  model::ModelConfig config;
  corpus::Vocabulary src_vocab;
  corpus::Vocabulary tgt_vocab;
  std::unique_ptr<model::Model<T>> model;
};

template <typename T>
LoadedModel<T> load_model(const std::filesystem::path& checkpoint);

// Loads checkpoint parameters into a model built from `config`; a shape
// disagreement raises ShapeError naming the parameter.
template <typename T>
LoadedModel<T> load_model(const std::filesystem::path& checkpoint,
                          const model::ModelConfig& config);

std::string encode_vocabulary(const corpus::Vocabulary& vocab);
corpus::Vocabulary decode_vocabulary(const std::string& text);

}  // namespace dnmt::training
