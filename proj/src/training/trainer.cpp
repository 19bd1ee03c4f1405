#include "dnmt/training/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

#include "dnmt/error.hpp"
#include "dnmt/training/loss.hpp"

namespace dnmt::training {

using corpus::DocumentPair;
using corpus::Vocabulary;

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

constexpr std::uint64_t kDropoutStream = 0x9e3779b97f4a7c15ULL;

template <typename U>
void read_uint(const util::KeyValues& kv, const std::string& key, U& out) {
  if (!kv.has(key)) return;
  const auto v = kv.get_int(key);
  if (v < 0) throw ContractError("config key " + key + " must be non-negative");
  out = static_cast<U>(v);
}

std::string percent_encode(const std::string& token) {
  std::string out;
  for (unsigned char c : token) {
    if (c == '%' || c == '#' || c <= ' ') {
      char buf[4];
      std::snprintf(buf, sizeof buf, "%%%02X", c);
      out += buf;
    } else {
      out += static_cast<char>(c);
    }
  }
  return out;
}

std::string percent_decode(const std::string& token) {
  std::string out;
  for (std::size_t i = 0; i < token.size(); ++i) {
    if (token[i] == '%' && i + 2 < token.size()) {
      out += static_cast<char>(std::stoi(token.substr(i + 1, 2), nullptr, 16));
      i += 2;
    } else {
      out += token[i];
    }
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (token_budget == 0) throw ContractError("train.token_budget must be positive");
  if (warmup_steps < 1) throw ContractError("train.warmup_steps must be positive");
  if (!(label_smoothing >= 0 && label_smoothing < 1)) {
    throw ContractError("train.label_smoothing must lie in [0, 1)");
  }
  if (max_epochs == 0) throw ContractError("train.max_epochs must be positive");
  if (max_steps < 1) throw ContractError("train.max_steps must be positive");
  if (checkpoint_interval < 0) throw ContractError("train.checkpoint_interval must be >= 0");
  if (doc_split == 0) throw ContractError("train.doc_split must be positive");
  if (!(lr_scale > 0)) throw ContractError("train.lr_scale must be positive");
  if (clip_norm < 0) throw ContractError("train.clip_norm must be >= 0");
  if (max_sentence_len == 0) throw ContractError("train.max_sentence_len must be positive");
}

util::KeyValues TrainConfig::to_key_values() const {
  util::KeyValues kv;
  kv.set("train.token_budget", std::to_string(token_budget));
  kv.set("train.warmup_steps", std::to_string(warmup_steps));
  kv.set("train.label_smoothing", fmt_double(label_smoothing));
  kv.set("train.max_epochs", std::to_string(max_epochs));
  kv.set("train.max_steps", std::to_string(max_steps));
  kv.set("train.seed", std::to_string(seed));
  kv.set("train.checkpoint_interval", std::to_string(checkpoint_interval));
  kv.set("train.doc_split", std::to_string(doc_split));
  kv.set("train.lr_scale", fmt_double(lr_scale));
  kv.set("train.clip_norm", fmt_double(clip_norm));
  kv.set("train.patience", std::to_string(patience));
  kv.set("train.max_sentence_len", std::to_string(max_sentence_len));
  kv.set("train.sentence_level", sentence_level ? "true" : "false");
  return kv;
}

TrainConfig TrainConfig::from_key_values(const util::KeyValues& kv) {
  TrainConfig c;
  read_uint(kv, "train.token_budget", c.token_budget);
  if (kv.has("train.warmup_steps")) c.warmup_steps = kv.get_int("train.warmup_steps");
  if (kv.has("train.label_smoothing")) c.label_smoothing = kv.get_double("train.label_smoothing");
  read_uint(kv, "train.max_epochs", c.max_epochs);
  if (kv.has("train.max_steps")) c.max_steps = kv.get_int("train.max_steps");
  read_uint(kv, "train.seed", c.seed);
  if (kv.has("train.checkpoint_interval")) {
    c.checkpoint_interval = kv.get_int("train.checkpoint_interval");
  }
  read_uint(kv, "train.doc_split", c.doc_split);
  if (kv.has("train.lr_scale")) c.lr_scale = kv.get_double("train.lr_scale");
  if (kv.has("train.clip_norm")) c.clip_norm = kv.get_double("train.clip_norm");
  read_uint(kv, "train.patience", c.patience);
  read_uint(kv, "train.max_sentence_len", c.max_sentence_len);
  if (kv.has("train.sentence_level")) c.sentence_level = kv.get_bool("train.sentence_level");
  return c;
}

std::string encode_vocabulary(const Vocabulary& vocab) {
  std::string out;
  for (const auto& tok : vocab.regular_tokens()) {
    if (!out.empty()) out += ' ';
    out += percent_encode(tok);
  }
  return out;
}

Vocabulary decode_vocabulary(const std::string& text) {
  std::vector<std::string> tokens;
  std::istringstream in(text);
  for (std::string tok; in >> tok;) tokens.push_back(percent_decode(tok));
  return Vocabulary::from_tokens(tokens);
}

std::vector<DocumentPair> shuffled_documents(const std::vector<DocumentPair>& docs,
                                             std::uint64_t seed, std::size_t epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  numerics::Rng rng(seq);
  std::vector<std::size_t> idx(docs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  // Fisher-Yates with explicit draws so the permutation does not depend on
  // the standard library's shuffle implementation.
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  std::vector<DocumentPair> out;
  out.reserve(docs.size());
  for (auto i : idx) out.push_back(docs[i]);
  return out;
}

template <typename T>
Trainer<T>::Trainer(const model::ModelConfig& model_config, const TrainConfig& config,
                    Vocabulary src_vocab, Vocabulary tgt_vocab, std::vector<DocumentPair> train,
                    std::vector<DocumentPair> dev)
    : model_config_(model_config),
      config_(config),
      src_vocab_(std::move(src_vocab)),
      tgt_vocab_(std::move(tgt_vocab)),
      dev_(std::move(dev)),
      dropout_rng_(config.seed ^ kDropoutStream) {
  config_.validate();
  model_config_.src_vocab_size = src_vocab_.size();
  model_config_.tgt_vocab_size = tgt_vocab_.size();
  if (train.empty()) throw ContractError("training corpus holds no documents");
  train_ = corpus::split_documents(train, config_.doc_split);
  model_ = std::make_unique<model::Model<T>>(model_config_, config_.seed);
  start_epoch();
}

template <typename T>
void Trainer<T>::start_epoch() {
  corpus::BatchOptions opts;
  opts.token_budget = config_.token_budget;
  opts.max_sentence_len = config_.max_sentence_len;
  order_ = corpus::make_batches(shuffled_documents(train_, config_.seed, epoch_), src_vocab_,
                                tgt_vocab_, opts);
  cursor_ = 0;
}

template <typename T>
bool Trainer<T>::finished() const {
  return step_ >= config_.max_steps || epoch_ >= config_.max_epochs;
}

template <typename T>
double Trainer<T>::batch_loss_and_grad(const corpus::Batch& batch, std::size_t& tokens) {
  model::ForwardContext ctx{true, &dropout_rng_};
  tokens = batch.target_tokens;
  const T inv = static_cast<T>(1.0 / static_cast<double>(std::max<std::size_t>(tokens, 1)));
  double total = 0;
  for (const auto& doc : batch.documents) {
    if (config_.sentence_level) {
      const auto src = doc.source_input();
      const auto tgt = doc.target_sentences();
      for (std::size_t k = 0; k < tgt.size(); ++k) {
        std::vector<TokenId> s(src.tokens.begin() + static_cast<std::ptrdiff_t>(src.sentence_offsets[k]),
                               src.tokens.begin() + static_cast<std::ptrdiff_t>(src.sentence_offsets[k + 1]));
        auto l = sentence_nll_loss(*model_, s, tgt[k], config_.label_smoothing, ctx);
        total += static_cast<double>(l.total.item());
        numerics::scale(l.total, inv).backward();
      }
    } else {
      auto l = doc_nll_loss(*model_, doc, config_.label_smoothing, ctx);
      total += static_cast<double>(l.total.item());
      numerics::scale(l.total, inv).backward();
    }
  }
  return total / static_cast<double>(std::max<std::size_t>(tokens, 1));
}

template <typename T>
StepRecord Trainer<T>::step() {
  if (finished()) throw ContractError("training already finished");
  const auto t0 = std::chrono::steady_clock::now();
  const auto& batch = order_[cursor_];
  model_->params().zero_grad();
  std::size_t tokens = 0;
  const double loss = batch_loss_and_grad(batch, tokens);
  if (!std::isfinite(loss)) {
    model_->params().zero_grad();
    throw Error("non-finite loss " + fmt_double(loss) + " at step " + std::to_string(step_ + 1) +
                " (epoch " + std::to_string(epoch_) + ", batch " + std::to_string(cursor_) +
                " of " + std::to_string(order_.size()) + ", " +
                std::to_string(batch.documents.size()) + " documents)");
  }
  numerics::clip_grad_norm(model_->params(), config_.clip_norm);
  ++step_;
  const double lr =
      config_.lr_scale * numerics::lr_at_step(step_, static_cast<std::int64_t>(model_config_.decoder.d_model),
                                              config_.warmup_steps);
  numerics::adam_step(model_->params(), adam_, lr);
  model_->params().zero_grad();

  StepRecord rec;
  rec.step = step_;
  rec.epoch = epoch_;
  rec.lr = lr;
  rec.loss = loss;
  rec.tokens = tokens;
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rec.tokens_per_sec = secs > 0 ? static_cast<double>(tokens) / secs : 0.0;

  if (++cursor_ == order_.size()) {
    ++epoch_;
    start_epoch();
  }
  return rec;
}

template <typename T>
double Trainer<T>::dev_loss() const {
  if (dev_.empty()) throw ContractError("no dev documents");
  numerics::NoGradGuard guard;
  model::ForwardContext ctx;
  double total = 0;
  std::size_t tokens = 0;
  for (const auto& pair : corpus::split_documents(dev_, config_.doc_split)) {
    const auto doc = corpus::make_batch_document(pair, src_vocab_, tgt_vocab_,
                                                 config_.max_sentence_len);
    auto l = doc_nll_loss(*model_, doc, 0.0, ctx);
    total += static_cast<double>(l.total.item());
    tokens += l.tokens;
  }
  return total / static_cast<double>(std::max<std::size_t>(tokens, 1));
}

template <typename T>
TrainSummary Trainer<T>::run(const TrainOutputs& outputs) {
  TrainSummary summary;
  if (!outputs.checkpoint_dir.empty()) std::filesystem::create_directories(outputs.checkpoint_dir);
  const bool early_stopping = config_.patience > 0 && !dev_.empty();
  while (!finished()) {
    const std::size_t epoch_before = epoch_;
    const auto rec = step();
    if (outputs.log != nullptr) {
      nlohmann::json j{{"step", rec.step},
                       {"lr", rec.lr},
                       {"loss", rec.loss},
                       {"tokens_per_sec", rec.tokens_per_sec}};
      *outputs.log << j.dump() << '\n';
      outputs.log->flush();
    }
    if (!outputs.checkpoint_dir.empty() && config_.checkpoint_interval > 0 &&
        step_ % config_.checkpoint_interval == 0) {
      save(outputs.checkpoint_dir / ("step-" + std::to_string(step_) + ".dnmt"));
    }
    if (early_stopping && epoch_ != epoch_before) {
      const double dev = dev_loss();
      if (!best_dev_ || dev < *best_dev_) {
        best_dev_ = dev;
        stale_epochs_ = 0;
        if (!outputs.checkpoint_dir.empty()) save(outputs.checkpoint_dir / "best.dnmt");
      } else if (++stale_epochs_ >= config_.patience) {
        summary.early_stopped = true;
        break;
      }
    }
  }
  if (!outputs.checkpoint_dir.empty()) save(outputs.checkpoint_dir / "last.dnmt");
  summary.steps = step_;
  summary.epochs = epoch_;
  summary.best_dev_loss = best_dev_;
  return summary;
}

template <typename T>
CheckpointFile Trainer<T>::snapshot() const {
  CheckpointFile file;
  file.config = model_config_.to_key_values();
  file.config.merge(config_.to_key_values());
  file.config.set("vocab.source", encode_vocabulary(src_vocab_));
  file.config.set("vocab.target", encode_vocabulary(tgt_vocab_));
  file.config.set("state.step", std::to_string(step_));
  file.config.set("state.epoch", std::to_string(epoch_));
  file.config.set("state.cursor", std::to_string(cursor_));
  file.config.set("state.adam_step", std::to_string(adam_.step));
  file.config.set("state.stale_epochs", std::to_string(stale_epochs_));
  if (best_dev_) file.config.set("state.best_dev_loss", fmt_double(*best_dev_));
  std::ostringstream rng;
  rng << dropout_rng_;
  file.config.set("state.rng", rng.str());
  for (const auto& [name, p] : model_->params().all()) {
    file.tensors.push_back(store_tensor<T>(name, p.shape(), p.data()));
  }
  for (const auto& [name, m] : adam_.first_moment) {
    file.tensors.push_back(store_tensor<T>("adam.m/" + name, {m.size()}, m));
  }
  for (const auto& [name, v] : adam_.second_moment) {
    file.tensors.push_back(store_tensor<T>("adam.v/" + name, {v.size()}, v));
  }
  return file;
}

template <typename T>
void Trainer<T>::save(const std::filesystem::path& path) const {
  write_checkpoint(path, snapshot());
}

template <typename T>
std::unique_ptr<Trainer<T>> Trainer<T>::resume(const std::filesystem::path& checkpoint,
                                               std::vector<DocumentPair> train,
                                               std::vector<DocumentPair> dev,
                                               const std::optional<TrainConfig>& overrides) {
  const auto file = read_checkpoint(checkpoint);
  const auto& kv = file.config;
  auto model_config = model::ModelConfig::from_key_values(kv);
  auto config = TrainConfig::from_key_values(kv);
  if (overrides) {
    config.max_steps = overrides->max_steps;
    config.max_epochs = overrides->max_epochs;
    config.checkpoint_interval = overrides->checkpoint_interval;
    config.patience = overrides->patience;
  }
  auto trainer = std::make_unique<Trainer<T>>(model_config, config,
                                              decode_vocabulary(kv.get("vocab.source")),
                                              decode_vocabulary(kv.get("vocab.target")),
                                              std::move(train), std::move(dev));
  restore_parameters(trainer->model_->params(), file);
  auto& adam = trainer->adam_;
  adam.step = kv.get_int("state.adam_step");
  for (const auto& t : file.tensors) {
    const auto* values = std::get_if<std::vector<T>>(&t.values);
    if (t.name.rfind("adam.", 0) != 0) continue;
    if (values == nullptr) throw ShapeError("optimizer state " + t.name + ": dtype differs");
    const std::string param = t.name.substr(7);
    if (!trainer->model_->params().contains(param)) {
      throw ShapeError("optimizer state for unknown parameter " + param);
    }
    auto& dst = t.name.compare(0, 7, "adam.m/") == 0 ? adam.first_moment : adam.second_moment;
    dst[param] = *values;
  }
  trainer->step_ = kv.get_int("state.step");
  trainer->epoch_ = static_cast<std::size_t>(kv.get_int("state.epoch"));
  trainer->stale_epochs_ = static_cast<std::size_t>(kv.get_int("state.stale_epochs"));
  if (kv.has("state.best_dev_loss")) trainer->best_dev_ = kv.get_double("state.best_dev_loss");
  std::istringstream rng(kv.get("state.rng"));
  rng >> trainer->dropout_rng_;
  if (!rng) throw Error(checkpoint.string() + ": malformed generator state");
  trainer->start_epoch();
  const auto cursor = static_cast<std::size_t>(kv.get_int("state.cursor"));
  if (cursor > trainer->order_.size()) {
    throw ContractError("checkpoint batch cursor exceeds the corpus; was it trained on other data?");
  }
  trainer->cursor_ = cursor;
  return trainer;
}

template <typename T>
LoadedModel<T> load_model(const std::filesystem::path& checkpoint) {
  const auto file = read_checkpoint(checkpoint);
  LoadedModel<T> out;
  out.config = model::ModelConfig::from_key_values(file.config);
  out.src_vocab = decode_vocabulary(file.config.get("vocab.source"));
  out.tgt_vocab = decode_vocabulary(file.config.get("vocab.target"));
  out.model = std::make_unique<model::Model<T>>(out.config, 1);
  restore_parameters(out.model->params(), file);
  return out;
}

template <typename T>
LoadedModel<T> load_model(const std::filesystem::path& checkpoint,
                          const model::ModelConfig& config) {
  const auto file = read_checkpoint(checkpoint);
  LoadedModel<T> out;
  out.config = config;
  out.src_vocab = decode_vocabulary(file.config.get("vocab.source"));
  out.tgt_vocab = decode_vocabulary(file.config.get("vocab.target"));
  out.config.src_vocab_size = out.src_vocab.size();
  out.config.tgt_vocab_size = out.tgt_vocab.size();
  out.model = std::make_unique<model::Model<T>>(out.config, 1);
  restore_parameters(out.model->params(), file);
  return out;
}

template class Trainer<float>;
template class Trainer<double>;
template LoadedModel<float> load_model<float>(const std::filesystem::path&);
template LoadedModel<double> load_model<double>(const std::filesystem::path&);
template LoadedModel<float> load_model<float>(const std::filesystem::path&,
                                              const model::ModelConfig&);
template LoadedModel<double> load_model<double>(const std::filesystem::path&,
                                                const model::ModelConfig&);

}  // namespace dnmt::training
