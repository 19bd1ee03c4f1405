#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "dnmt/corpus/synthetic.hpp"
#include "dnmt/error.hpp"
#include "dnmt/training/checkpoint.hpp"
#include "dnmt/training/loss.hpp"
#include "dnmt/training/trainer.hpp"
#include "support/fixtures.hpp"

using namespace dnmt;
using namespace dnmt::training;
using corpus::DocumentPair;
using corpus::SourceInput;
using numerics::TokenId;
namespace tst = dnmt::testing;
namespace fs = std::filesystem;

namespace {

std::vector<DocumentPair> toy_corpus(std::size_t docs, std::size_t sents = 3,
                                     std::uint64_t seed = 5) {
  corpus::SyntheticOptions opts;
  opts.num_docs = docs;
  opts.sents_per_doc = sents;
  opts.sent_len = 4;
  opts.vocab_size = 8;
  opts.seed = seed;
  return corpus::make_synthetic_task(opts).pairs;
}

std::vector<corpus::Document> sources_of(const std::vector<DocumentPair>& pairs) {
  std::vector<corpus::Document> out;
  for (const auto& p : pairs) out.push_back(p.source);
  return out;
}
std::vector<corpus::Document> targets_of(const std::vector<DocumentPair>& pairs) {
  std::vector<corpus::Document> out;
  for (const auto& p : pairs) out.push_back(p.target);
  return out;
}

model::ModelConfig toy_model(double dropout = 0.1) {
  auto c = tst::micro_config(16, 2, 1);
  c.encoder.dropout = c.decoder.dropout = dropout;
  return c;
}

TrainConfig toy_train(std::int64_t steps) {
  TrainConfig t;
  t.token_budget = 64;
  t.warmup_steps = 100;
  t.max_steps = steps;
  t.seed = 3;
  t.checkpoint_interval = 0;
  return t;
}

template <typename T = float>
std::unique_ptr<Trainer<T>> make_trainer(const std::vector<DocumentPair>& pairs,
                                         const TrainConfig& cfg,
                                         const model::ModelConfig& mc = toy_model()) {
  return std::make_unique<Trainer<T>>(mc, cfg, corpus::Vocabulary::build(sources_of(pairs), 1),
                                      corpus::Vocabulary::build(targets_of(pairs), 1), pairs);
}

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "dnmt_training_test";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(DocumentLoss, SingleSentenceEqualsSentenceLoss) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto cfg = tst::micro_config(8, 2, 2, 12);
    model::Model<double> m(cfg, seed);
    tst::randomize(m.params(), seed + 7, 0.4);
    std::mt19937_64 rng(seed);
    const auto src = tst::random_ids(5, 12, rng);
    const auto tgt = tst::random_target(4, 12, rng);
    model::ForwardContext ctx;
    const auto doc = doc_nll_loss(m, SourceInput::from_sentences({src}), {tgt}, 0.1, ctx);
    const auto sent = sentence_nll_loss(m, src, tgt, 0.1, ctx);
    EXPECT_EQ(doc.total.item(), sent.total.item());
    EXPECT_EQ(doc.tokens, sent.tokens);
  }
}

TEST(DocumentLoss, AblatedContextDecomposesIntoSentences) {
  auto cfg = tst::micro_config(8, 2, 2, 12);
  cfg.encoder.global_layer = false;
  cfg.encoder.segment_embedding = false;
  cfg.decoder.memory_span = 0;
  model::Model<double> m(cfg, 4);
  tst::randomize(m.params(), 8, 0.4);
  std::mt19937_64 rng(9);
  const auto s1 = tst::random_ids(4, 12, rng), s2 = tst::random_ids(3, 12, rng);
  const auto t1 = tst::random_target(3, 12, rng), t2 = tst::random_target(5, 12, rng);
  model::ForwardContext ctx;
  const auto doc = doc_nll_loss(m, SourceInput::from_sentences({s1, s2}), {t1, t2}, 0.1, ctx);
  const double parts = sentence_nll_loss(m, s1, t1, 0.1, ctx).total.item() +
                       sentence_nll_loss(m, s2, t2, 0.1, ctx).total.item();
  EXPECT_NEAR(doc.total.item(), parts, 1e-12);
  EXPECT_EQ(doc.tokens, t1.size() + t2.size() - 2);
}

TEST(DocumentLoss, RejectsMisalignedTargets) {
  auto cfg = tst::micro_config();
  model::Model<double> m(cfg, 1);
  model::ForwardContext ctx;
  EXPECT_THROW(doc_nll_loss(m, SourceInput::from_sentences({{4, 5}}), {{1, 4, 2}, {1, 5, 2}},
                            0.1, ctx),
               ContractError);
}

TEST(Shuffle, DeterministicPerEpochAndKeepsSentenceOrder) {
  const auto docs = toy_corpus(20);
  const auto a = shuffled_documents(docs, 3, 0);
  EXPECT_EQ(a, shuffled_documents(docs, 3, 0));
  EXPECT_NE(a, shuffled_documents(docs, 3, 1));
  EXPECT_NE(a, shuffled_documents(docs, 4, 0));
  for (const auto& d : a) {
    EXPECT_NE(std::find(docs.begin(), docs.end(), d), docs.end());
  }
}

TEST(Trainer, LossDecreasesOnSyntheticCorpus) {
  const auto docs = toy_corpus(50);
  auto trainer = make_trainer(docs, toy_train(200), toy_model(0.0));
  std::vector<double> losses;
  while (!trainer->finished()) losses.push_back(trainer->step().loss);
  ASSERT_EQ(losses.size(), 200u);
  auto mean = [&](std::size_t b, std::size_t e) {
    double s = 0;
    for (auto i = b; i < e; ++i) s += losses[i];
    return s / static_cast<double>(e - b);
  };
  EXPECT_LT(mean(180, 200), 0.5 * mean(0, 20));
}

TEST(Trainer, SameSeedGivesIdenticalLosses) {
  const auto docs = toy_corpus(30);
  auto a = make_trainer(docs, toy_train(40));
  auto b = make_trainer(docs, toy_train(40));
  while (!a->finished()) {
    const auto ra = a->step(), rb = b->step();
    ASSERT_EQ(ra.loss, rb.loss) << "step " << ra.step;
    ASSERT_EQ(ra.lr, rb.lr);
  }
  auto c_cfg = toy_train(40);
  c_cfg.seed = 4;
  auto c = make_trainer(docs, c_cfg);
  EXPECT_NE(c->step().loss, make_trainer(docs, toy_train(40))->step().loss);
}

TEST(Trainer, LearningRateFollowsSchedule) {
  const auto docs = toy_corpus(10);
  auto cfg = toy_train(5);
  cfg.lr_scale = 1.0;
  auto t = make_trainer(docs, cfg);
  for (int s = 1; s <= 5; ++s) {
    const double expect = std::pow(16.0, -0.5) * std::min(std::pow(s, -0.5), s * std::pow(100.0, -1.5));
    EXPECT_NEAR(t->step().lr, expect, 1e-15);
  }
}

TEST(Trainer, JsonLogHasOneObjectPerStep) {
  const auto docs = toy_corpus(10);
  auto t = make_trainer(docs, toy_train(7));
  std::ostringstream log;
  TrainOutputs out;
  out.log = &log;
  const auto summary = t->run(out);
  EXPECT_EQ(summary.steps, 7);
  std::istringstream in(log.str());
  int n = 0;
  for (std::string line; std::getline(in, line); ++n) {
    auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("step").get<int>(), n + 1);
    EXPECT_TRUE(j.contains("lr"));
    EXPECT_TRUE(j.contains("loss"));
    EXPECT_TRUE(j.contains("tokens_per_sec"));
    EXPECT_EQ(j.size(), 4u);
  }
  EXPECT_EQ(n, 7);
}

TEST(Trainer, NonFiniteLossNamesTheBatch) {
  const auto docs = toy_corpus(10);
  auto t = make_trainer(docs, toy_train(5));
  tst::fill(t->model().params(), "dec.embed", std::nanf(""));
  try {
    t->step();
    FAIL() << "expected an error";
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("non-finite loss"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch 0"), std::string::npos) << msg;
  }
}

TEST(Trainer, DocSplitOneMatchesSentenceLevelPath) {
  const auto docs = toy_corpus(20);
  auto doc_cfg = toy_train(30);
  doc_cfg.doc_split = 1;
  auto sent_cfg = doc_cfg;
  sent_cfg.sentence_level = true;
  auto a = make_trainer<double>(docs, doc_cfg);
  auto b = make_trainer<double>(docs, sent_cfg);
  while (!a->finished()) {
    const auto ra = a->step(), rb = b->step();
    ASSERT_NEAR(ra.loss, rb.loss, 1e-6) << "step " << ra.step;
  }
}

TEST(Trainer, ValidatesConfig) {
  const auto docs = toy_corpus(5);
  auto cfg = toy_train(5);
  cfg.label_smoothing = 1.0;
  EXPECT_THROW(make_trainer(docs, cfg), ContractError);
  cfg = toy_train(5);
  cfg.doc_split = 0;
  EXPECT_THROW(make_trainer(docs, cfg), ContractError);
  EXPECT_THROW(make_trainer({}, toy_train(5)), ContractError);
}

TEST(Trainer, EarlyStoppingOnDevLoss) {
  const auto docs = toy_corpus(10);
  auto cfg = toy_train(100000);
  cfg.max_epochs = 1000;
  cfg.patience = 1;
  cfg.lr_scale = 50.0;  // diverges quickly, so dev loss stops improving
  Trainer<float> t(toy_model(), cfg, corpus::Vocabulary::build(sources_of(docs), 1),
                   corpus::Vocabulary::build(targets_of(docs), 1), docs, toy_corpus(4, 3, 99));
  const auto summary = t.run();
  EXPECT_TRUE(summary.early_stopped);
  EXPECT_TRUE(summary.best_dev_loss.has_value());
  EXPECT_LT(summary.epochs, 1000u);
}

TEST(TrainConfigKeys, RoundTrip) {
  TrainConfig c = toy_train(17);
  c.sentence_level = true;
  c.label_smoothing = 0.125;
  const auto back = TrainConfig::from_key_values(c.to_key_values());
  EXPECT_EQ(back.to_key_values().format(), c.to_key_values().format());
}

TEST(Checkpoint, RoundTripIsBitwise) {
  const auto docs = toy_corpus(10);
  auto t = make_trainer(docs, toy_train(10));
  for (int i = 0; i < 3; ++i) t->step();
  const auto path = temp_path("roundtrip.dnmt");
  t->save(path);
  const auto file = read_checkpoint(path);
  const auto snap = t->snapshot();
  ASSERT_EQ(file.tensors.size(), snap.tensors.size());
  for (std::size_t i = 0; i < snap.tensors.size(); ++i) {
    EXPECT_EQ(file.tensors[i].name, snap.tensors[i].name);
    EXPECT_EQ(file.tensors[i].shape, snap.tensors[i].shape);
    EXPECT_TRUE(file.tensors[i].values == snap.tensors[i].values) << snap.tensors[i].name;
  }
  EXPECT_EQ(file.config.format(), snap.config.format());

  auto loaded = load_model<float>(path);
  EXPECT_TRUE(loaded.src_vocab == t->src_vocab());
  EXPECT_TRUE(loaded.tgt_vocab == t->tgt_vocab());
  for (const auto& [name, p] : t->model().params().all()) {
    const auto q = loaded.model->params().get(name);
    ASSERT_TRUE(std::equal(p.data().begin(), p.data().end(), q.data().begin())) << name;
  }
}

TEST(Checkpoint, VocabularyWithSpecialCharactersSurvives) {
  auto v = corpus::Vocabulary::from_tokens({"a#b", "100%", "x=y", "plain"});
  EXPECT_TRUE(decode_vocabulary(encode_vocabulary(v)) == v);
}

TEST(Checkpoint, RejectsCorruptedMagic) {
  const auto docs = toy_corpus(5);
  auto t = make_trainer(docs, toy_train(2));
  const auto path = temp_path("magic.dnmt");
  t->save(path);
  auto bytes = file_bytes(path);
  bytes[0] = 'X';
  write_bytes(path, bytes);
  try {
    read_checkpoint(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
}

TEST(Checkpoint, RejectsTruncationAndCorruption) {
  const auto docs = toy_corpus(5);
  auto t = make_trainer(docs, toy_train(2));
  const auto path = temp_path("trunc.dnmt");
  t->save(path);
  const auto bytes = file_bytes(path);
  for (std::size_t keep : {std::size_t{6}, std::size_t{40}, bytes.size() / 2, bytes.size() - 1}) {
    write_bytes(path, {bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(keep)});
    EXPECT_THROW(read_checkpoint(path), Error) << keep;
  }
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  write_bytes(path, flipped);
  EXPECT_THROW(read_checkpoint(path), Error);
  auto version = bytes;
  version[4] = 9;
  write_bytes(path, version);
  try {
    read_checkpoint(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(Checkpoint, ShapeMismatchNamesParameter) {
  const auto docs = toy_corpus(5);
  auto t = make_trainer(docs, toy_train(2));
  const auto path = temp_path("shape.dnmt");
  t->save(path);
  auto wider = t->model().config();
  wider.encoder.d_model = wider.decoder.d_model = 32;
  try {
    load_model<float>(path, wider);
    FAIL();
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("parameter "), std::string::npos) << msg;
    EXPECT_NE(msg.find("16] but model expects"), std::string::npos) << msg;
  }
  EXPECT_THROW(load_model<double>(path), ShapeError);
}

TEST(Checkpoint, ResumeReproducesUninterruptedRun) {
  const auto docs = toy_corpus(30);
  auto cfg = toy_train(24);
  auto full = make_trainer(docs, cfg);
  std::vector<double> expected;
  while (!full->finished()) expected.push_back(full->step().loss);

  auto first = make_trainer(docs, cfg);
  for (int i = 0; i < 13; ++i) first->step();
  const auto path = temp_path("resume.dnmt");
  first->save(path);
  auto resumed = Trainer<float>::resume(path, docs);
  EXPECT_EQ(resumed->steps_done(), 13);
  for (std::size_t i = 13; i < expected.size(); ++i) {
    ASSERT_EQ(resumed->step().loss, expected[i]) << "step " << i + 1;
  }
  for (const auto& [name, p] : full->model().params().all()) {
    const auto q = resumed->model().params().get(name);
    ASSERT_TRUE(std::equal(p.data().begin(), p.data().end(), q.data().begin())) << name;
  }
}

TEST(Checkpoint, PeriodicCheckpointsAreWritten) {
  const auto docs = toy_corpus(10);
  auto cfg = toy_train(6);
  cfg.checkpoint_interval = 3;
  auto t = make_trainer(docs, cfg);
  const auto dir = temp_path("periodic");
  fs::remove_all(dir);
  TrainOutputs out;
  out.checkpoint_dir = dir;
  t->run(out);
  EXPECT_TRUE(fs::exists(dir / "step-3.dnmt"));
  EXPECT_TRUE(fs::exists(dir / "step-6.dnmt"));
  EXPECT_TRUE(fs::exists(dir / "last.dnmt"));
  EXPECT_EQ(file_bytes(dir / "step-6.dnmt"), file_bytes(dir / "last.dnmt"));
}
