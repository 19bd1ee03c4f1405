// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dnmt/corpus/synthetic.hpp"
#include "dnmt/evaluation/analysis.hpp"
#include "dnmt/evaluation/bleu.hpp"
#include "dnmt/evaluation/contrastive.hpp"
#include "dnmt/inference/translate.hpp"
#include "dnmt/model/model.hpp"
#include "dnmt/training/trainer.hpp"
#include "support/decoder_oracle.hpp"
#include "support/encoder_oracle.hpp"
#include "support/fixtures.hpp"
#include "support/micro_model.hpp"
#include "support/primitive_checks.hpp"
#include "support/reference.hpp"
#include "support/search_oracle.hpp"

using namespace dnmt;
using numerics::Tensor;
using numerics::TokenId;
namespace fs = std::filesystem;
namespace ref = dnmt::testing::ref;
namespace tst = dnmt::testing;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
  void note(const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<corpus::Document> side(const std::vector<corpus::DocumentPair>& pairs, bool source) {
  std::vector<corpus::Document> out;
  for (const auto& p : pairs) out.push_back(source ? p.source : p.target);
  return out;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "dnmt_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---- 1 ----

Verdict gradient_integrity() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  for (const auto& c : tst::check_every_primitive()) {
    worst = std::max(worst, c.result.relative_error);
    v.require(c.result.relative_error < 1e-5 && c.result.checked > 0, c.name + " failed");
  }
  const auto micro = tst::micro_model_grad_check();
  v.require(micro.finite_difference.relative_error < 1e-5, "micro-model relative error " +
                                                               fmt("%.3g", micro.finite_difference.relative_error));
  v.require(micro.library_vs_frozen < 1e-12, "library gradient differs from frozen-memory objective");
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  v.require(secs < 120, "took " + fmt("%.1f", secs) + " s");
  v.note("primitives max rel err " + fmt("%.2e", worst) + ", micro-model " +
         fmt("%.2e", micro.finite_difference.relative_error) + " over " +
         std::to_string(micro.finite_difference.checked) + " coordinates, " + fmt("%.1f", secs) +
         " s");
  return v;
}

// ---- 2 ----

Verdict attention_reduction() {
  Verdict v;
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto cfg = tst::micro_config(16, 4, 2);
    model::Model<float> m(cfg, seed);
    tst::randomize(m.params(), seed + 500, 0.5f);
    tst::fill(m.params(), "enc.global.gamma_k", 0.0f);
    tst::fill(m.params(), "enc.global.gamma_v", 0.0f);
    std::mt19937_64 rng(seed + 100);
    std::uniform_int_distribution<std::size_t> n_sents(2, 5), len(1, 6);
    std::vector<std::size_t> lens(n_sents(rng));
    for (auto& l : lens) l = len(rng);
    auto in = tst::random_source(lens, cfg.src_vocab_size, rng);
    auto h = tst::random_states<float>(in.num_tokens(), 16, rng);
    model::ForwardContext ctx;
    auto out = m.encoder().segment_relative_attention(h, in, ctx);
    auto expect =
        tst::segment_attention_oracle(m.params(), cfg.encoder, ref::to_mat(h), in.segments, false);
    worst = std::max(worst, ref::max_abs_diff(ref::to_mat(out.h_global), expect));
  }
  v.require(worst < 1e-5, "max deviation " + fmt("%.3g", worst));
  v.note("50 seeds, max |diff| " + fmt("%.2e", worst));
  return v;
}

// ---- 3 ----

Verdict recurrence_equivalence() {
  Verdict v;
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto cfg = tst::micro_config(16, 2, 2, 14);
    model::Model<float> m(cfg, seed);
    tst::randomize(m.params(), seed + 1000, 0.3f);
    std::mt19937_64 rng(seed);
    std::vector<std::vector<TokenId>> inputs;
    std::vector<Tensor<float>> sources;
    std::vector<ref::Mat> source_mats;
    std::uniform_int_distribution<std::size_t> len(1, 5);
    for (int k = 0; k < 3; ++k) {
      auto t = tst::random_target(len(rng), 14, rng);
      inputs.emplace_back(t.begin(), t.end() - 1);
      sources.push_back(tst::random_states<float>(len(rng), 16, rng));
      source_mats.push_back(ref::to_mat(sources.back()));
    }
    model::ForwardContext ctx;
    model::DecoderMemory<float> memory;
    ref::Mat cached;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      auto r = m.decoder().decode_teacher_forced(inputs[k], sources[k], memory, ctx);
      for (auto& row : ref::to_mat(r.logits)) cached.push_back(row);
      memory = m.decoder().advance_memory(memory, r.layer_inputs, 1);
    }
    auto joint = ref::joint_decoder_logits(m.params(), cfg.decoder, cfg.layer_norm_eps, inputs,
                                           source_mats);
    worst = std::max(worst, ref::max_abs_diff(cached, joint));
  }
  v.require(worst < 1e-5, "max deviation " + fmt("%.3g", worst));
  v.note("20 seeds, max |diff| " + fmt("%.2e", worst));
  return v;
}

// ---- 4 ----

std::vector<corpus::DocumentPair> small_corpus(std::size_t docs, std::uint64_t seed) {
  corpus::SyntheticOptions o;
  o.num_docs = docs;
  o.sents_per_doc = 3;
  o.sent_len = 4;
  o.vocab_size = 8;
  o.seed = seed;
  return corpus::make_synthetic_task(o).pairs;
}

Verdict unified_degeneracy() {
  Verdict v;
  std::size_t docs_checked = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto cfg = tst::micro_config(8, 2, 3);
    model::Model<float> m(cfg, seed + 21);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> len(1, 8);
    auto in = tst::random_source({len(rng)}, cfg.src_vocab_size, rng);
    model::ForwardContext ctx;
    const auto local = m.encoder().local_encode(m.encoder().embed_source(in), in, ctx);
    auto same = [&](const Tensor<float>& a) {
      return a.shape() == local.shape() &&
             std::equal(a.data().begin(), a.data().end(), local.data().begin());
    };
    const auto before = m.encoder().encode_document(in, ctx);
    v.require(same(before.h) && !before.global_active(), "1-sentence encoding differs from local");
    for (const auto& [name, t] : m.params().all()) {
      if (name.rfind("enc.global", 0) == 0 || name.rfind("enc.fuse", 0) == 0) {
        auto w = t;
        for (auto& x : w.mutable_data()) x = x * 3.0f + 1.0f;
      }
    }
    v.require(same(m.encoder().encode_document(in, ctx).h),
              "1-sentence encoding moved under global-layer perturbation");
    ++docs_checked;
  }

  const auto docs = small_corpus(20, 5);
  training::TrainConfig tc;
  tc.token_budget = 64;
  tc.warmup_steps = 100;
  tc.seed = 3;
  tc.max_steps = 30;
  tc.checkpoint_interval = 0;
  tc.doc_split = 1;
  auto sc = tc;
  sc.sentence_level = true;
  auto mc = tst::micro_config(16, 2, 1);
  mc.encoder.dropout = mc.decoder.dropout = 0.1;
  const auto sv = corpus::Vocabulary::build(side(docs, true), 1);
  const auto tv = corpus::Vocabulary::build(side(docs, false), 1);
  training::Trainer<double> a(mc, tc, sv, tv, docs), b(mc, sc, sv, tv, docs);
  double worst = 0;
  while (!a.finished()) worst = std::max(worst, std::abs(a.step().loss - b.step().loss));
  v.require(worst < 1e-6, "doc_split=1 loss deviates by " + fmt("%.3g", worst));
  v.note(std::to_string(docs_checked) + " single-sentence documents bitwise local; " +
         std::to_string(a.steps_done()) + " steps doc_split=1 vs sentence path max |dloss| " +
         fmt("%.2e", worst));
  return v;
}

// ---- 5, 6, 9 share one trained model ----

struct TrainedRun {
  std::unique_ptr<training::Trainer<float>> trainer;
  corpus::SyntheticTask heldout;
  double seconds = 0;
};

corpus::SyntheticOptions context_task_options(std::size_t docs, std::uint64_t seed) {
  corpus::SyntheticOptions o;
  o.num_docs = docs;
  o.sents_per_doc = 6;
  o.ambiguity_rate = 0.3;
  o.seed = seed;
  return o;
}

model::ModelConfig context_model() {
  model::ModelConfig c;
  c.encoder.d_model = c.decoder.d_model = 64;
  c.encoder.d_ffn = c.decoder.d_ffn = 128;
  c.encoder.n_layers = c.decoder.n_layers = 2;
  c.encoder.n_heads = c.decoder.n_heads = 4;
  return c;
}

TrainedRun& trained_run() {
  static std::unique_ptr<TrainedRun> run;
  if (run) return *run;
  run = std::make_unique<TrainedRun>();
  const auto task = corpus::make_synthetic_task(context_task_options(200, 7));
  run->heldout = corpus::make_synthetic_task(context_task_options(60, 1007));
  training::TrainConfig tc;
  tc.token_budget = 512;
  tc.warmup_steps = 200;
  tc.lr_scale = 0.5;
  tc.max_steps = 1500;
  tc.seed = 7;
  tc.checkpoint_interval = 0;
  const auto t0 = std::chrono::steady_clock::now();
  run->trainer = std::make_unique<training::Trainer<float>>(
      context_model(), tc, corpus::Vocabulary::build(side(task.pairs, true), 1),
      corpus::Vocabulary::build(side(task.pairs, false), 1), task.pairs);
  run->trainer->run();
  run->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return *run;
}

Verdict context_matters() {
  Verdict v;
  auto& run = trained_run();
  const auto& t = *run.trainer;
  evaluation::AblationOptions opts;
  opts.beam = inference::BeamOptions{5, 0.6, 0};
  const std::vector<std::optional<std::size_t>> contexts{0, 1, 2, 3, std::nullopt};
  const auto rows = evaluation::context_ablation(t.model(), t.src_vocab(), t.tgt_vocab(),
                                                 run.heldout.pairs, run.heldout.sites, contexts,
                                                 opts);
  std::string table;
  for (const auto& r : rows) {
    table += (r.context ? std::to_string(*r.context) : std::string("full")) + "=" +
             fmt("%.3f", r.ambiguous_token_accuracy) + " ";
  }
  const double full = rows.back().ambiguous_token_accuracy;
  const double c0 = rows.front().ambiguous_token_accuracy;
  v.require(run.seconds <= 15 * 60, "training took " + fmt("%.0f", run.seconds) + " s");
  v.require(full >= 0.95, "full-context accuracy " + fmt("%.3f", full));
  v.require(c0 <= 0.60, "c=0 accuracy " + fmt("%.3f", c0));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    v.require(rows[i].ambiguous_token_accuracy >= rows[i - 1].ambiguous_token_accuracy - 0.02,
              "ablation not monotone at row " + std::to_string(i));
  }
  v.note(std::to_string(t.steps_done()) + " steps in " + fmt("%.0f", run.seconds) +
         " s; accuracy " + table + "; full-context BLEU " + fmt("%.1f", rows.back().bleu));
  return v;
}

Verdict contrastive_mechanism() {
  Verdict v;
  auto& run = trained_run();
  const auto& t = *run.trainer;
  const auto trained_suite = evaluation::make_topic_flip_suite(run.heldout);
  const auto trained = evaluation::contrastive_score(t.model(), t.src_vocab(), t.tgt_vocab(),
                                                     trained_suite);
  v.require(trained.accuracy >= 0.95, "trained accuracy " + fmt("%.3f", trained.accuracy));

  auto big = evaluation::make_topic_flip_suite(
      corpus::make_synthetic_task(context_task_options(520, 2007)));
  if (big.size() < 500) {
    v.require(false, "suite has only " + std::to_string(big.size()) + " groups");
    return v;
  }
  big.resize(500);
  auto cfg = context_model();
  cfg.src_vocab_size = t.src_vocab().size();
  cfg.tgt_vocab_size = t.tgt_vocab().size();
  model::Model<float> untrained(cfg, 7);
  const auto chance =
      evaluation::contrastive_score(untrained, t.src_vocab(), t.tgt_vocab(), big);
  v.require(std::abs(chance.accuracy - 0.5) <= 0.05,
            "untrained accuracy " + fmt("%.3f", chance.accuracy));
  v.note("trained " + fmt("%.3f", trained.accuracy) + " on " + std::to_string(trained.total) +
         " groups; untrained " + fmt("%.3f", chance.accuracy) + " on " +
         std::to_string(chance.total) + " groups");
  return v;
}

// ---- 7 ----

corpus::Sentence toks(const std::string& s) {
  std::istringstream in(s);
  corpus::Sentence out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

Verdict bleu_correctness() {
  Verdict v;
  const std::vector<corpus::Sentence> ident{toks("a b c d e"), toks("the cat is on the mat")};
  v.require(evaluation::corpus_bleu(ident, ident).score == 100.0, "identity is not 100");

  const auto clip =
      evaluation::corpus_bleu({toks("the the the the the the the")}, {toks("the cat is on the mat")});
  v.require(clip.matches[0] == 2 && clip.totals[0] == 7 && clip.precision(1) == 2.0 / 7.0,
            "clipped unigram precision is not 2/7");

  const std::vector<corpus::Document> hyp{corpus::Document{{toks("a b c"), toks("d e f")}}};
  const std::vector<corpus::Document> refs{corpus::Document{{toks("a b"), toks("c d e f")}}};
  const auto sent = evaluation::sentence_bleu_of_documents(hyp, refs);
  const auto doc = evaluation::doc_bleu(hyp, refs);
  v.require(sent.matches == std::vector<std::size_t>{5, 3, 1, 0} &&
                sent.totals == std::vector<std::size_t>{6, 4, 2, 0} && sent.score == 0.0,
            "sentence-aligned counts wrong");
  v.require(doc.matches == std::vector<std::size_t>{6, 5, 4, 3} &&
                doc.totals == std::vector<std::size_t>{6, 5, 4, 3} && doc.score == 100.0,
            "document-level counts wrong");
  v.note("identity 100, clipped precision 2/7, boundary case sentence-level " +
         fmt("%.1f", sent.score) + " vs document-level " + fmt("%.1f", doc.score));
  return v;
}

// ---- 8 ----

Verdict decoding() {
  Verdict v;
  std::size_t greedy_ok = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto cfg = tst::micro_config(8, 2, 2, 9);
    model::Model<float> m(cfg, seed);
    tst::randomize(m.params(), seed + 50, 0.8f);
    std::mt19937_64 rng(seed);
    auto src = tst::random_rows<float>(3, 8, rng);
    auto mem = seed % 2 ? tst::random_memory(m, 2, rng) : model::DecoderMemory<float>{};
    inference::DecoderScorer<float> scorer(m.decoder(), src, mem);
    const auto g = inference::greedy_search(scorer, 8);
    const auto b = inference::beam_search_sentence(m, src, mem, inference::BeamOptions{1, 0.6, 8});
    auto expect = g.tokens;
    if (g.finished) expect.pop_back();
    if (b.tokens == expect && b.finished == g.finished) ++greedy_ok;
  }
  v.require(greedy_ok == 100, "width 1 differs from greedy on " +
                                  std::to_string(100 - greedy_ok) + " models");

  std::size_t exhaustive_ok = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    tst::TableScorer scorer(5, seed);  // pad, bos, eos and two word types
    const auto [tokens, score] = tst::exhaustive_best(scorer, 5, 2, 0.6);
    const auto hyp = inference::beam_search(scorer, inference::BeamOptions{5, 0.6, 2});
    if (hyp.finished && hyp.tokens == tokens && std::abs(hyp.score(0.6) - score) < 1e-12) {
      ++exhaustive_ok;
    }
  }
  v.require(exhaustive_ok == 200, "beam differs from exhaustive search on " +
                                      std::to_string(200 - exhaustive_ok) + " instances");

  double worst = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto cfg = tst::micro_config(8, 2, 2, 10);
    model::Model<float> m(cfg, seed);
    tst::randomize(m.params(), seed + 9, 0.6f);
    std::mt19937_64 rng(seed);
    auto src = tst::random_rows<float>(4, 8, rng);
    auto mem = tst::random_memory(m, 3, rng);
    const auto b = inference::beam_search_sentence(m, src, mem, inference::BeamOptions{5, 0.6, 10});
    worst = std::max(worst, std::abs(b.log_prob - inference::rescore_sentence(m, src, mem, b.tokens,
                                                                              b.finished)));
  }
  v.require(worst < 1e-4, "rescoring deviates by " + fmt("%.3g", worst));
  v.note("greedy " + std::to_string(greedy_ok) + "/100, exhaustive " +
         std::to_string(exhaustive_ok) + "/200, rescoring max |diff| " + fmt("%.2e", worst));
  return v;
}

// ---- 9 ----

double worst_row_error(const evaluation::AttentionSummary& s) {
  double worst = 0;
  auto check = [&](const std::vector<std::vector<double>>& m) {
    for (const auto& row : m) {
      double sum = 0;
      for (double x : row) sum += x;
      worst = std::max(worst, std::abs(sum - 1.0));
    }
  };
  check(s.matrix);
  for (const auto& h : s.per_head) check(h);
  return worst;
}

Verdict attention_summary() {
  Verdict v;
  auto& run = trained_run();
  const auto& t = *run.trainer;
  double worst = 0;
  std::size_t docs = 0;
  for (const auto& pair : run.heldout.pairs) {
    const auto input = evaluation::encode_source(t.src_vocab(), pair.source);
    worst = std::max(worst, worst_row_error(evaluation::attention_summary(t.model(), input)));
    ++docs;
  }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto cfg = tst::micro_config(8, 2, 2, 12);
    model::Model<double> m(cfg, seed);
    tst::randomize(m.params(), seed + 3, 0.8);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> n(2, 6), len(1, 7);
    std::vector<std::size_t> lens(n(rng));
    for (auto& l : lens) l = len(rng);
    worst = std::max(worst, worst_row_error(evaluation::attention_summary(
                                m, tst::random_source(lens, 12, rng))));
    ++docs;
  }
  v.require(worst < 1e-6, "row sums deviate by " + fmt("%.3g", worst));

  double uniform_err = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto cfg = tst::micro_config(8, 2, 2, 12);
    model::Model<double> m(cfg, seed);
    tst::randomize(m.params(), seed + 4, 0.5);
    tst::fill(m.params(), "enc.global.attn.wq", 0.0);
    std::mt19937_64 rng(seed + 5);
    std::uniform_int_distribution<std::size_t> n(2, 5), len(1, 6);
    std::vector<std::size_t> lens(n(rng));
    double total = 0;
    for (auto& l : lens) total += static_cast<double>(l = len(rng));
    const auto s = evaluation::attention_summary(m, tst::random_source(lens, 12, rng));
    for (const auto& row : s.matrix) {
      for (std::size_t c = 0; c < lens.size(); ++c) {
        uniform_err = std::max(uniform_err, std::abs(row[c] - static_cast<double>(lens[c]) / total));
      }
    }
  }
  v.require(uniform_err < 1e-6, "uniform model deviates by " + fmt("%.3g", uniform_err));
  v.note(std::to_string(docs) + " documents, max row-sum error " + fmt("%.2e", worst) +
         ", uniform closed form max |diff| " + fmt("%.2e", uniform_err));
  return v;
}

// ---- 10 ----

Verdict reproducibility() {
  Verdict v;
  const auto docs = small_corpus(40, 11);
  auto mc = tst::micro_config(16, 2, 2);
  mc.encoder.dropout = mc.decoder.dropout = 0.1;
  training::TrainConfig tc;
  tc.token_budget = 96;
  tc.warmup_steps = 50;
  tc.seed = 17;
  tc.max_steps = 100;
  tc.checkpoint_interval = 0;
  const auto sv = corpus::Vocabulary::build(side(docs, true), 1);
  const auto tv = corpus::Vocabulary::build(side(docs, false), 1);
  const auto dir = scratch("reproducibility");

  auto train_to_end = [&](const fs::path& out) {
    training::Trainer<float> t(mc, tc, sv, tv, docs);
    t.run();
    t.save(out);
    return t.steps_done();
  };
  const auto steps = train_to_end(dir / "a.dnmt");
  train_to_end(dir / "b.dnmt");
  const auto a = slurp(dir / "a.dnmt");
  v.require(steps == 100, "ran " + std::to_string(steps) + " steps");
  v.require(!a.empty() && a == slurp(dir / "b.dnmt"), "same-seed checkpoints differ");

  {
    training::Trainer<float> first(mc, tc, sv, tv, docs);
    for (int i = 0; i < 37; ++i) first.step();
    first.save(dir / "mid.dnmt");
  }
  auto resumed = training::Trainer<float>::resume(dir / "mid.dnmt", docs);
  resumed->run();
  resumed->save(dir / "resumed.dnmt");
  v.require(a == slurp(dir / "resumed.dnmt"), "resumed run differs from uninterrupted run");
  v.note("two 100-step runs and a run resumed at step 37 give byte-identical checkpoints (" +
         std::to_string(a.size()) + " bytes)");
  return v;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> check;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient integrity", gradient_integrity},
      {2, "attention reduction oracle", attention_reduction},
      {3, "recurrence equivalence", recurrence_equivalence},
      {4, "unified-model degeneracy", unified_degeneracy},
      {5, "context matters", context_matters},
      {6, "contrastive mechanism", contrastive_mechanism},
      {7, "BLEU correctness", bleu_correctness},
      {8, "decoding", decoding},
      {9, "attention summary", attention_summary},
      {10, "reproducibility", reproducibility},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    if (!v.pass) ++failed;
    std::printf("%s %d %s: %s\n", v.pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
