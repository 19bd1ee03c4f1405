#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "json.hpp"

#include "dnmt/corpus/synthetic.hpp"
#include "dnmt/error.hpp"
#include "dnmt/evaluation/analysis.hpp"
#include "dnmt/evaluation/bleu.hpp"
#include "dnmt/evaluation/contrastive.hpp"
#include "dnmt/inference/translate.hpp"
#include "support/fixtures.hpp"

using namespace dnmt;
using namespace dnmt::evaluation;
using corpus::Sentence;
namespace tst = dnmt::testing;

namespace {

Sentence toks(const std::string& s) {
  std::istringstream in(s);
  Sentence out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

Document doc(std::initializer_list<const char*> sents) {
  Document d;
  for (const char* s : sents) d.sentences.push_back(toks(s));
  return d;
}

corpus::SyntheticTask small_task(std::size_t docs, std::uint64_t seed = 2) {
  corpus::SyntheticOptions o;
  o.num_docs = docs;
  o.sents_per_doc = 3;
  o.sent_len = 4;
  o.vocab_size = 8;
  o.seed = seed;
  return corpus::make_synthetic_task(o);
}

std::vector<corpus::Document> sides(const std::vector<corpus::DocumentPair>& pairs, bool source) {
  std::vector<corpus::Document> out;
  for (const auto& p : pairs) out.push_back(source ? p.source : p.target);
  return out;
}

}  // namespace

TEST(Bleu, IdentityIsOneHundred) {
  const std::vector<Sentence> s{toks("a b c d e"), toks("the cat is on the mat")};
  EXPECT_DOUBLE_EQ(corpus_bleu(s, s).score, 100.0);
}

TEST(Bleu, ClippedUnigramPrecision) {
  const auto r = corpus_bleu({toks("the the the the the the the")}, {toks("the cat is on the mat")});
  EXPECT_EQ(r.matches[0], 2u);
  EXPECT_EQ(r.totals[0], 7u);
  EXPECT_DOUBLE_EQ(r.precision(1), 2.0 / 7.0);
  EXPECT_EQ(r.score, 0.0);  // no bigram matches
}

TEST(Bleu, EmptyHypothesisScoresZero) {
  const auto r = corpus_bleu({Sentence{}}, {toks("a b c")});
  EXPECT_EQ(r.score, 0.0);
  EXPECT_EQ(r.hyp_length, 0u);
}

TEST(Bleu, EmptyReferenceAndMismatchedCountsRejected) {
  EXPECT_THROW(corpus_bleu({toks("a")}, {Sentence{}}), ContractError);
  EXPECT_THROW(corpus_bleu({toks("a"), toks("b")}, {toks("a")}), ContractError);
}

TEST(Bleu, HandCountedPrecisionsAndSmoothing) {
  // the cat sat on the mat / the cat is on the mat
  // 1-grams 5/6, 2-grams 3/5, 3-grams 1/4, 4-grams 0/3.
  const auto hyp = toks("the cat sat on the mat"), ref = toks("the cat is on the mat");
  const auto plain = corpus_bleu({hyp}, {ref});
  EXPECT_EQ(plain.matches, (std::vector<std::size_t>{5, 3, 1, 0}));
  EXPECT_EQ(plain.totals, (std::vector<std::size_t>{6, 5, 4, 3}));
  EXPECT_EQ(plain.score, 0.0);
  const auto smooth = corpus_bleu({hyp}, {ref}, 4, true);
  const double expect = 100.0 * std::pow(5.0 / 6 * 4.0 / 6 * 2.0 / 5 * 1.0 / 4, 0.25);
  EXPECT_NEAR(smooth.score, expect, 1e-12);
}

TEST(Bleu, BrevityPenalty) {
  const auto r = corpus_bleu({toks("the cat")}, {toks("the cat is on the mat")}, 2);
  EXPECT_NEAR(r.brevity_penalty, std::exp(1.0 - 6.0 / 2.0), 1e-15);
  EXPECT_NEAR(r.score, 100.0 * std::exp(-2.0), 1e-12);
}

TEST(Bleu, PermutationInvariant) {
  std::vector<Sentence> h{toks("a b c d"), toks("x y z"), toks("p q r s t")};
  std::vector<Sentence> g{toks("a b c e"), toks("x y z w"), toks("p q r s")};
  const double s = corpus_bleu(h, g).score;
  std::swap(h[0], h[2]);
  std::swap(g[0], g[2]);
  EXPECT_DOUBLE_EQ(corpus_bleu(h, g).score, s);
}

TEST(DocBleu, BoundarySpanningNgrams) {
  // Sentence-aligned: (a b c | a b) and (d e f | c d e f) give 1-grams 5/6,
  // 2-grams 3/4, 3-grams 1/2 and no 4-grams at all, so BLEU is 0.
  // Concatenated, both sides read "a b c d e f": every order matches.
  const std::vector<Document> hyp{doc({"a b c", "d e f"})};
  const std::vector<Document> ref{doc({"a b", "c d e f"})};
  const auto sent = sentence_bleu_of_documents(hyp, ref);
  EXPECT_EQ(sent.matches, (std::vector<std::size_t>{5, 3, 1, 0}));
  EXPECT_EQ(sent.totals, (std::vector<std::size_t>{6, 4, 2, 0}));
  EXPECT_EQ(sent.score, 0.0);
  const auto d = doc_bleu(hyp, ref);
  EXPECT_EQ(d.matches, (std::vector<std::size_t>{6, 5, 4, 3}));
  EXPECT_DOUBLE_EQ(d.score, 100.0);
}

TEST(DocBleu, EqualsCorpusBleuForSingleSentenceDocuments) {
  const std::vector<Document> hyp{doc({"a b c d"}), doc({"the cat sat on the mat"})};
  const std::vector<Document> ref{doc({"a b c e"}), doc({"the cat is on the mat"})};
  EXPECT_DOUBLE_EQ(doc_bleu(hyp, ref, 4, true).score,
                   corpus_bleu({toks("a b c d"), toks("the cat sat on the mat")},
                               {toks("a b c e"), toks("the cat is on the mat")}, 4, true)
                       .score);
  EXPECT_DOUBLE_EQ(doc_bleu(hyp, hyp).score, 100.0);
}

TEST(ContrastiveSuite, JsonRoundTrip) {
  const auto task = small_task(10);
  const auto suite = make_topic_flip_suite(task);
  ASSERT_FALSE(suite.empty());
  const auto back = parse_contrastive_suite(format_contrastive_suite(suite));
  ASSERT_EQ(back.size(), suite.size());
  for (std::size_t i = 0; i < suite.size(); ++i) {
    EXPECT_EQ(back[i].source, suite[i].source);
    EXPECT_EQ(back[i].positive, suite[i].positive);
    EXPECT_EQ(back[i].negatives, suite[i].negatives);
  }
}

TEST(ContrastiveSuite, RejectsMalformedGroups) {
  EXPECT_THROW(parse_contrastive_suite("{"), ContractError);
  EXPECT_THROW(parse_contrastive_suite("{}"), ContractError);
  EXPECT_THROW(parse_contrastive_suite(R"([{"source":["a"],"positive":["b"],"negatives":[]}])"),
               ContractError);
  EXPECT_THROW(
      parse_contrastive_suite(R"([{"source":["a","b"],"positive":["b"],"negatives":[["c"]]}])"),
      ContractError);
  EXPECT_THROW(
      parse_contrastive_suite(R"([{"source":["a"],"positive":["b"],"negatives":[["c","d"]]}])"),
      ContractError);
}

TEST(ContrastiveSuite, TopicFlipChangesOnlyAmbiguousTokens) {
  const auto task = small_task(40);
  const auto suite = make_topic_flip_suite(task);
  std::size_t flipped = 0;
  for (const auto& g : suite) {
    ASSERT_EQ(g.negatives.size(), 1u);
    const auto& neg = g.negatives[0];
    bool any = false;
    for (std::size_t k = 0; k < g.positive.size(); ++k) {
      for (std::size_t t = 0; t < g.positive.sentences[k].size(); ++t) {
        const auto& p = g.positive.sentences[k][t];
        const auto& n = neg.sentences[k][t];
        if (p != n) {
          any = true;
          ++flipped;
          EXPECT_EQ(corpus::flip_ambiguous_translation(p), n);
        }
      }
    }
    EXPECT_TRUE(any);
  }
  EXPECT_EQ(flipped, task.sites.size());
}

TEST(ContrastiveAccuracy, TiesCountAsIncorrect) {
  const auto suite = make_topic_flip_suite(small_task(20));
  const auto r = contrastive_accuracy(suite, [](const Document&, const Document&) { return -1.0; });
  EXPECT_EQ(r.correct, 0u);
  EXPECT_EQ(r.accuracy, 0.0);
}

TEST(ContrastiveAccuracy, PositiveAsItsOwnNegativeTies) {
  const auto task = small_task(10);
  auto suite = make_topic_flip_suite(task);
  for (auto& g : suite) g.negatives = {g.positive};
  const auto src = corpus::Vocabulary::build(sides(task.pairs, true), 1);
  const auto tgt = corpus::Vocabulary::build(sides(task.pairs, false), 1);
  auto cfg = tst::micro_config(8, 2, 2);
  cfg.src_vocab_size = src.size();
  cfg.tgt_vocab_size = tgt.size();
  model::Model<float> m(cfg, 3);
  EXPECT_EQ(contrastive_score(m, src, tgt, suite).accuracy, 0.0);
}

TEST(ContrastiveAccuracy, ZeroOutputLayerTiesEverything) {
  const auto task = small_task(20);
  const auto suite = make_topic_flip_suite(task);
  const auto src = corpus::Vocabulary::build(sides(task.pairs, true), 1);
  const auto tgt = corpus::Vocabulary::build(sides(task.pairs, false), 1);
  auto cfg = tst::micro_config(8, 2, 2);
  cfg.src_vocab_size = src.size();
  cfg.tgt_vocab_size = tgt.size();
  model::Model<float> m(cfg, 3);
  tst::fill(m.params(), "dec.embed", 0.0f);
  const auto r = contrastive_score(m, src, tgt, suite, 2);
  EXPECT_EQ(r.accuracy, 0.0);
  for (const auto& s : r.scores) EXPECT_EQ(s[0], s[1]);
}

TEST(ContrastiveAccuracy, RandomScorerIsNearChance) {
  const auto suite = make_topic_flip_suite(small_task(1400, 6));
  ASSERT_GE(suite.size(), 1000u);
  const std::vector<ContrastiveGroup> groups(suite.begin(), suite.begin() + 1000);
  std::mt19937_64 rng(21);
  std::mutex mu;
  const auto r = contrastive_accuracy(groups, [&](const Document&, const Document&) {
    std::lock_guard<std::mutex> lock(mu);
    return std::uniform_real_distribution<double>(0, 1)(rng);
  });
  EXPECT_NEAR(r.accuracy, 0.5, 0.05);
}

TEST(ContrastiveAccuracy, DocumentLogProbChainsMemory) {
  const auto task = small_task(3);
  const auto src = corpus::Vocabulary::build(sides(task.pairs, true), 1);
  const auto tgt = corpus::Vocabulary::build(sides(task.pairs, false), 1);
  auto cfg = tst::micro_config(8, 2, 2);
  cfg.src_vocab_size = src.size();
  cfg.tgt_vocab_size = tgt.size();
  model::Model<double> m(cfg, 5);
  tst::randomize(m.params(), 6, 0.4);
  const auto& pair = task.pairs[0];
  const auto input = encode_source(src, pair.source);
  model::ForwardContext ctx;
  const auto enc = m.encoder().encode_document(input, ctx);
  model::DecoderMemory<double> mem;
  double expect = 0;
  for (std::size_t k = 0; k < pair.target.size(); ++k) {
    const auto h = model::sentence_rows(enc.h, input, k);
    const auto ids = tgt.encode(pair.target.sentences[k]);
    expect += inference::rescore_sentence(m, h, mem, ids);
    std::vector<TokenId> in{corpus::kBosId};
    in.insert(in.end(), ids.begin(), ids.end());
    mem = m.decoder().advance_memory(mem, m.decoder().decode_teacher_forced(in, h, mem, ctx).layer_inputs, 1);
  }
  EXPECT_NEAR(document_log_prob(m, src, tgt, pair.source, pair.target), expect, 1e-9);
}

TEST(AttentionSummary, RowsAreStochasticPerHead) {
  auto cfg = tst::micro_config(8, 2, 2, 12);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    model::Model<double> m(cfg, seed);
    std::mt19937_64 rng(seed);
    const auto src = tst::random_source({3, 1, 4, 2}, 12, rng);
    const auto s = attention_summary(m, src);
    ASSERT_EQ(s.matrix.size(), 4u);
    ASSERT_EQ(s.per_head.size(), 2u);
    for (const auto& head : s.per_head) {
      for (const auto& row : head) {
        double sum = 0;
        for (double v : row) sum += v;
        EXPECT_NEAR(sum, 1.0, 1e-6);
      }
    }
    for (const auto& row : s.matrix) {
      double sum = 0;
      for (double v : row) sum += v;
      EXPECT_NEAR(sum, 1.0, 1e-6);
    }
  }
}

TEST(AttentionSummary, UniformAttentionGivesTokenShares) {
  auto cfg = tst::micro_config(8, 2, 2, 12);
  model::Model<double> m(cfg, 3);
  tst::randomize(m.params(), 4, 0.5);
  tst::fill(m.params(), "enc.global.attn.wq", 0.0);
  std::mt19937_64 rng(5);
  const std::vector<std::size_t> lens{2, 5, 3};
  const auto src = tst::random_source(lens, 12, rng);
  const auto s = attention_summary(m, src);
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(s.matrix[k][c], lens[c] / 10.0, 1e-6);
  }
}

TEST(AttentionSummary, SingleSentenceRejected) {
  auto cfg = tst::micro_config(8, 2, 2, 12);
  model::Model<double> m(cfg, 3);
  EXPECT_THROW(attention_summary(m, corpus::SourceInput::from_sentences({{4, 5, 6}})),
               ContractError);
  cfg.encoder.global_layer = false;
  model::Model<double> local(cfg, 3);
  EXPECT_THROW(attention_summary(local, corpus::SourceInput::from_sentences({{4, 5}, {6}})),
               ContractError);
}

TEST(AttentionSummary, CsvAndJsonExports) {
  AttentionSummary s;
  s.sentence_lengths = {2, 1};
  s.matrix = {{0.75, 0.25}, {0.5, 0.5}};
  s.per_head = {s.matrix};
  EXPECT_EQ(attention_csv(s), "sentence,0,1\n0,0.75,0.25\n1,0.5,0.5\n");
  const auto j = nlohmann::json::parse(attention_json(s, 7, doc({"a b", "c"})));
  EXPECT_EQ(j["document"], 7);
  EXPECT_EQ(j["sentence_lengths"], (std::vector<int>{2, 1}));
  EXPECT_EQ(j["source"][0], "a b");
}

TEST(AmbiguousAccuracy, CountsSitePositions) {
  std::vector<corpus::AmbiguousSite> sites{{0, 1, 0, "amb1", "amb1_A", "amb1_B"},
                                           {0, 1, 2, "amb2", "amb2_A", "amb2_B"},
                                           {1, 0, 1, "amb1", "amb1_B", "amb1_A"},
                                           {1, 1, 5, "amb3", "amb3_B", "amb3_A"}};
  const std::vector<Document> hyps{doc({"x", "amb1_A v2 amb2_B"}), doc({"v1 amb1_B", "v3"})};
  EXPECT_DOUBLE_EQ(ambiguous_token_accuracy(hyps, sites), 0.5);
  EXPECT_THROW(ambiguous_token_accuracy(hyps, {}), ContractError);
}

TEST(ContextAblation, ZeroContextEqualsFullOnSingleSentences) {
  auto task = small_task(6);
  const auto src = corpus::Vocabulary::build(sides(task.pairs, true), 1);
  const auto tgt = corpus::Vocabulary::build(sides(task.pairs, false), 1);
  std::vector<corpus::DocumentPair> singles;
  for (const auto& p : task.pairs) {
    for (const auto& s : corpus::split_document(p, 1)) singles.push_back(s);
  }
  auto cfg = tst::micro_config(8, 2, 2);
  cfg.src_vocab_size = src.size();
  cfg.tgt_vocab_size = tgt.size();
  model::Model<float> m(cfg, 2);
  tst::randomize(m.params(), 3, 0.5);
  AblationOptions opts;
  opts.beam = inference::BeamOptions{2, 0.6, 0};
  const auto rows = context_ablation(m, src, tgt, singles, {}, {std::nullopt, 0, 1}, opts);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].bleu, rows[1].bleu);
  EXPECT_EQ(rows[0].bleu, rows[2].bleu);
  const auto csv = ablation_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "context_size,bleu,ambiguous_token_accuracy");
  EXPECT_NE(csv.find("\nfull,"), std::string::npos);
  EXPECT_NE(csv.find("\n0,"), std::string::npos);
}

TEST(ContextAblation, ZeroContextHidesTopic) {
  // With the global layer and memory off, a sentence translation can not
  // depend on anything outside the sentence.
  const auto task = small_task(8);
  const auto src = corpus::Vocabulary::build(sides(task.pairs, true), 1);
  const auto tgt = corpus::Vocabulary::build(sides(task.pairs, false), 1);
  auto cfg = tst::micro_config(8, 2, 2);
  cfg.src_vocab_size = src.size();
  cfg.tgt_vocab_size = tgt.size();
  cfg.encoder.segment_embedding = false;
  model::Model<float> m(cfg, 2);
  tst::randomize(m.params(), 3, 0.5);
  inference::TranslateOptions opts;
  opts.beam = inference::BeamOptions{2, 0.6, 0};
  opts.context_limit = 0;
  auto pair = task.pairs[0];
  const auto a = translate_corpus(m, src, tgt, {pair.source}, opts);
  pair.source.sentences[0] = task.pairs[1].source.sentences[0];
  const auto b = translate_corpus(m, src, tgt, {pair.source}, opts);
  for (std::size_t k = 1; k < a[0].size(); ++k) EXPECT_EQ(a[0].sentences[k], b[0].sentences[k]);
}
