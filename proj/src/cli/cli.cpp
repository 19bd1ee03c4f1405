#include "dnmt/cli/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "dnmt/corpus/document.hpp"
#include "dnmt/corpus/synthetic.hpp"
#include "dnmt/error.hpp"
#include "dnmt/evaluation/analysis.hpp"
#include "dnmt/evaluation/contrastive.hpp"
#include "dnmt/inference/translate.hpp"
#include "dnmt/training/trainer.hpp"

namespace dnmt::cli {

namespace fs = std::filesystem;
using Real = float;

util::KeyValues default_run_config() {
  util::KeyValues kv = model::ModelConfig{}.to_key_values();
  kv.merge(training::TrainConfig{}.to_key_values());
  kv.set("infer.beam_width", "5");
  kv.set("infer.length_penalty", "0.6");
  kv.set("infer.max_len", "0");
  kv.set("data.min_count", "1");
  kv.set("data.train_source", "");
  kv.set("data.train_target", "");
  kv.set("data.dev_source", "");
  kv.set("data.dev_target", "");
  return kv;
}

namespace {

// Vocabulary sizes come from the data, not from the user.
bool derived_key(const std::string& key) {
  return key == "model.src_vocab_size" || key == "model.tgt_vocab_size";
}

bool model_key(const std::string& key) {
  return key.rfind("encoder.", 0) == 0 || key.rfind("decoder.", 0) == 0 ||
         key.rfind("model.", 0) == 0;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  static const util::KeyValues schema = default_run_config();
  if (!schema.has(key) || derived_key(key)) throw ContractError("unknown config key " + key);
  values.set(key, value);
}

RunConfig RunConfig::resolve(const std::string& config_path,
                             const std::vector<std::string>& overrides) {
  RunConfig rc;
  if (!config_path.empty()) {
    const auto file = util::KeyValues::load(config_path);
    for (const auto& [k, v] : file.entries()) {
      try {
        rc.set(k, v);
      } catch (const ContractError& e) {
        throw ContractError(config_path + ": " + e.what());
      }
    }
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ContractError("--set expects KEY=VALUE, got '" + o + "'");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    rc.set(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }
  return rc;
}

model::ModelConfig RunConfig::model() const { return model::ModelConfig::from_key_values(values); }

training::TrainConfig RunConfig::train() const {
  auto c = training::TrainConfig::from_key_values(values);
  c.validate();
  return c;
}

inference::BeamOptions RunConfig::beam() const {
  auto all = default_run_config();
  all.merge(values);
  inference::BeamOptions b;
  const auto width = all.get_int("infer.beam_width");
  const auto max_len = all.get_int("infer.max_len");
  if (width < 1) throw ContractError("infer.beam_width must be at least 1");
  if (max_len < 0) throw ContractError("infer.max_len must be non-negative");
  b.width = static_cast<std::size_t>(width);
  b.alpha = all.get_double("infer.length_penalty");
  b.max_len = static_cast<std::size_t>(max_len);
  return b;
}

std::size_t RunConfig::min_count() const {
  const auto v = values.has("data.min_count") ? values.get_int("data.min_count") : 1;
  if (v < 1) throw ContractError("data.min_count must be at least 1");
  return static_cast<std::size_t>(v);
}

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::size_t threads = 1;
};

void add_config_options(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "key = value configuration file");
  app->add_option("--set", c.overrides, "override a configuration key (KEY=VALUE)");
}

void add_threads(CLI::App* app, Common& c) {
  app->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ContractError("missing " + what + " path");
  if (!fs::is_regular_file(path)) throw ContractError(what + " not found: " + path);
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot write " + path);
  f << text;
  if (!f) throw Error("failed writing " + path);
}

std::optional<std::size_t> parse_context(const std::string& s) {
  if (s == "full" || s == "inf") return std::nullopt;
  std::size_t pos = 0;
  long long v = -1;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || v < 0) throw ContractError("invalid context size '" + s + "'");
  return static_cast<std::size_t>(v);
}

// Loads a checkpoint. Model keys given explicitly in the run config are
// laid over the checkpoint's own configuration, so a disagreeing config
// surfaces as a shape diagnostic.
training::LoadedModel<Real> load_checkpoint_model(const std::string& path, const RunConfig& rc) {
  require_file(path, "checkpoint");
  bool overridden = false;
  for (const auto& [k, v] : rc.values.entries()) overridden = overridden || model_key(k);
  if (!overridden) return training::load_model<Real>(path);
  const auto file = training::read_checkpoint(path);
  auto kv = file.config;
  for (const auto& [k, v] : rc.values.entries()) {
    if (model_key(k)) kv.set(k, v);
  }
  return training::load_model<Real>(path, model::ModelConfig::from_key_values(kv));
}

std::vector<corpus::Document> sources_of(const std::vector<corpus::DocumentPair>& pairs) {
  std::vector<corpus::Document> out;
  for (const auto& p : pairs) out.push_back(p.source);
  return out;
}

std::vector<corpus::Document> targets_of(const std::vector<corpus::DocumentPair>& pairs) {
  std::vector<corpus::Document> out;
  for (const auto& p : pairs) out.push_back(p.target);
  return out;
}

// ---- make-synthetic ----

struct SyntheticArgs {
  corpus::SyntheticOptions options;
  std::string out_dir;
};

void cmd_make_synthetic(const SyntheticArgs& a, std::ostream& out) {
  const auto task = corpus::make_synthetic_task(a.options);
  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  corpus::write_synthetic_task(task, a.options, dir / "source.txt", dir / "target.txt",
                               dir / "manifest.json");
  write_text((dir / "contrastive.json").string(),
             evaluation::format_contrastive_suite(evaluation::make_topic_flip_suite(task)), out);
  nlohmann::json j{{"documents", task.pairs.size()},
                   {"ambiguous_tokens", task.sites.size()},
                   {"source", (dir / "source.txt").string()},
                   {"target", (dir / "target.txt").string()},
                   {"manifest", (dir / "manifest.json").string()},
                   {"contrastive_suite", (dir / "contrastive.json").string()}};
  out << j.dump() << '\n';
}

// ---- train ----

struct TrainArgs {
  Common common;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> doc_split;
  std::optional<std::int64_t> max_steps;
  std::string train_source, train_target, dev_source, dev_target;
  std::string output;
  std::string resume;
};

void cmd_train(const TrainArgs& a, std::ostream& out) {
  auto rc = RunConfig::resolve(a.common.config, a.common.overrides);
  if (a.seed) rc.set("train.seed", std::to_string(*a.seed));
  if (a.doc_split) rc.set("train.doc_split", std::to_string(*a.doc_split));
  if (a.max_steps) rc.set("train.max_steps", std::to_string(*a.max_steps));
  if (!a.train_source.empty()) rc.set("data.train_source", a.train_source);
  if (!a.train_target.empty()) rc.set("data.train_target", a.train_target);
  if (!a.dev_source.empty()) rc.set("data.dev_source", a.dev_source);
  if (!a.dev_target.empty()) rc.set("data.dev_target", a.dev_target);

  auto get = [&](const std::string& k) { return rc.values.get_or(k, ""); };
  require_file(get("data.train_source"), "training source corpus");
  require_file(get("data.train_target"), "training target corpus");
  const bool has_dev = !get("data.dev_source").empty() || !get("data.dev_target").empty();
  if (has_dev) {
    require_file(get("data.dev_source"), "dev source corpus");
    require_file(get("data.dev_target"), "dev target corpus");
  }
  if (a.output.empty()) throw ContractError("missing --output directory");
  const auto train_cfg = rc.train();
  auto model_cfg = rc.model();

  auto train = corpus::load_parallel_corpus(get("data.train_source"), get("data.train_target"));
  std::vector<corpus::DocumentPair> dev;
  if (has_dev) dev = corpus::load_parallel_corpus(get("data.dev_source"), get("data.dev_target"));

  fs::create_directories(a.output);
  const fs::path dir(a.output);
  std::unique_ptr<training::Trainer<Real>> trainer;
  if (!a.resume.empty()) {
    require_file(a.resume, "checkpoint");
    auto kv = training::read_checkpoint(a.resume).config;
    for (const auto& [k, v] : rc.values.entries()) {
      if (k.rfind("train.", 0) == 0) kv.set(k, v);
    }
    auto resumed_cfg = training::TrainConfig::from_key_values(kv);
    resumed_cfg.validate();
    trainer = training::Trainer<Real>::resume(a.resume, std::move(train), std::move(dev),
                                              resumed_cfg);
  } else {
    const auto src_vocab = corpus::Vocabulary::build(sources_of(train), rc.min_count());
    const auto tgt_vocab = corpus::Vocabulary::build(targets_of(train), rc.min_count());
    model_cfg.src_vocab_size = src_vocab.size();
    model_cfg.tgt_vocab_size = tgt_vocab.size();
    model_cfg.validate();
    trainer = std::make_unique<training::Trainer<Real>>(model_cfg, train_cfg, src_vocab, tgt_vocab,
                                                        std::move(train), std::move(dev));
  }
  {
    auto resolved = default_run_config();
    resolved.merge(rc.values);
    resolved.merge(trainer->model().config().to_key_values());
    write_text((dir / "run.cfg").string(), resolved.format(), out);
  }
  std::ofstream log(dir / "train.log.jsonl", a.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw Error("cannot write " + (dir / "train.log.jsonl").string());
  training::TrainOutputs outputs;
  outputs.checkpoint_dir = dir;
  outputs.log = &log;
  const auto summary = trainer->run(outputs);
  nlohmann::json j{{"steps", summary.steps},
                   {"epochs", summary.epochs},
                   {"early_stopped", summary.early_stopped},
                   {"checkpoint", (dir / "last.dnmt").string()}};
  if (summary.best_dev_loss) j["best_dev_loss"] = *summary.best_dev_loss;
  out << j.dump() << '\n';
}

// ---- translate ----

struct DecodeArgs {
  Common common;
  std::string checkpoint;
  std::optional<std::size_t> beam;
  std::optional<double> alpha;
  std::optional<std::size_t> max_len;
  std::string context = "full";
};

void add_decode_options(CLI::App* app, DecodeArgs& a) {
  add_config_options(app, a.common);
  add_threads(app, a.common);
  app->add_option("--checkpoint", a.checkpoint, "model checkpoint")->required();
  app->add_option("--beam", a.beam, "beam width");
  app->add_option("--alpha", a.alpha, "length penalty exponent");
  app->add_option("--max-len", a.max_len, "maximum generated tokens per sentence");
}

RunConfig decode_config(const DecodeArgs& a) {
  auto rc = RunConfig::resolve(a.common.config, a.common.overrides);
  if (a.beam) rc.set("infer.beam_width", std::to_string(*a.beam));
  if (a.alpha) {
    std::ostringstream s;
    s.precision(17);
    s << *a.alpha;
    rc.set("infer.length_penalty", s.str());
  }
  if (a.max_len) rc.set("infer.max_len", std::to_string(*a.max_len));
  return rc;
}

struct TranslateArgs {
  DecodeArgs decode;
  std::string input, output;
};

void cmd_translate(const TranslateArgs& a, std::ostream& out) {
  const auto rc = decode_config(a.decode);
  require_file(a.input, "input corpus");
  const auto loaded = load_checkpoint_model(a.decode.checkpoint, rc);
  const auto docs = corpus::read_documents(a.input);
  inference::TranslateOptions opts;
  opts.beam = rc.beam();
  opts.context_limit = parse_context(a.decode.context);
  const auto hyps = evaluation::translate_corpus(*loaded.model, loaded.src_vocab, loaded.tgt_vocab,
                                                 docs, opts, a.decode.common.threads);
  write_text(a.output, corpus::format_documents(hyps), out);
}

// ---- score-contrastive ----

struct ContrastiveArgs {
  Common common;
  std::string checkpoint, suite, output;
};

void cmd_score_contrastive(const ContrastiveArgs& a, std::ostream& out) {
  const auto rc = RunConfig::resolve(a.common.config, a.common.overrides);
  require_file(a.suite, "contrastive suite");
  const auto loaded = load_checkpoint_model(a.checkpoint, rc);
  const auto groups = evaluation::read_contrastive_suite(a.suite);
  const auto r = evaluation::contrastive_score(*loaded.model, loaded.src_vocab, loaded.tgt_vocab,
                                               groups, a.common.threads);
  nlohmann::json j{{"accuracy", r.accuracy}, {"correct", r.correct}, {"total", r.total}};
  write_text(a.output, j.dump() + "\n", out);
}

// ---- analyze-attention ----

struct AttentionArgs {
  Common common;
  std::string checkpoint, input, output_dir;
  std::vector<std::size_t> documents;
};

void cmd_analyze_attention(const AttentionArgs& a, std::ostream& out) {
  const auto rc = RunConfig::resolve(a.common.config, a.common.overrides);
  require_file(a.input, "input corpus");
  if (a.output_dir.empty()) throw ContractError("missing --output-dir");
  const auto docs = corpus::read_documents(a.input);
  std::vector<std::size_t> selected = a.documents;
  if (selected.empty()) {
    for (std::size_t i = 0; i < docs.size(); ++i) selected.push_back(i);
  }
  for (auto d : selected) {
    if (d >= docs.size()) {
      throw ContractError("document index " + std::to_string(d) + " out of range (" +
                          std::to_string(docs.size()) + " documents)");
    }
    if (docs[d].size() < 2) {
      throw ContractError("document " + std::to_string(d) +
                          " has a single sentence: the global encoder layer is bypassed and "
                          "there is no sentence-to-sentence attention to analyze");
    }
  }
  const auto loaded = load_checkpoint_model(a.checkpoint, rc);
  fs::create_directories(a.output_dir);
  std::vector<evaluation::AttentionSummary> summaries(selected.size());
  inference::parallel_for(selected.size(), a.common.threads, [&](std::size_t i) {
    const auto input = evaluation::encode_source(loaded.src_vocab, docs[selected[i]]);
    summaries[i] = evaluation::attention_summary(*loaded.model, input);
  });
  nlohmann::json index = nlohmann::json::array();
  for (std::size_t i = 0; i < selected.size(); ++i) {
    const auto base = fs::path(a.output_dir) / ("doc" + std::to_string(selected[i]));
    write_text(base.string() + ".csv", evaluation::attention_csv(summaries[i]), out);
    write_text(base.string() + ".json",
               evaluation::attention_json(summaries[i], selected[i], docs[selected[i]]), out);
    index.push_back(base.string() + ".csv");
  }
  out << nlohmann::json{{"documents", selected.size()}, {"files", index}}.dump() << '\n';
}

// ---- ablate-context ----

struct AblationArgs {
  DecodeArgs decode;
  std::string source, target, manifest, output;
  std::string contexts = "0,1,2,3,full";
};

void cmd_ablate_context(const AblationArgs& a, std::ostream& out) {
  const auto rc = decode_config(a.decode);
  require_file(a.source, "source corpus");
  require_file(a.target, "reference corpus");
  std::vector<std::optional<std::size_t>> contexts;
  {
    std::istringstream in(a.contexts);
    for (std::string item; std::getline(in, item, ',');) contexts.push_back(parse_context(item));
  }
  if (contexts.empty()) throw ContractError("no context sizes given");
  std::vector<corpus::AmbiguousSite> sites;
  if (!a.manifest.empty()) {
    require_file(a.manifest, "manifest");
    sites = corpus::read_manifest_sites(a.manifest);
  }
  const auto loaded = load_checkpoint_model(a.decode.checkpoint, rc);
  const auto pairs = corpus::load_parallel_corpus(a.source, a.target);
  evaluation::AblationOptions opts;
  opts.beam = rc.beam();
  opts.threads = a.decode.common.threads;
  const auto rows = evaluation::context_ablation(*loaded.model, loaded.src_vocab, loaded.tgt_vocab,
                                                 pairs, sites, contexts, opts);
  write_text(a.output, evaluation::ablation_csv(rows), out);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Document-level translation with segment-level relative attention", "dnmt"};
  app.require_subcommand(1);

  SyntheticArgs syn;
  auto* make = app.add_subcommand("make-synthetic", "write the context-dependent toy corpus");
  make->add_option("--docs", syn.options.num_docs, "documents")->check(CLI::PositiveNumber);
  make->add_option("--sents", syn.options.sents_per_doc, "sentences per document");
  make->add_option("--len", syn.options.sent_len, "tokens per sentence");
  make->add_option("--vocab", syn.options.vocab_size, "content word types");
  make->add_option("--ambiguity", syn.options.ambiguity_rate, "ambiguous token rate");
  make->add_option("--ambiguous-types", syn.options.ambiguous_types, "ambiguous word types");
  make->add_option("--seed", syn.options.seed, "generator seed");
  make->add_option("--out", syn.out_dir, "output directory")->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "train a model");
  add_config_options(train, tr.common);
  train->add_option("--seed", tr.seed, "random seed");
  train->add_option("--doc-split", tr.doc_split, "maximum sentences per training document");
  train->add_option("--max-steps", tr.max_steps, "optimizer updates");
  train->add_option("--train-source", tr.train_source, "training source corpus");
  train->add_option("--train-target", tr.train_target, "training target corpus");
  train->add_option("--dev-source", tr.dev_source, "dev source corpus");
  train->add_option("--dev-target", tr.dev_target, "dev target corpus");
  train->add_option("--output", tr.output, "run directory")->required();
  train->add_option("--resume", tr.resume, "continue from a checkpoint");

  TranslateArgs tl;
  auto* translate = app.add_subcommand("translate", "translate a corpus");
  add_decode_options(translate, tl.decode);
  translate->add_option("--context", tl.decode.context, "context sentences (number or full)");
  translate->add_option("--input", tl.input, "source corpus")->required();
  translate->add_option("--output", tl.output, "output corpus (default stdout)");

  ContrastiveArgs ca;
  auto* score = app.add_subcommand("score-contrastive", "accuracy on a contrastive suite");
  add_config_options(score, ca.common);
  add_threads(score, ca.common);
  score->add_option("--checkpoint", ca.checkpoint, "model checkpoint")->required();
  score->add_option("--suite", ca.suite, "contrastive suite JSON")->required();
  score->add_option("--output", ca.output, "result JSON (default stdout)");

  AttentionArgs at;
  auto* attn = app.add_subcommand("analyze-attention", "export sentence-to-sentence attention");
  add_config_options(attn, at.common);
  add_threads(attn, at.common);
  attn->add_option("--checkpoint", at.checkpoint, "model checkpoint")->required();
  attn->add_option("--input", at.input, "source corpus")->required();
  attn->add_option("--output-dir", at.output_dir, "directory for CSV and JSON files")->required();
  attn->add_option("--document", at.documents, "document indices (default all)");

  AblationArgs ab;
  auto* ablate = app.add_subcommand("ablate-context", "score translations under context limits");
  add_decode_options(ablate, ab.decode);
  ablate->add_option("--source", ab.source, "source corpus")->required();
  ablate->add_option("--target", ab.target, "reference corpus")->required();
  ablate->add_option("--manifest", ab.manifest, "synthetic manifest with ambiguous sites");
  ablate->add_option("--contexts", ab.contexts, "comma-separated sizes, e.g. 0,1,2,full");
  ablate->add_option("--output", ab.output, "CSV report (default stdout)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "dnmt: " << e.what() << '\n';
    return kUsageError;
  }

  try {
    if (make->parsed()) cmd_make_synthetic(syn, out);
    else if (train->parsed()) cmd_train(tr, out);
    else if (translate->parsed()) cmd_translate(tl, out);
    else if (score->parsed()) cmd_score_contrastive(ca, out);
    else if (attn->parsed()) cmd_analyze_attention(at, out);
    else if (ablate->parsed()) cmd_ablate_context(ab, out);
  } catch (const ContractError& e) {
    err << "dnmt: error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "dnmt: failure: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kSuccess;
}

}  // namespace dnmt::cli
