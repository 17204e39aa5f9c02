#include "app/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "app/gradcheck_suite.hpp"
#include "autodiff/checkpoint.hpp"
#include "common/error.hpp"
#include "common/parallel.hpp"
#include "corpus/probe.hpp"
#include "model/model.hpp"
#include "pretrain/trainer.hpp"
#include "qa/data.hpp"
#include "qa/finetune.hpp"

namespace readtwice::app {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void emit(const LogSink& log, const std::string& line) {
  if (log) log(line);
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

fs::path prepare_output(const RunConfig& config) {
  fs::path dir = config.paths.output_dir.empty() ? fs::path(".") : fs::path(config.paths.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
  std::ofstream out(dir / "config.json");
  if (!out) fail(ErrorKind::kIo, "cannot write " + (dir / "config.json").string());
  out << config.to_json().dump(2) << '\n';
  return dir;
}

void write_json(const fs::path& path, const json& value) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << value.dump(2) << '\n';
}

const std::string& require(const std::string& path, const char* key) {
  if (path.empty()) fail(ErrorKind::kInvalidArgument, std::string("missing path '") + key + "'");
  return path;
}

bool is_probe(const RunConfig& c) { return c.profile == TaskProfile::kProbe; }

corpus::Vocab load_vocab(const RunConfig& c) {
  if (c.paths.vocab.empty() && is_probe(c)) return corpus::probe_vocab(c.probe);
  return corpus::Vocab::load(require(c.paths.vocab, "vocab"));
}

model::ModelConfig model_config(const RunConfig& c, const corpus::Vocab& vocab) {
  model::ModelConfig m = c.model;
  if (c.vocab_size_from_vocab) m.encoder.vocab_size = vocab.size();
  if (m.encoder.vocab_size < vocab.size()) {
    fail(ErrorKind::kInvalidArgument, "vocab_size " + std::to_string(m.encoder.vocab_size) +
                                          " is smaller than the vocabulary (" +
                                          std::to_string(vocab.size()) + ")");
  }
  m.validate();
  return m;
}

std::vector<corpus::AnnotatedDocument> load_docs(const std::string& path, const corpus::Vocab& vocab,
                                                 const LogSink& log) {
  auto loaded = corpus::load_annotated_corpus(path, vocab);
  emit(log, "loaded " + std::to_string(loaded.documents.size()) + " documents from " + path +
                " (" + std::to_string(loaded.rejected) + " rejected)");
  return std::move(loaded.documents);
}

struct Split {
  std::vector<corpus::AnnotatedDocument> docs;
  std::vector<corpus::ProbePosition> manifest;
};

struct ProbeData {
  Split train;
  Split heldout;
};

// Generated in memory unless a corpus path is configured.
ProbeData probe_data(const RunConfig& c, const corpus::Vocab& vocab, const LogSink& log) {
  ProbeData out;
  if (c.paths.corpus.empty()) {
    Rng train_rng(c.probe_seed);
    auto train = corpus::generate_probe_corpus(c.probe, train_rng);
    corpus::ProbeConfig held_cfg = c.probe;
    held_cfg.n_docs = c.probe_heldout_docs;
    Rng held_rng = Rng::derive(c.probe_seed, 1);
    auto held = corpus::generate_probe_corpus(held_cfg, held_rng);
    out.train = {std::move(train.documents), std::move(train.manifest)};
    out.heldout = {std::move(held.documents), std::move(held.manifest)};
    emit(log, "generated probe corpus: " + std::to_string(out.train.docs.size()) + " train, " +
                  std::to_string(out.heldout.docs.size()) + " held-out documents");
    return out;
  }
  out.train.docs = load_docs(c.paths.corpus, vocab, log);
  if (!c.paths.manifest.empty()) out.train.manifest = corpus::read_probe_manifest(c.paths.manifest);
  if (!c.paths.heldout.empty()) {
    out.heldout.docs = load_docs(c.paths.heldout, vocab, log);
    if (!c.paths.heldout_manifest.empty()) {
      out.heldout.manifest = corpus::read_probe_manifest(c.paths.heldout_manifest);
    }
  }
  return out;
}

std::map<std::size_t, std::vector<std::size_t>> forced_positions(const Split& split) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < split.docs.size(); ++i) index.emplace(split.docs[i].doc_id, i);
  std::map<std::size_t, std::vector<std::size_t>> out;
  for (const auto& p : split.manifest) {
    auto it = index.find(p.doc_id);
    if (it == index.end()) {
      fail(ErrorKind::kContract, "manifest names unknown document '" + p.doc_id + "'");
    }
    if (p.position >= split.docs[it->second].tokens.size()) {
      fail(ErrorKind::kContract, "manifest position outside document '" + p.doc_id + "'");
    }
    out[it->second].push_back(p.position);
  }
  return out;
}

struct Evaluation {
  json record;
  std::string line;
};

Evaluation evaluate_split(model::Model& model, std::span<const pretrain::TrainingDocument> docs,
                          bool probe, const RunConfig& c) {
  const std::size_t threads = thread_count();
  Evaluation ev;
  auto acc = pretrain::mlm_accuracy(model, docs, c.pretrain.masking, c.eval_seed, false, threads);
  ev.record = {{"mlm_accuracy", acc.all},
               {"entity_accuracy", acc.entity},
               {"masked_tokens", acc.all_count},
               {"masked_entity_tokens", acc.entity_count}};
  ev.line = "mlm acc " + fmt("%.4f", acc.all) + " entity acc " + fmt("%.4f", acc.entity);
  if (probe) {
    auto p = pretrain::mlm_accuracy(model, docs, c.pretrain.masking, c.eval_seed, true, threads);
    ev.record["probe_accuracy"] = p.all;
    ev.record["probe_positions"] = p.all_count;
    ev.record["chance_accuracy"] = 1.0 / static_cast<double>(c.probe.n_values);
    ev.line += " probe acc " + fmt("%.4f", p.all) + " (" + std::to_string(p.all_count) + ")";
  }
  return ev;
}

ad::Checkpoint read_existing(const std::string& path) {
  require(path, "checkpoint");
  if (!fs::exists(path)) fail(ErrorKind::kIo, "checkpoint not found: " + path);
  return ad::read_checkpoint(path);
}

void load_model_params(model::Model& model, const std::string& path) {
  ad::Checkpoint ckpt = read_existing(path);
  ad::Checkpoint params;
  for (auto& [k, v] : ckpt.tensors) {
    if (k.rfind("optimizer/", 0) != 0) params.tensors.emplace(k, std::move(v));
  }
  ad::load_params(model.params, params);
}

qa::PrepareOptions prepare_options(const RunConfig& c) {
  qa::PrepareOptions o;
  o.profile = c.segmentation;
  o.question_max_tokens = c.question_max_tokens;
  o.rouge_oracle = c.rouge_oracle;
  o.max_answer_len = c.max_answer_len;
  return o;
}

std::vector<qa::QaExample> prepare(const std::vector<qa::QaRecord>& records,
                                   const std::vector<corpus::AnnotatedDocument>& docs,
                                   const corpus::Vocab& vocab, const RunConfig& c,
                                   const std::string& name, const LogSink& log, json* stats_out) {
  qa::PrepareStats stats;
  auto examples = qa::prepare_examples(records, docs, vocab, prepare_options(c), &stats);
  emit(log, name + ": " + std::to_string(stats.examples) + " examples, " +
                std::to_string(stats.without_span) + " without span, " +
                std::to_string(stats.oracle_labels) + " oracle labels, " +
                std::to_string(stats.missing_documents) + " missing documents");
  if (stats_out) {
    *stats_out = {{"examples", stats.examples},
                  {"without_span", stats.without_span},
                  {"dropped_spans", stats.dropped_spans},
                  {"oracle_labels", stats.oracle_labels},
                  {"missing_documents", stats.missing_documents}};
  }
  return examples;
}

std::string memory_line(const model::ModelConfig& m) {
  return "memory: mode=" + model::to_string(m.memory.mode) +
         " single_segment=" + (m.memory.single_segment ? "true" : "false") +
         " top_k=" + std::to_string(m.memory.top_k) +
         " clip_distance=" + std::to_string(m.memory.clip_distance);
}

}  // namespace

json cmd_pretrain(const RunConfig& c, const LogSink& log) {
  const fs::path dir = prepare_output(c);
  const corpus::Vocab vocab = load_vocab(c);
  const model::ModelConfig mcfg = model_config(c, vocab);
  const bool probe = is_probe(c);

  Split train, heldout;
  if (probe) {
    ProbeData data = probe_data(c, vocab, log);
    train = std::move(data.train);
    heldout = std::move(data.heldout);
  } else {
    train.docs = load_docs(require(c.paths.corpus, "corpus"), vocab, log);
    if (!c.paths.heldout.empty()) heldout.docs = load_docs(c.paths.heldout, vocab, log);
  }
  if (train.docs.empty()) fail(ErrorKind::kInvalidArgument, "training corpus is empty");
  auto train_docs = pretrain::make_training_documents(train.docs, c.segmentation,
                                                      forced_positions(train));
  auto held_docs = pretrain::make_training_documents(heldout.docs, c.segmentation,
                                                     forced_positions(heldout));

  model::Model model = model::make_model(mcfg, c.model_seed);
  ad::AdamConfig adam_cfg = c.adam;
  if (adam_cfg.total_steps == 0) adam_cfg.total_steps = c.steps;
  ad::Adam adam(adam_cfg);
  if (!c.paths.checkpoint.empty()) {
    read_existing(c.paths.checkpoint);
    pretrain::load_training_state(c.paths.checkpoint, model, &adam);
    emit(log, "resumed from " + c.paths.checkpoint + " at step " +
                  std::to_string(adam.steps_taken()));
  }
  emit(log, memory_line(mcfg));

  pretrain::PretrainConfig pcfg = c.pretrain;
  pcfg.seed = c.seed;

  std::ofstream metrics(dir / "metrics.jsonl");
  if (!metrics) fail(ErrorKind::kIo, "cannot write " + (dir / "metrics.jsonl").string());

  pretrain::TrainLoopOptions options;
  options.steps = c.steps;
  options.eval_every = c.eval_every;
  options.checkpoint_every = c.checkpoint_every;
  options.checkpoint_path = dir / "checkpoint.rtw";
  options.checkpoint_metadata = {{"kind", "pretrain"}, {"config", c.to_json().dump()}};

  json last_eval = json::object();
  const std::uint64_t log_every = std::max<std::uint64_t>(1, c.eval_every ? c.eval_every / 5 : 50);
  pretrain::TrainLoopHooks hooks;
  hooks.on_step = [&](const pretrain::StepMetrics& m) {
    metrics << json{{"event", "step"},      {"step", m.step + 1},
                    {"loss", m.total},      {"mlm", m.mlm},
                    {"coref", m.coref},     {"masked", m.masked},
                    {"coref_pairs", m.coref_pairs}, {"grad_norm", m.grad_norm},
                    {"learning_rate", m.learning_rate}}
                   .dump()
            << '\n';
    if ((m.step + 1) % log_every == 0) {
      emit(log, "step " + std::to_string(m.step + 1) + " loss " + fmt("%.4f", m.total) + " mlm " +
                    fmt("%.4f", m.mlm) + " coref " + fmt("%.4f", m.coref));
    }
  };
  hooks.on_eval = [&](std::uint64_t step) {
    if (held_docs.empty()) return;
    Evaluation ev = evaluate_split(model, held_docs, probe, c);
    ev.record["event"] = "eval";
    ev.record["step"] = step;
    metrics << ev.record.dump() << '\n';
    metrics.flush();
    last_eval = ev.record;
    emit(log, "eval step " + std::to_string(step) + " " + ev.line);
  };
  pretrain::run_pretraining(model, adam, train_docs, pcfg, options, hooks);

  json summary = {{"command", "pretrain"},
                  {"steps", adam.steps_taken()},
                  {"checkpoint", options.checkpoint_path.string()},
                  {"parameters", model::count_parameters(model::parameter_table(mcfg))},
                  {"heldout", last_eval}};
  write_json(dir / "pretrain_summary.json", summary);
  emit(log, "wrote " + options.checkpoint_path.string());
  return summary;
}

json cmd_finetune(const RunConfig& c, const LogSink& log) {
  require(c.paths.checkpoint, "checkpoint");
  read_existing(c.paths.checkpoint);
  const fs::path dir = prepare_output(c);
  const corpus::Vocab vocab = load_vocab(c);
  const model::ModelConfig mcfg = model_config(c, vocab);
  auto docs = load_docs(require(c.paths.corpus, "corpus"), vocab, log);
  auto train_records = qa::load_qa_records(require(c.paths.qa, "qa"));
  auto dev_records = qa::load_qa_records(require(c.paths.dev_qa, "dev_qa"));

  json train_stats, dev_stats;
  auto train = prepare(train_records, docs, vocab, c, "train", log, &train_stats);
  auto dev = prepare(dev_records, docs, vocab, c, "dev", log, &dev_stats);

  model::Model model = model::make_model(mcfg, c.model_seed);
  load_model_params(model, c.paths.checkpoint);
  emit(log, memory_line(mcfg));
  emit(log, std::string("option head: ") + (c.option_head ? "on" : "off") + ", dev metric: " +
                (c.dev_metric() == qa::DevMetric::kRougeL ? "rouge_l" : "f1"));

  std::ofstream trace(dir / "finetune_log.jsonl");
  if (!trace) fail(ErrorKind::kIo, "cannot write " + (dir / "finetune_log.jsonl").string());
  auto on_log = [&](const qa::FinetuneLogEntry& e) {
    json rec = {{"learning_rate", e.learning_rate}, {"step", e.step}, {"loss", e.loss}};
    if (e.dev) rec["dev"] = *e.dev;
    trace << rec.dump() << '\n';
    if (e.dev) {
      emit(log, "lr " + fmt("%g", e.learning_rate) + " step " + std::to_string(e.step) + " dev " +
                    fmt("%.4f", *e.dev));
    }
  };
  qa::FinetuneConfig fcfg = c.finetune_config();
  if (fcfg.adam.total_steps == 0) fcfg.adam.total_steps = c.steps;
  auto result = qa::finetune(model, train, dev, docs, fcfg, c.lr_sweep, on_log, thread_count());

  ad::Checkpoint out;
  ad::store_params(model.params, out);
  out.metadata = {{"kind", "finetune"}, {"config", c.to_json().dump()}};
  ad::write_checkpoint(dir / "finetuned.rtw", out);

  json summary = {{"command", "finetune"},
                  {"checkpoint", (dir / "finetuned.rtw").string()},
                  {"best_learning_rate", result.best_learning_rate},
                  {"best_dev", result.best_dev},
                  {"best_step", result.best_step},
                  {"runs", result.runs},
                  {"skipped_examples", result.skipped_examples},
                  {"top_k", mcfg.memory.top_k},
                  {"train", train_stats},
                  {"dev", dev_stats}};
  write_json(dir / "finetune_summary.json", summary);
  emit(log, "best dev " + fmt("%.4f", result.best_dev) + " at lr " +
                fmt("%g", result.best_learning_rate) + " over " + std::to_string(result.runs) +
                " run(s)");
  return summary;
}

json cmd_predict(const RunConfig& c, const LogSink& log) {
  require(c.paths.checkpoint, "checkpoint");
  read_existing(c.paths.checkpoint);
  const fs::path dir = prepare_output(c);
  const corpus::Vocab vocab = load_vocab(c);
  const model::ModelConfig mcfg = model_config(c, vocab);
  auto docs = load_docs(require(c.paths.corpus, "corpus"), vocab, log);
  auto records = qa::load_qa_records(require(c.paths.qa, "qa"));
  auto examples = prepare(records, docs, vocab, c, "predict", log, nullptr);

  model::Model model = model::make_model(mcfg, c.model_seed);
  load_model_params(model, c.paths.checkpoint);
  auto preds = qa::predict_all(model, examples, docs, c.finetune_config(), thread_count());
  const fs::path out =
      c.paths.predictions.empty() ? dir / "predictions.jsonl" : fs::path(c.paths.predictions);
  qa::write_predictions(out, preds);
  emit(log, "wrote " + std::to_string(preds.size()) + " predictions to " + out.string());
  return {{"command", "predict"}, {"predictions", out.string()}, {"count", preds.size()}};
}

json cmd_evaluate(const RunConfig& c, const LogSink& log) {
  const fs::path dir = prepare_output(c);
  const fs::path report_path =
      c.paths.report.empty() ? dir / "report.json" : fs::path(c.paths.report);

  if (is_probe(c)) {
    const corpus::Vocab vocab = load_vocab(c);
    const model::ModelConfig mcfg = model_config(c, vocab);
    model::Model model = model::make_model(mcfg, c.model_seed);
    load_model_params(model, c.paths.checkpoint);
    ProbeData data = probe_data(c, vocab, log);
    // A configured corpus without a held-out file is evaluated as is.
    Split& split = data.heldout.docs.empty() ? data.train : data.heldout;
    auto docs = pretrain::make_training_documents(split.docs, c.segmentation,
                                                  forced_positions(split));
    Evaluation ev = evaluate_split(model, docs, true, c);
    json report = {{"command", "evaluate"}, {"profile", "probe"}, {"documents", docs.size()}};
    report.update(ev.record);
    write_json(report_path, report);
    emit(log, ev.line);
    return report;
  }

  auto preds = qa::read_predictions(require(c.paths.predictions, "predictions"));
  auto gold = qa::load_qa_records(require(c.paths.qa, "qa"));
  const qa::DevMetric metric = c.dev_metric();
  metrics::EvalReport report = qa::evaluate_predictions(preds, gold, metric);
  report.write(report_path);
  json summary = report.to_json();
  summary.erase("examples");
  summary["command"] = "evaluate";
  summary["report"] = report_path.string();
  summary["headline"] = qa::headline(report, metric);
  emit(log, "evaluated " + std::to_string(report.count()) + " questions, headline " +
                fmt("%.4f", qa::headline(report, metric)));
  return summary;
}

json cmd_gradcheck(const RunConfig& c, const LogSink& log) {
  const fs::path dir = prepare_output(c);
  auto checks = run_gradcheck_suite(c.seed, kGradCheckTolerance);
  emit(log, format_gradcheck_table(checks));
  bool passed = true;
  json rows = json::array();
  for (const auto& check : checks) {
    passed = passed && check.passed;
    rows.push_back({{"loss", check.loss},
                    {"passed", check.passed},
                    {"max_relative_error", check.result.max_relative_error},
                    {"worst", check.result.worst_path + "[" +
                                  std::to_string(check.result.worst_index) + "]"},
                    {"groups", check.groups}});
  }
  json summary = {{"command", "gradcheck"},
                  {"tolerance", kGradCheckTolerance},
                  {"passed", passed},
                  {"losses", rows}};
  write_json(dir / "gradcheck.json", summary);
  return summary;
}

json cmd_gen_probe(const RunConfig& c, const LogSink& log) {
  const fs::path dir = prepare_output(c);
  RunConfig gen = c;
  gen.paths.corpus.clear();
  const corpus::Vocab vocab = corpus::probe_vocab(c.probe);
  ProbeData data = probe_data(gen, vocab, log);
  vocab.save(dir / "vocab.txt");
  corpus::write_corpus(dir / "corpus.jsonl", data.train.docs);
  corpus::write_corpus(dir / "heldout.jsonl", data.heldout.docs);
  corpus::write_probe_manifest(dir / "manifest.jsonl", data.train.manifest);
  corpus::write_probe_manifest(dir / "heldout_manifest.jsonl", data.heldout.manifest);
  json summary = {{"command", "gen-probe"},
                  {"documents", data.train.docs.size()},
                  {"heldout_documents", data.heldout.docs.size()},
                  {"probe_positions", data.train.manifest.size()},
                  {"heldout_probe_positions", data.heldout.manifest.size()},
                  {"vocab_size", vocab.size()},
                  {"chance_accuracy", 1.0 / static_cast<double>(c.probe.n_values)}};
  write_json(dir / "probe_summary.json", summary);
  emit(log, "wrote probe corpus to " + dir.string());
  return summary;
}

}  // namespace readtwice::app
