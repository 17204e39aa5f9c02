#include "qa/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "autodiff/ops.hpp"
#include "common/error.hpp"
#include "common/parallel.hpp"
#include "model/readtwice.hpp"

namespace readtwice::qa {

namespace {

std::vector<model::SegmentInput> inputs_of(const QaExample& ex) {
  std::vector<model::SegmentInput> in;
  for (const auto& s : ex.encoded.segments) in.push_back(s.input);
  return in;
}

std::vector<ad::Var> read(ad::Tape& tape, model::Model& model, const QaExample& ex) {
  auto inputs = inputs_of(ex);
  model::ForwardResult fwd = model::read_twice(tape, model, inputs);
  std::vector<ad::Var> h4;
  for (const auto& s : fwd.segments) h4.push_back(s.h4);
  return h4;
}

bool wants_span(const QaExample& ex) {
  return !ex.gold.empty() && (!ex.record.option || *ex.record.option == AnswerOption::kSpan);
}

using Snapshot = std::map<std::string, ad::Tensor>;

Snapshot snapshot(const model::Model& model) {
  Snapshot s;
  model.params.for_each([&](const ad::Parameter& p) { s.emplace(p.path, p.value); });
  return s;
}

void restore(model::Model& model, const Snapshot& s) {
  model.params.for_each([&](ad::Parameter& p) { p.value = s.at(p.path); });
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\n\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\n\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

QaLoss qa_loss(ad::Tape& tape, model::Model& model, const QaExample& example,
               const FinetuneConfig& config) {
  QaLoss out;
  out.has_span = wants_span(example);
  out.has_option = config.option_head;
  if (!out.has_span && !out.has_option) {
    out.total = tape.constant(ad::Tensor::scalar(0.0));
    return out;
  }
  auto h4 = read(tape, model, example);
  std::optional<ad::Var> total;
  if (out.has_span) {
    SpanScores scores = qa_scores(tape, model, h4);
    total = span_loss(tape, scores, example.gold, candidate_mask(example.encoded));
  }
  if (out.has_option) {
    ad::Var logits = option_logits(tape, model, h4);
    ad::Var loss = option_loss(tape, logits, example.supporting,
                               example.record.option.value_or(AnswerOption::kSpan));
    total = total ? ad::add(*total, loss) : loss;
  }
  out.total = *total;
  return out;
}

nlohmann::json prediction_to_json(const Prediction& p) {
  nlohmann::json j = {{"question_id", p.question_id}, {"answer", p.answer},
                      {"span", {{"start", p.start}, {"end", p.end}}},
                      {"char_span", {{"start", p.char_start}, {"end", p.char_end}}},
                      {"score", p.score}};
  j["option"] = p.option ? nlohmann::json(to_string(*p.option)) : nlohmann::json(nullptr);
  return j;
}

Prediction prediction_from_json(const nlohmann::json& j) {
  Prediction p;
  p.question_id = j.at("question_id").get<std::string>();
  p.answer = j.at("answer").get<std::string>();
  if (j.contains("span")) {
    p.start = j.at("span").at("start").get<std::size_t>();
    p.end = j.at("span").at("end").get<std::size_t>();
  }
  if (j.contains("char_span")) {
    p.char_start = j.at("char_span").at("start").get<std::size_t>();
    p.char_end = j.at("char_span").at("end").get<std::size_t>();
  }
  if (j.contains("score")) p.score = j.at("score").get<double>();
  if (j.contains("option") && !j.at("option").is_null()) {
    p.option = parse_option(j.at("option").get<std::string>());
  }
  return p;
}

void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& preds) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write predictions " + path.string());
  for (const auto& p : preds) out << prediction_to_json(p).dump() << '\n';
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open predictions " + path.string());
  std::vector<Prediction> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(prediction_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kParse, path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

Prediction predict(model::Model& model, const QaExample& example,
                   const corpus::AnnotatedDocument& doc, const FinetuneConfig& config) {
  ad::Tape tape;
  auto h4 = read(tape, model, example);
  Prediction p;
  p.question_id = example.record.question_id;
  if (config.option_head) {
    OptionDecision d = decide_option(option_logits(tape, model, h4).value());
    p.option = d.option;
    if (d.option != AnswerOption::kSpan) {
      p.answer = to_string(d.option);
      p.score = d.score;
      return p;
    }
  }
  SpanScores scores = qa_scores(tape, model, h4);
  DecodedSpan best = decode_answer(score_values(scores.begin), score_values(scores.end),
                                   candidate_mask(example.encoded), config.max_answer_len);
  p.start = example.encoded.document_position(best.segment, best.begin);
  p.end = example.encoded.document_position(best.segment, best.end) + 1;
  p.char_start = doc.tokens[p.start].begin;
  p.char_end = doc.tokens[p.end - 1].end;
  p.answer = trim(doc.text.substr(p.char_start, p.char_end - p.char_start));
  p.score = best.score;
  return p;
}

std::vector<Prediction> predict_all(model::Model& model, const std::vector<QaExample>& examples,
                                    const std::vector<corpus::AnnotatedDocument>& docs,
                                    const FinetuneConfig& config, std::size_t threads) {
  std::vector<Prediction> out(examples.size());
  parallel_for(examples.size(), threads, [&](std::size_t i) {
    out[i] = predict(model, examples[i], docs.at(examples[i].doc_index), config);
  });
  return out;
}

metrics::EvalReport evaluate_predictions(const std::vector<Prediction>& predictions,
                                         const std::vector<QaRecord>& gold, DevMetric metric) {
  std::map<std::string, const Prediction*> by_id;
  for (const auto& p : predictions) {
    if (!by_id.emplace(p.question_id, &p).second) {
      fail(ErrorKind::kInvalidArgument, "duplicate prediction for " + p.question_id);
    }
  }
  std::set<std::string> gold_ids;
  std::vector<std::string> missing, extra;
  for (const auto& g : gold) {
    gold_ids.insert(g.question_id);
    if (!by_id.count(g.question_id)) missing.push_back(g.question_id);
  }
  for (const auto& [id, p] : by_id) {
    if (!gold_ids.count(id)) extra.push_back(id);
  }
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "prediction ids do not match gold";
    auto list = [&](const char* label, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      msg += std::string("; ") + label + ":";
      for (const auto& id : ids) msg += " " + id;
    };
    list("missing", missing);
    list("unexpected", extra);
    fail(ErrorKind::kInvalidArgument, msg);
  }
  metrics::EvalReport report;
  for (const auto& g : gold) {
    std::vector<std::string> answers = g.answers;
    if (g.option && *g.option != AnswerOption::kSpan) answers = {to_string(*g.option)};
    const std::string& pred = by_id.at(g.question_id)->answer;
    if (metric == DevMetric::kF1) {
      auto s = metrics::qa_f1_em(pred, answers);
      report.add(g.question_id, {{"f1", s.f1}, {"em", s.em}});
    } else {
      const auto hyp = metrics::split_words(metrics::normalize_for_eval(pred));
      std::vector<std::vector<std::string>> refs;
      double rouge = 0.0;
      for (const auto& a : answers) {
        refs.push_back(metrics::split_words(metrics::normalize_for_eval(a)));
        rouge = std::max(rouge, metrics::rouge_l(hyp, refs.back()));
      }
      report.add(g.question_id, {{"rouge_l", rouge},
                                 {"bleu_1", metrics::bleu(hyp, refs, 1)},
                                 {"bleu_4", metrics::bleu(hyp, refs, 4)}});
    }
  }
  return report;
}

double headline(const metrics::EvalReport& report, DevMetric metric) {
  if (report.count() == 0) return 0.0;
  return report.aggregates().at(metric == DevMetric::kF1 ? "f1" : "rouge_l");
}

FinetuneResult finetune(model::Model& model, const std::vector<QaExample>& train,
                        const std::vector<QaExample>& dev,
                        const std::vector<corpus::AnnotatedDocument>& docs,
                        const FinetuneConfig& config, const std::vector<double>& learning_rates,
                        const std::function<void(const FinetuneLogEntry&)>& log,
                        std::size_t threads) {
  std::vector<const QaExample*> trainable;
  for (const auto& ex : train) {
    if (wants_span(ex) || config.option_head) trainable.push_back(&ex);
  }
  FinetuneResult result;
  result.skipped_examples = train.size() - trainable.size();
  if (config.steps > 0 && trainable.empty()) {
    fail(ErrorKind::kInvalidArgument, "no trainable QA examples");
  }

  std::vector<QaRecord> dev_gold;
  for (const auto& ex : dev) dev_gold.push_back(ex.record);
  auto dev_score = [&]() -> std::optional<double> {
    if (dev.empty()) return std::nullopt;
    auto preds = predict_all(model, dev, docs, config, threads);
    return headline(evaluate_predictions(preds, dev_gold, config.dev_metric), config.dev_metric);
  };

  const Snapshot initial = snapshot(model);
  Snapshot best_params = initial;
  bool have_best = false;
  std::vector<double> rates = learning_rates;
  if (rates.empty()) rates.push_back(config.adam.learning_rate);

  for (double lr : rates) {
    restore(model, initial);
    ad::AdamConfig ac = config.adam;
    ac.learning_rate = lr;
    if (ac.total_steps == 0) ac.total_steps = config.steps;
    ad::Adam adam(ac);
    ++result.runs;
    std::size_t stale = 0;
    double run_best = -1.0;
    auto consider = [&](std::uint64_t step, double loss) {
      auto dev_value = dev_score();
      if (log) log({lr, step, loss, dev_value});
      const double v = dev_value.value_or(0.0);
      if (v > run_best) {
        run_best = v;
        stale = 0;
      } else {
        ++stale;
      }
      if (!have_best || v > result.best_dev) {
        have_best = true;
        result.best_dev = v;
        result.best_learning_rate = lr;
        result.best_step = step;
        best_params = snapshot(model);
      }
    };
    double last_loss = 0.0;
    bool evaluated_last = false;
    for (std::uint64_t step = 0; step < config.steps; ++step) {
      Rng rng = Rng::derive(config.seed, step);
      const QaExample& ex = *trainable[rng.below(trainable.size())];
      ad::Tape tape;
      tape.set_rng(&rng);
      QaLoss loss = qa_loss(tape, model, ex, config);
      last_loss = loss.total.value().item();
      if (!std::isfinite(last_loss)) {
        fail(ErrorKind::kNumeric, "non-finite QA loss at step " + std::to_string(step));
      }
      model.params.zero_grad();
      tape.backward(loss.total);
      adam.step(model.params);
      evaluated_last = false;
      if (config.eval_every && (step + 1) % config.eval_every == 0) {
        consider(step + 1, last_loss);
        evaluated_last = true;
        if (config.patience && stale >= config.patience) break;
      }
    }
    if (!evaluated_last) consider(adam.steps_taken(), last_loss);
  }
  restore(model, best_params);
  return result;
}

}  // namespace readtwice::qa
