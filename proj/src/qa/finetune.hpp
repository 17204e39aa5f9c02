#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "autodiff/optimizer.hpp"
#include "metrics/metrics.hpp"
#include "model/model.hpp"
#include "qa/data.hpp"

namespace readtwice::qa {

enum class DevMetric { kF1, kRougeL };

struct FinetuneConfig {
  ad::AdamConfig adam;
  std::uint64_t steps = 0;
  std::uint64_t eval_every = 0;  // 0 = evaluate only at the end
  std::size_t patience = 0;      // evaluations without improvement; 0 = never stop early
  std::uint64_t seed = 0;
  std::size_t max_answer_len = 30;
  bool option_head = false;
  DevMetric dev_metric = DevMetric::kF1;
};

struct QaLoss {
  ad::Var total;
  bool has_span = false;
  bool has_option = false;
};

// Span loss when gold spans exist and the answer is a span; option loss when
// the option head is on. Either may be absent.
QaLoss qa_loss(ad::Tape& tape, model::Model& model, const QaExample& example,
               const FinetuneConfig& config);

struct Prediction {
  std::string question_id;
  std::string answer;
  std::size_t start = 0;  // document token span, end exclusive
  std::size_t end = 0;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  double score = 0.0;
  std::optional<AnswerOption> option;
};

nlohmann::json prediction_to_json(const Prediction& p);
Prediction prediction_from_json(const nlohmann::json& j);
void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& preds);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

Prediction predict(model::Model& model, const QaExample& example,
                   const corpus::AnnotatedDocument& doc, const FinetuneConfig& config);
std::vector<Prediction> predict_all(model::Model& model, const std::vector<QaExample>& examples,
                                    const std::vector<corpus::AnnotatedDocument>& docs,
                                    const FinetuneConfig& config, std::size_t threads = 1);

// Per-question metrics: f1/em, or rouge_l/bleu_1/bleu_4 with evaluation
// preprocessing. Throws listing ids present on one side only.
metrics::EvalReport evaluate_predictions(const std::vector<Prediction>& predictions,
                                         const std::vector<QaRecord>& gold, DevMetric metric);
double headline(const metrics::EvalReport& report, DevMetric metric);

struct FinetuneLogEntry {
  double learning_rate = 0.0;
  std::uint64_t step = 0;
  double loss = 0.0;
  std::optional<double> dev;
};

struct FinetuneResult {
  double best_learning_rate = 0.0;
  double best_dev = 0.0;
  std::uint64_t best_step = 0;
  std::size_t runs = 0;
  std::size_t skipped_examples = 0;  // no trainable target
};

// Trains from the model's current parameters once per learning rate (the
// config's own rate when `learning_rates` is empty), keeps the parameters
// with the best dev metric, and leaves them in `model`.
FinetuneResult finetune(model::Model& model, const std::vector<QaExample>& train,
                        const std::vector<QaExample>& dev,
                        const std::vector<corpus::AnnotatedDocument>& docs,
                        const FinetuneConfig& config, const std::vector<double>& learning_rates,
                        const std::function<void(const FinetuneLogEntry&)>& log = {},
                        std::size_t threads = 1);

}  // namespace readtwice::qa
