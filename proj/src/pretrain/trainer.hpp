#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "autodiff/optimizer.hpp"
#include "model/model.hpp"
#include "pipeline/inputs.hpp"
#include "pretrain/losses.hpp"
#include "pretrain/masking.hpp"

namespace readtwice::pretrain {

struct PretrainConfig {
  MaskingConfig masking;
  double coref_weight = 1.0;
  std::size_t negatives_per_positive = 10;  // 0 = exhaustive pairs
  std::size_t batch_documents = 8;
  std::uint64_t seed = 0;
};

struct TrainingDocument {
  pipeline::EncodedDocument encoded;
  // Model positions per segment that are always masked (probe positions).
  std::vector<std::vector<std::size_t>> forced;
};

// Builds training documents; `forced` maps document index to document token
// positions that must be masked.
std::vector<TrainingDocument> make_training_documents(
    const std::vector<corpus::AnnotatedDocument>& docs, const corpus::SegmentationProfile& profile,
    const std::map<std::size_t, std::vector<std::size_t>>& forced = {});

struct LossBreakdown {
  ad::Var total;
  MlmResult mlm;
  CorefResult coref;
  double coref_weight = 0.0;  // effective weight (0 outside entity mode)
};

std::vector<MaskedSegment> mask_batch(std::span<const TrainingDocument* const> docs, Rng& rng,
                                      const MaskingConfig& config, std::size_t vocab_size);

// total = mlm + weight * coref, on masked copies of the batch inputs.
LossBreakdown pretrain_loss(ad::Tape& tape, model::Model& model,
                            std::span<const model::SegmentInput> inputs,
                            std::span<const MaskedSegment> masks, const PretrainConfig& config,
                            Rng& rng);

struct StepMetrics {
  std::uint64_t step = 0;
  double total = 0.0;
  double mlm = 0.0;
  double coref = 0.0;
  std::size_t masked = 0;
  std::size_t coref_pairs = 0;
  bool mlm_empty = false;
  double grad_norm = 0.0;
  double learning_rate = 0.0;
};

// Documents for step `step`: a deterministic function of (seed, step).
std::vector<std::size_t> select_batch(std::size_t n_docs, std::size_t batch_documents,
                                      std::uint64_t seed, std::uint64_t step);

// One update on the given documents. Masking, negatives and dropout draw from
// Rng::derive(config.seed, step). Throws ErrorKind::kNumeric on a non-finite loss.
StepMetrics pretrain_step(model::Model& model, ad::Adam& adam,
                          std::span<const TrainingDocument* const> batch,
                          const PretrainConfig& config, std::uint64_t step);

struct MlmAccuracy {
  double all = 0.0;
  double entity = 0.0;
  std::size_t all_count = 0;
  std::size_t entity_count = 0;
};

// Argmax accuracy at masked positions, overall and at entity tokens. Each
// document is read on its own with masks from Rng::derive(seed, index).
// forced_only masks exactly the forced positions (with [MASK]) and nothing else.
MlmAccuracy mlm_accuracy(model::Model& model, std::span<const TrainingDocument> docs,
                         const MaskingConfig& masking, std::uint64_t seed, bool forced_only,
                         std::size_t threads = 1);

struct TrainLoopOptions {
  std::uint64_t steps = 0;
  std::uint64_t eval_every = 0;        // 0 = only at the end
  std::uint64_t checkpoint_every = 0;  // 0 = only at the end
  std::filesystem::path checkpoint_path;
  std::map<std::string, std::string> checkpoint_metadata;
};

struct TrainLoopHooks {
  std::function<void(const StepMetrics&)> on_step;
  std::function<void(std::uint64_t step)> on_eval;
};

void save_training_state(const std::filesystem::path& path, const model::Model& model,
                         const ad::Adam& adam, std::map<std::string, std::string> metadata);
// Restores parameters and optimizer state; returns the stored metadata.
std::map<std::string, std::string> load_training_state(const std::filesystem::path& path,
                                                       model::Model& model, ad::Adam* adam);

// Steps from adam.steps_taken() up to options.steps.
void run_pretraining(model::Model& model, ad::Adam& adam, std::span<const TrainingDocument> docs,
                     const PretrainConfig& config, const TrainLoopOptions& options,
                     const TrainLoopHooks& hooks);

}  // namespace readtwice::pretrain
