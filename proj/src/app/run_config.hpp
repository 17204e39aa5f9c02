#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "autodiff/optimizer.hpp"
#include "corpus/probe.hpp"
#include "corpus/segment.hpp"
#include "model/config.hpp"
#include "pretrain/trainer.hpp"
#include "qa/finetune.hpp"

namespace readtwice::app {

enum class TaskProfile { kPretrain, kHotpot, kTrivia, kNarrative, kProbe };

TaskProfile parse_profile(const std::string& name);
std::string to_string(TaskProfile profile);

struct Paths {
  std::string corpus;
  std::string heldout;
  std::string vocab;
  std::string qa;
  std::string dev_qa;
  std::string manifest;
  std::string heldout_manifest;
  std::string output_dir = "out";
  std::string checkpoint;
  std::string predictions;
  std::string report;
};

struct RunConfig {
  TaskProfile profile = TaskProfile::kPretrain;
  std::string memory_mode = "E";
  model::ModelConfig model;
  bool vocab_size_from_vocab = true;
  corpus::SegmentationProfile segmentation = corpus::SegmentationProfile::pretrain();

  std::uint64_t seed = 0;
  std::uint64_t model_seed = 0;
  std::uint64_t eval_seed = 1234;
  std::uint64_t steps = 1000;
  std::uint64_t eval_every = 100;
  std::uint64_t checkpoint_every = 0;
  pretrain::PretrainConfig pretrain;
  ad::AdamConfig adam;

  std::size_t max_answer_len = 30;
  std::size_t question_max_tokens = 64;
  std::size_t early_stopping_patience = 0;
  std::vector<double> lr_sweep;
  bool option_head = false;
  bool rouge_oracle = false;

  corpus::ProbeConfig probe;
  std::size_t probe_heldout_docs = 200;
  std::uint64_t probe_seed = 17;

  Paths paths;

  // The resolved configuration, every key present.
  nlohmann::json to_json() const;
  qa::FinetuneConfig finetune_config() const;
  qa::DevMetric dev_metric() const;
};

// Applies the profile's defaults, then every key of `file`, then `overrides`.
// Unknown keys and ill-typed values throw before any work starts.
RunConfig resolve_config(const nlohmann::json& file,
                         const nlohmann::json& overrides = nlohmann::json::object());
RunConfig load_config(const std::string& path,
                      const nlohmann::json& overrides = nlohmann::json::object());

std::vector<std::string> config_keys();

}  // namespace readtwice::app
