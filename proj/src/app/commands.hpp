#pragma once

#include <functional>
#include <string>

#include <nlohmann/json.hpp>

#include "app/run_config.hpp"

namespace readtwice::app {

// Progress lines go through this sink; empty = silent.
using LogSink = std::function<void(const std::string&)>;

// Each command writes config.json (the resolved configuration) into
// paths.output_dir before doing any work, and returns a summary object that is
// also written next to its outputs.

// Trains from scratch, or resumes when paths.checkpoint names an existing
// training state. Writes checkpoint.rtw and metrics.jsonl.
nlohmann::json cmd_pretrain(const RunConfig& config, const LogSink& log = {});

// Loads paths.checkpoint, trains the QA heads and encoder on paths.qa with dev
// selection on paths.dev_qa. Writes finetuned.rtw and finetune_log.jsonl.
nlohmann::json cmd_finetune(const RunConfig& config, const LogSink& log = {});

// Writes predictions for every question of paths.qa.
nlohmann::json cmd_predict(const RunConfig& config, const LogSink& log = {});

// QA profiles: scores paths.predictions against paths.qa.
// Probe profile: probe-position and entity/all MLM accuracy of paths.checkpoint
// on the held-out corpus.
nlohmann::json cmd_evaluate(const RunConfig& config, const LogSink& log = {});

// Finite-difference check of every loss; summary["passed"] is the verdict.
nlohmann::json cmd_gradcheck(const RunConfig& config, const LogSink& log = {});

// Writes vocab.txt, corpus.jsonl, heldout.jsonl, manifest.jsonl and
// heldout_manifest.jsonl.
nlohmann::json cmd_gen_probe(const RunConfig& config, const LogSink& log = {});

}  // namespace readtwice::app
