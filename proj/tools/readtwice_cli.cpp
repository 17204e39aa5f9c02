#include <cstdio>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "readtwice/readtwice.h"

namespace {

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::map<std::string, std::string> paths;
  std::string profile;
  std::string memory_mode;
  std::optional<long long> steps;
  std::optional<long long> seed;
  std::vector<double> lr_sweep;
  bool quiet = false;
};

void log_line(const char* line, void*) { std::fprintf(stderr, "%s\n", line); }

// key=value; the value is read as JSON when it parses, else as a string.
nlohmann::json parse_sets(const std::vector<std::string>& sets) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
    const std::string key = s.substr(0, eq), value = s.substr(eq + 1);
    auto parsed = nlohmann::json::parse(value, nullptr, false);
    out[key] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
  }
  return out;
}

nlohmann::json overrides_of(const Options& o) {
  nlohmann::json out = parse_sets(o.sets);
  for (const auto& [key, value] : o.paths) {
    if (!value.empty()) out[key] = value;
  }
  if (!o.profile.empty()) out["profile"] = o.profile;
  if (!o.memory_mode.empty()) out["memory_mode"] = o.memory_mode;
  if (o.steps) out["steps"] = *o.steps;
  if (o.seed) out["seed"] = *o.seed;
  if (!o.lr_sweep.empty()) out["lr_sweep"] = o.lr_sweep;
  return out;
}

void add_common(CLI::App* cmd, Options& o, const std::vector<std::string>& path_keys) {
  cmd->add_option("-c,--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
  cmd->add_option("-s,--set", o.sets, "Override a configuration key (key=value, repeatable)");
  cmd->add_option("--profile", o.profile,
                  "Task profile: pretrain, hotpot, trivia, narrative, probe");
  cmd->add_option("-o,--output-dir", o.paths["output_dir"], "Directory for outputs");
  cmd->add_flag("-q,--quiet", o.quiet, "No progress output");
  for (const auto& key : path_keys) {
    std::string flag = "--" + key;
    for (auto& ch : flag) {
      if (ch == '_') ch = '-';
    }
    cmd->add_option(flag, o.paths[key], "Path: " + key);
  }
}

int run(const std::string& command, const Options& o) {
  std::string overrides;
  try {
    overrides = overrides_of(o).dump();
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(RT_ERR_INVALID_ARGUMENT);
  }
  rt_context* ctx = nullptr;
  rt_status status = rt_context_create(o.config.empty() ? nullptr : o.config.c_str(),
                                       overrides.c_str(), &ctx);
  if (status != RT_OK) {
    std::fprintf(stderr, "error: %s: %s\n", rt_status_string(status), rt_last_error());
    return static_cast<int>(status);
  }
  if (!o.quiet) rt_context_set_log(ctx, log_line, nullptr);
  status = rt_run(ctx, command.c_str());
  const std::string result = rt_context_result(ctx);
  if (!result.empty()) std::printf("%s\n", result.c_str());
  if (status != RT_OK) {
    std::fprintf(stderr, "error: %s: %s\n", rt_status_string(status), rt_last_error());
  }
  rt_context_destroy(ctx);
  return static_cast<int>(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-pass segmented reader: pretraining, QA fine-tuning and evaluation.\n"
               "Thread count comes from RT_NUM_THREADS (default 1)."};
  app.set_version_flag("--version", rt_version());
  app.require_subcommand(0, 1);

  bool list_keys = false;
  app.add_flag("--list-keys", list_keys, "Print every configuration key and exit");

  Options opts;
  std::string chosen;
  auto add = [&](const std::string& name, const std::string& help,
                 const std::vector<std::string>& path_keys) {
    CLI::App* cmd = app.add_subcommand(name, help);
    add_common(cmd, opts, path_keys);
    cmd->callback([&chosen, name] { chosen = name; });
    return cmd;
  };

  auto* pretrain = add("pretrain", "Masked-LM (+ coreference) pretraining; resumes from --checkpoint",
                       {"corpus", "heldout", "vocab", "manifest", "heldout_manifest", "checkpoint"});
  pretrain->add_option("--memory-mode", opts.memory_mode, "E, SS (= off), CLS, STS or none");
  pretrain->add_option("--steps", opts.steps, "Training steps");
  pretrain->add_option("--seed", opts.seed, "Training seed");

  auto* finetune = add("finetune", "Fine-tune QA heads from a pretraining checkpoint",
                       {"corpus", "vocab", "qa", "dev_qa", "checkpoint"});
  finetune->add_option("--memory-mode", opts.memory_mode, "E, SS (= off), CLS, STS or none");
  finetune->add_option("--steps", opts.steps, "Training steps per learning rate");
  finetune->add_option("--seed", opts.seed, "Training seed");
  finetune->add_option("--lr-sweep", opts.lr_sweep, "Learning rates to sweep, best by dev metric");

  add("predict", "Answer every question of --qa", {"corpus", "vocab", "qa", "checkpoint", "predictions"});
  add("evaluate", "Score predictions against gold answers, or probe accuracy for the probe profile",
      {"corpus", "heldout", "vocab", "qa", "predictions", "report", "checkpoint", "manifest",
       "heldout_manifest"});
  auto* gradcheck = add("gradcheck", "Finite-difference check of every training loss", {});
  gradcheck->add_option("--seed", opts.seed, "Fixture seed");
  add("gen-probe", "Write the synthetic cross-segment probe corpus", {});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (list_keys) {
    std::fputs(rt_config_keys(), stdout);
    return 0;
  }
  if (chosen.empty()) {
    std::fputs(app.help().c_str(), stderr);
    return static_cast<int>(RT_ERR_INVALID_ARGUMENT);
  }
  if (chosen == "gen-probe" && opts.profile.empty()) opts.profile = "probe";
  return run(chosen, opts);
}
