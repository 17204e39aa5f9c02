#include "app/run_config.hpp"

#include <fstream>
#include <functional>
#include <set>

#include "common/error.hpp"

namespace readtwice::app {

namespace {

using json = nlohmann::json;

struct Field {
  std::string key;
  std::function<void(const json&)> set;
  std::function<json()> get;
};

template <typename T>
Field field_of(const std::string& key, T& target) {
  return {key, [&target](const json& v) { target = v.get<T>(); }, [&target] { return json(target); }};
}

void set_memory_mode(RunConfig& c, const std::string& name) {
  c.memory_mode = name;
  // "off" switches cross-segment memory off: entity memories of the own segment only.
  if (name == "SS" || name == "E(SS)" || name == "ss" || name == "off") {
    c.model.memory.mode = model::MemoryMode::kEntity;
    c.model.memory.single_segment = true;
  } else {
    c.model.memory.mode = model::parse_memory_mode(name == "none" ? "off" : name);
    c.model.memory.single_segment = false;
  }
}

std::vector<Field> fields(RunConfig& c) {
  auto& e = c.model.encoder;
  auto& m = c.model.memory;
  auto& p = c.paths;
  return {
      {"profile", [&c](const json& v) { c.profile = parse_profile(v.get<std::string>()); },
       [&c] { return json(to_string(c.profile)); }},
      {"memory_mode", [&c](const json& v) { set_memory_mode(c, v.get<std::string>()); },
       [&c] { return json(c.memory_mode); }},
      {"vocab_size",
       [&c](const json& v) {
         if (v.is_string() && v.get<std::string>() == "auto") {
           c.vocab_size_from_vocab = true;
         } else {
           c.model.encoder.vocab_size = v.get<std::size_t>();
           c.vocab_size_from_vocab = false;
         }
       },
       [&c] { return c.vocab_size_from_vocab ? json("auto") : json(c.model.encoder.vocab_size); }},
      field_of("hidden_dim", e.hidden_dim),
      field_of("num_heads", e.num_heads),
      field_of("ffn_dim", e.ffn_dim),
      field_of("layers_first", e.layers_first),
      field_of("layers_second", e.layers_second),
      field_of("max_segment_len", e.max_segment_len),
      field_of("dropout", e.dropout),
      field_of("layer_norm_eps", e.layer_norm_eps),
      field_of("init_std", e.init_std),
      field_of("tie_mlm_output", e.tie_mlm_output),
      field_of("single_segment", m.single_segment),
      field_of("cross_document", m.cross_document),
      field_of("clip_distance", m.clip_distance),
      field_of("top_k", m.top_k),
      field_of("scaled_logits", m.scaled_logits),
      field_of("span_tokens", m.span_tokens),
      field_of("segment_window", c.segmentation.window),
      field_of("segment_overlap", c.segmentation.overlap),
      field_of("max_segments", c.segmentation.max_segments),
      field_of("seed", c.seed),
      field_of("model_seed", c.model_seed),
      field_of("eval_seed", c.eval_seed),
      field_of("steps", c.steps),
      field_of("eval_every", c.eval_every),
      field_of("checkpoint_every", c.checkpoint_every),
      field_of("batch_documents", c.pretrain.batch_documents),
      field_of("coref_weight", c.pretrain.coref_weight),
      field_of("negatives_per_positive", c.pretrain.negatives_per_positive),
      field_of("entity_mask_rate", c.pretrain.masking.entity_rate),
      field_of("span_mask_rate", c.pretrain.masking.span_rate),
      field_of("learning_rate", c.adam.learning_rate),
      field_of("warmup_steps", c.adam.warmup_steps),
      field_of("schedule_steps", c.adam.total_steps),
      field_of("weight_decay", c.adam.weight_decay),
      field_of("clip_norm", c.adam.clip_norm),
      field_of("max_answer_len", c.max_answer_len),
      field_of("question_max_tokens", c.question_max_tokens),
      field_of("early_stopping_patience", c.early_stopping_patience),
      field_of("lr_sweep", c.lr_sweep),
      field_of("option_head", c.option_head),
      field_of("rouge_oracle", c.rouge_oracle),
      field_of("probe_docs", c.probe.n_docs),
      field_of("probe_heldout_docs", c.probe_heldout_docs),
      field_of("probe_entities", c.probe.n_entities),
      field_of("probe_segments", c.probe.segments_per_doc),
      field_of("probe_values", c.probe.n_values),
      field_of("probe_fillers", c.probe.n_fillers),
      field_of("probe_segment_tokens", c.probe.segment_tokens),
      field_of("probe_facts", c.probe.facts_per_doc),
      field_of("probe_seed", c.probe_seed),
      field_of("corpus", p.corpus),
      field_of("heldout", p.heldout),
      field_of("vocab", p.vocab),
      field_of("qa", p.qa),
      field_of("dev_qa", p.dev_qa),
      field_of("manifest", p.manifest),
      field_of("heldout_manifest", p.heldout_manifest),
      field_of("output_dir", p.output_dir),
      field_of("checkpoint", p.checkpoint),
      field_of("predictions", p.predictions),
      field_of("report", p.report),
  };
}

void apply_profile(RunConfig& c) {
  switch (c.profile) {
    case TaskProfile::kPretrain:
      c.segmentation = corpus::SegmentationProfile::pretrain();
      break;
    case TaskProfile::kHotpot:
      c.segmentation = corpus::SegmentationProfile::finetune();
      c.option_head = true;
      break;
    case TaskProfile::kTrivia:
      c.segmentation = corpus::SegmentationProfile::finetune();
      break;
    case TaskProfile::kNarrative:
      c.segmentation = corpus::SegmentationProfile::finetune();
      c.model.memory.top_k = 100;
      c.rouge_oracle = true;
      break;
    case TaskProfile::kProbe:
      c.segmentation = {c.probe.segment_tokens, 0, 128};
      c.model.encoder.max_segment_len = c.probe.segment_tokens + 1;
      c.steps = 2000;
      c.eval_every = 250;
      c.adam.learning_rate = 2e-3;
      c.adam.warmup_steps = 100;
      c.pretrain.batch_documents = 8;
      c.probe.n_docs = 400;
      c.probe_heldout_docs = 100;
      break;
  }
}

void apply(RunConfig& c, const json& obj, const std::string& origin) {
  if (!obj.is_object()) fail(ErrorKind::kParse, origin + ": configuration must be a JSON object");
  auto table = fields(c);
  std::set<std::string> known;
  for (const auto& f : table) known.insert(f.key);
  for (const auto& [key, value] : obj.items()) {
    if (!known.count(key)) fail(ErrorKind::kInvalidArgument, origin + ": unknown key '" + key + "'");
  }
  for (const auto& f : table) {
    if (f.key == "profile" || !obj.contains(f.key)) continue;
    try {
      f.set(obj.at(f.key));
    } catch (const json::exception& e) {
      fail(ErrorKind::kInvalidArgument, origin + ": bad value for '" + f.key + "': " + e.what());
    }
  }
}

}  // namespace

TaskProfile parse_profile(const std::string& name) {
  if (name == "pretrain") return TaskProfile::kPretrain;
  if (name == "hotpot" || name == "hotpot-style") return TaskProfile::kHotpot;
  if (name == "trivia" || name == "trivia-style") return TaskProfile::kTrivia;
  if (name == "narrative" || name == "narrative-style") return TaskProfile::kNarrative;
  if (name == "probe") return TaskProfile::kProbe;
  fail(ErrorKind::kInvalidArgument, "unknown profile '" + name + "'");
}

std::string to_string(TaskProfile profile) {
  switch (profile) {
    case TaskProfile::kPretrain: return "pretrain";
    case TaskProfile::kHotpot: return "hotpot";
    case TaskProfile::kTrivia: return "trivia";
    case TaskProfile::kNarrative: return "narrative";
    case TaskProfile::kProbe: return "probe";
  }
  return "pretrain";
}

nlohmann::json RunConfig::to_json() const {
  json out = json::object();
  auto& self = const_cast<RunConfig&>(*this);
  for (const auto& f : fields(self)) out[f.key] = f.get();
  return out;
}

qa::DevMetric RunConfig::dev_metric() const {
  return profile == TaskProfile::kNarrative ? qa::DevMetric::kRougeL : qa::DevMetric::kF1;
}

qa::FinetuneConfig RunConfig::finetune_config() const {
  qa::FinetuneConfig f;
  f.adam = adam;
  f.steps = steps;
  f.eval_every = eval_every;
  f.patience = early_stopping_patience;
  f.seed = seed;
  f.max_answer_len = max_answer_len;
  f.option_head = option_head;
  f.dev_metric = dev_metric();
  return f;
}

RunConfig resolve_config(const nlohmann::json& file, const nlohmann::json& overrides) {
  RunConfig c;
  std::string profile = "pretrain";
  if (overrides.contains("profile")) profile = overrides.at("profile").get<std::string>();
  else if (file.contains("profile")) profile = file.at("profile").get<std::string>();
  c.profile = parse_profile(profile);
  // Probe sizes feed the probe profile's segment window.
  for (const json* src : {&file, &overrides}) {
    if (src->contains("probe_segment_tokens")) {
      c.probe.segment_tokens = src->at("probe_segment_tokens").get<std::size_t>();
    }
  }
  apply_profile(c);
  apply(c, file, "config");
  apply(c, overrides, "overrides");
  c.model.validate();
  c.segmentation.validate();
  if (c.profile == TaskProfile::kProbe) c.probe.validate();
  return c;
}

RunConfig load_config(const std::string& path, const nlohmann::json& overrides) {
  json file = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::kIo, "cannot open config " + path);
    try {
      in >> file;
    } catch (const json::exception& e) {
      fail(ErrorKind::kParse, path + ": " + e.what());
    }
  }
  return resolve_config(file, overrides);
}

std::vector<std::string> config_keys() {
  RunConfig c;
  std::vector<std::string> keys;
  for (const auto& f : fields(c)) keys.push_back(f.key);
  return keys;
}

}  // namespace readtwice::app
