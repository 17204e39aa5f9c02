#include "model/config.hpp"

#include "common/error.hpp"

namespace readtwice::model {

MemoryMode parse_memory_mode(const std::string& name) {
  if (name == "off" || name == "none") return MemoryMode::kOff;
  if (name == "CLS" || name == "cls") return MemoryMode::kCls;
  if (name == "STS" || name == "sts") return MemoryMode::kSts;
  if (name == "E" || name == "e" || name == "entity") return MemoryMode::kEntity;
  fail(ErrorKind::kInvalidArgument, "unknown memory mode '" + name + "' (expected off|CLS|STS|E)");
}

std::string to_string(MemoryMode mode) {
  switch (mode) {
    case MemoryMode::kOff: return "off";
    case MemoryMode::kCls: return "CLS";
    case MemoryMode::kSts: return "STS";
    case MemoryMode::kEntity: return "E";
  }
  return "?";
}

void ModelConfig::validate() const {
  const auto& e = encoder;
  auto require = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::kInvalidArgument, "invalid model config: " + what);
  };
  require(e.vocab_size >= 5, "vocab_size must cover the special tokens");
  require(e.hidden_dim > 0, "hidden_dim must be positive");
  require(e.num_heads > 0 && e.hidden_dim % e.num_heads == 0,
          "hidden_dim must be divisible by num_heads");
  require(e.ffn_dim > 0, "ffn_dim must be positive");
  require(e.max_segment_len >= 1, "max_segment_len must be >= 1");
  require(e.dropout >= 0.0 && e.dropout < 1.0, "dropout must be in [0, 1)");
  require(e.layer_norm_eps > 0.0, "layer_norm_eps must be positive");
  require(memory.clip_distance >= 0, "clip_distance must be >= 0");
  require(memory.span_tokens >= 1, "span_tokens must be >= 1");
}

namespace {

void add_layer(std::vector<ParamSpec>& t, const std::string& prefix, std::size_t d,
               std::size_t f) {
  for (const char* name : {"query", "key", "value", "output"}) {
    t.push_back({prefix + "/attn/" + name + "/w", {d, d}, Init::kNormal});
    t.push_back({prefix + "/attn/" + name + "/b", {1, d}, Init::kZeros});
  }
  t.push_back({prefix + "/attn_norm/gamma", {1, d}, Init::kOnes});
  t.push_back({prefix + "/attn_norm/beta", {1, d}, Init::kZeros});
  t.push_back({prefix + "/ffn/in/w", {d, f}, Init::kNormal});
  t.push_back({prefix + "/ffn/in/b", {1, f}, Init::kZeros});
  t.push_back({prefix + "/ffn/out/w", {f, d}, Init::kNormal});
  t.push_back({prefix + "/ffn/out/b", {1, d}, Init::kZeros});
  t.push_back({prefix + "/ffn_norm/gamma", {1, d}, Init::kOnes});
  t.push_back({prefix + "/ffn_norm/beta", {1, d}, Init::kZeros});
}

}  // namespace

std::vector<ParamSpec> parameter_table(const ModelConfig& config) {
  const auto& e = config.encoder;
  const std::size_t d = e.hidden_dim;
  std::vector<ParamSpec> t;
  t.push_back({"embed/token/w", {e.vocab_size, d}, Init::kNormal});
  t.push_back({"embed/position/w", {e.max_segment_len, d}, Init::kNormal});
  for (std::size_t i = 0; i < e.layers_first; ++i) {
    add_layer(t, "first/layer" + std::to_string(i), d, e.ffn_dim);
  }
  for (std::size_t i = 0; i < e.layers_second; ++i) {
    add_layer(t, "second/layer" + std::to_string(i), d, e.ffn_dim);
  }
  const std::size_t scores = 2 * static_cast<std::size_t>(config.memory.clip_distance) + 1;
  t.push_back({"memory/project/w", {2 * d, d}, Init::kNormal});
  t.push_back({"memory/project/b", {1, d}, Init::kZeros});
  t.push_back({"memory/noop", {1, d}, Init::kNormal});
  t.push_back({"memory/position_scores", {1, scores}, Init::kZeros});
  t.push_back({"memory/merge_norm/gamma", {1, d}, Init::kOnes});
  t.push_back({"memory/merge_norm/beta", {1, d}, Init::kZeros});

  t.push_back({"mlm/transform/w", {d, d}, Init::kNormal});
  t.push_back({"mlm/transform/b", {1, d}, Init::kZeros});
  t.push_back({"mlm/norm/gamma", {1, d}, Init::kOnes});
  t.push_back({"mlm/norm/beta", {1, d}, Init::kZeros});
  t.push_back({"mlm/output_bias", {1, e.vocab_size}, Init::kZeros});
  if (!e.tie_mlm_output) t.push_back({"mlm/decoder/w", {e.vocab_size, d}, Init::kNormal});
  t.push_back({"coref/bias", {1, 1}, Init::kZeros});

  t.push_back({"qa/ffn/w", {d, d}, Init::kNormal});
  t.push_back({"qa/ffn/b", {1, d}, Init::kZeros});
  t.push_back({"qa/begin/w", {d, 1}, Init::kNormal});
  t.push_back({"qa/end/w", {d, 1}, Init::kNormal});
  t.push_back({"qa/option/w", {d, 3}, Init::kNormal});
  t.push_back({"qa/option/b", {1, 3}, Init::kZeros});
  return t;
}

std::size_t count_parameters(const std::vector<ParamSpec>& table, const std::string& prefix) {
  std::size_t n = 0;
  for (const auto& spec : table) {
    if (spec.path.rfind(prefix, 0) != 0) continue;
    std::size_t k = 1;
    for (std::size_t s : spec.shape) k *= s;
    n += k;
  }
  return n;
}

}  // namespace readtwice::model
