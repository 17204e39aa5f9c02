#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace readtwice::model {

enum class MemoryMode { kOff, kCls, kSts, kEntity };

MemoryMode parse_memory_mode(const std::string& name);
std::string to_string(MemoryMode mode);

struct EncoderConfig {
  std::size_t vocab_size = 512;
  std::size_t hidden_dim = 64;
  std::size_t num_heads = 4;
  std::size_t ffn_dim = 256;
  std::size_t layers_first = 2;
  std::size_t layers_second = 2;
  std::size_t max_segment_len = 513;  // 512 window tokens plus [CLS]
  double dropout = 0.0;
  double layer_norm_eps = 1e-6;
  double init_std = 0.02;
  // MLM output projection shares the token embedding table.
  bool tie_mlm_output = true;
};

struct MemoryConfig {
  MemoryMode mode = MemoryMode::kEntity;
  // SS ablation: a segment only sees memories it produced itself.
  bool single_segment = false;
  // Let segments attend to memories of other documents in the batch.
  bool cross_document = false;
  int clip_distance = 10;
  std::size_t top_k = 0;  // 0 = attend to every eligible entry
  bool scaled_logits = false;
  std::size_t span_tokens = 32;  // STS span width
};

struct ModelConfig {
  EncoderConfig encoder;
  MemoryConfig memory;

  // Throws ErrorKind::kInvalidArgument on the first violated invariant.
  void validate() const;
};

enum class Init { kNormal, kZeros, kOnes };

struct ParamSpec {
  std::string path;
  std::vector<std::size_t> shape;
  Init init;
};

// Every learnable tensor of the model. Used both to allocate parameters and to
// count them symbolically for configurations too large to allocate.
std::vector<ParamSpec> parameter_table(const ModelConfig& config);

// Sum of element counts of the specs whose path starts with `prefix`.
std::size_t count_parameters(const std::vector<ParamSpec>& table, const std::string& prefix = "");

}  // namespace readtwice::model
