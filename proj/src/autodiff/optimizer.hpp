#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "autodiff/checkpoint.hpp"
#include "autodiff/parameter.hpp"

namespace readtwice::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;      // decoupled, skipped for biases / norms
  std::uint64_t warmup_steps = 0;  // linear ramp from 0 to learning_rate
  std::uint64_t total_steps = 0;   // linear decay to 0 after warmup; 0 keeps lr flat
  double clip_norm = 1.0;          // global gradient norm clip; <= 0 disables
};

// Adam with linear warmup/decay over the grads accumulated in a ParamStore.
class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  // Applies one update and returns the pre-clip global gradient norm.
  double step(ParamStore& params);
  double current_learning_rate() const;
  std::uint64_t steps_taken() const { return step_; }
  const AdamConfig& config() const { return config_; }

  void save(Checkpoint& ckpt) const;
  void load(const Checkpoint& ckpt);

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::map<std::string, std::vector<double>> first_moment_;
  std::map<std::string, std::vector<double>> second_moment_;
};

}  // namespace readtwice::ad
