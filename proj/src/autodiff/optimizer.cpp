#include "autodiff/optimizer.hpp"

#include <cmath>

#include "common/error.hpp"

namespace readtwice::ad {

namespace {

bool decays(const std::string& path) {
  // Weight matrices end in "/w"; biases, norms, position scores do not decay.
  return path.size() >= 2 && path.compare(path.size() - 2, 2, "/w") == 0;
}

}  // namespace

double Adam::current_learning_rate() const {
  const double t = static_cast<double>(step_ + 1);
  if (config_.warmup_steps && step_ < config_.warmup_steps) {
    return config_.learning_rate * t / static_cast<double>(config_.warmup_steps);
  }
  if (config_.total_steps > config_.warmup_steps) {
    const double span = static_cast<double>(config_.total_steps - config_.warmup_steps);
    const double done = static_cast<double>(step_ - config_.warmup_steps);
    return config_.learning_rate * std::max(0.0, 1.0 - done / span);
  }
  return config_.learning_rate;
}

double Adam::step(ParamStore& params) {
  double sq = 0.0;
  params.for_each([&](const Parameter& p) {
    for (double g : p.grad) sq += g * g;
  });
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) fail(ErrorKind::kNumeric, "non-finite gradient norm");
  const double clip = (config_.clip_norm > 0.0 && norm > config_.clip_norm)
                          ? config_.clip_norm / norm
                          : 1.0;

  const double lr = current_learning_rate();
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  params.for_each([&](Parameter& p) {
    auto& m = first_moment_[p.path];
    auto& v = second_moment_[p.path];
    if (m.size() != p.value.size()) {
      m.assign(p.value.size(), 0.0);
      v.assign(p.value.size(), 0.0);
    }
    const bool wd = config_.weight_decay > 0.0 && decays(p.path);
    auto& x = p.value.values();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double g = p.grad[i] * clip;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config_.epsilon);
      x[i] -= lr * (update + (wd ? config_.weight_decay * x[i] : 0.0));
    }
  });
  return norm;
}

void Adam::save(Checkpoint& ckpt) const {
  ckpt.metadata["optimizer/step"] = std::to_string(step_);
  for (const auto& [path, m] : first_moment_) {
    ckpt.tensors["optimizer/m/" + path] = Tensor({m.size()}, m);
  }
  for (const auto& [path, v] : second_moment_) {
    ckpt.tensors["optimizer/v/" + path] = Tensor({v.size()}, v);
  }
}

void Adam::load(const Checkpoint& ckpt) {
  first_moment_.clear();
  second_moment_.clear();
  auto it = ckpt.metadata.find("optimizer/step");
  step_ = it == ckpt.metadata.end() ? 0 : std::stoull(it->second);
  const std::string m_prefix = "optimizer/m/";
  const std::string v_prefix = "optimizer/v/";
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.rfind(m_prefix, 0) == 0) first_moment_[name.substr(m_prefix.size())] = t.values();
    if (name.rfind(v_prefix, 0) == 0) second_moment_[name.substr(v_prefix.size())] = t.values();
  }
}

}  // namespace readtwice::ad
