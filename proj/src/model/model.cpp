#include "model/model.hpp"

#include "autodiff/rng.hpp"

namespace readtwice::model {

Model make_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config = config;
  Rng rng(seed);
  for (const ParamSpec& spec : parameter_table(config)) {
    ad::Tensor t(spec.shape, spec.init == Init::kOnes ? 1.0 : 0.0);
    if (spec.init == Init::kNormal) {
      for (double& v : t.values()) v = rng.normal(0.0, config.encoder.init_std);
    }
    m.params.add(spec.path, std::move(t));
  }
  return m;
}

}  // namespace readtwice::model
