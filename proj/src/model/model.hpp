#pragma once

#include <cstdint>

#include "autodiff/parameter.hpp"
#include "autodiff/tape.hpp"
#include "model/config.hpp"

namespace readtwice::model {

struct Model {
  ModelConfig config;
  ad::ParamStore params;

  ad::Var bind(ad::Tape& tape, const std::string& path) { return tape.param(params.at(path)); }
};

// Allocates every tensor of parameter_table(config), normal-initialized with
// config.encoder.init_std where the table asks for it.
Model make_model(const ModelConfig& config, std::uint64_t seed);

}  // namespace readtwice::model
