#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "autodiff/grad_check.hpp"
#include "model/model.hpp"
#include "model/readtwice.hpp"

namespace readtwice::app {

inline constexpr double kGradCheckTolerance = 1e-4;

struct LossCheck {
  std::string loss;
  ad::GradCheckResult result;
  std::vector<std::string> groups;  // parameter groups touched, e.g. "first/layer0/attn"
  bool passed = false;
};

// Tiny double-precision model and a 2-segment x 16-token entity-mode batch.
struct GradCheckFixture {
  model::Model model;
  std::vector<model::SegmentInput> batch;
};

GradCheckFixture make_gradcheck_fixture(std::uint64_t seed);

// mlm_loss, coref_loss, span_loss and the option loss, each against finite
// differences over every parameter it touches.
std::vector<LossCheck> run_gradcheck_suite(std::uint64_t seed, double tolerance = kGradCheckTolerance);

std::string format_gradcheck_table(const std::vector<LossCheck>& checks);

}  // namespace readtwice::app
