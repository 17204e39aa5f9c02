#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "autodiff/rng.hpp"
#include "model/memory.hpp"

namespace readtwice::pretrain {

struct MaskingConfig {
  double entity_rate = 0.25;  // per mention
  double span_rate = 0.15;    // share of non-entity tokens
  double mask_token_prob = 0.8;
  double random_token_prob = 0.1;
  double span_geometric_p = 0.25;
  std::size_t min_span = 1;
  std::size_t max_span = 10;
};

struct MaskedSegment {
  std::vector<std::size_t> input_ids;
  std::vector<std::size_t> labels;  // original ids; meaningful where masked
  std::vector<std::uint8_t> masked;
  std::vector<std::uint8_t> entity;  // token lies inside a mention
  std::vector<std::size_t> positions;  // masked positions, ascending

  std::size_t masked_count() const { return positions.size(); }
};

// Whole mentions are masked with probability entity_rate each. Non-entity
// tokens get contiguous spans (geometric lengths in [min_span, max_span]) that
// avoid mentions and each other until span_rate of them are covered. Masked
// tokens become [MASK] / a random word / themselves with 80/10/10 odds.
// `maskable` limits which positions may be masked (empty = all). Positions in
// `forced` are always masked and always become [MASK]; a forced position
// inside a mention masks the whole mention.
MaskedSegment mask_tokens(std::span<const std::size_t> token_ids,
                          std::span<const model::Mention> mentions,
                          std::span<const std::uint8_t> maskable, Rng& rng,
                          const MaskingConfig& config, std::size_t vocab_size,
                          std::span<const std::size_t> forced = {});

// Only `positions` are masked, all with [MASK]. Used for probe evaluation.
MaskedSegment mask_exactly(std::span<const std::size_t> token_ids,
                           std::span<const model::Mention> mentions,
                           std::span<const std::size_t> positions);

}  // namespace readtwice::pretrain
