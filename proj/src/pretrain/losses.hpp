#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "autodiff/rng.hpp"
#include "autodiff/tape.hpp"
#include "model/memory.hpp"
#include "model/model.hpp"
#include "pretrain/masking.hpp"

namespace readtwice::pretrain {

// Vocabulary logits for rows of second-reader output: dense, GELU, LayerNorm,
// then the (tied) output embedding plus a per-token bias.
ad::Var mlm_logits(ad::Tape& tape, model::Model& model, ad::Var rows);

struct MlmResult {
  ad::Var loss;
  std::size_t count = 0;
  bool empty = false;  // no masked positions; loss is the constant 0
  std::optional<ad::Var> logits;  // [count x vocab], rows in batch order
  std::vector<std::size_t> labels;
  std::vector<std::uint8_t> entity;  // per row
};

// Mean cross-entropy over every masked position of every segment.
MlmResult mlm_loss(ad::Tape& tape, model::Model& model, std::span<const ad::Var> h4,
                   std::span<const MaskedSegment> masks);

struct CorefPair {
  std::size_t first = 0;
  std::size_t second = 0;
  bool positive = false;
};

// Pairs of linked table entries. Positives: same entity, different segment.
// Exhaustive (negatives_per_positive == 0): all positives plus every pair of
// entries with different entities. Otherwise each positive (m, m') adds that
// many negatives (m, n), n drawn with replacement among entries whose entity
// differs from m's.
std::vector<CorefPair> coref_pairs(std::span<const model::MemoryEntry> entries,
                                   std::size_t negatives_per_positive, Rng* rng);

struct CorefResult {
  ad::Var loss;
  std::size_t pairs = 0;
};

// Mean logistic loss of sigmoid(M_m . M_m' + b0) over the pairs; 0 without pairs.
CorefResult coref_loss(ad::Tape& tape, model::Model& model, const model::MemoryTable& table,
                       std::span<const CorefPair> pairs);

}  // namespace readtwice::pretrain
