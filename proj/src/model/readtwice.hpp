#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "autodiff/tape.hpp"
#include "model/memory.hpp"
#include "model/model.hpp"

namespace readtwice::model {

// One segment as the model sees it: [CLS] (+ question prefix) + window tokens,
// optionally right-padded.
struct SegmentInput {
  std::size_t doc = 0;      // batch-local memory-sharing unit
  std::size_t segment = 0;  // document-local segment index
  std::vector<std::size_t> token_ids;
  std::vector<std::uint8_t> attention_mask;  // empty = no padding
  std::vector<Mention> mentions;             // model-input positions

  std::size_t real_length() const;
};

struct SegmentStates {
  std::size_t doc = 0;
  std::size_t segment = 0;
  ad::Var h0, h1, h2, h3, h4;
};

struct ForwardResult {
  std::vector<SegmentStates> segments;
  MemoryTable table;
};

// Full two-pass read of a batch: independent first reads, memory extraction,
// gather, memory attention, merge, second read.
ForwardResult read_twice(ad::Tape& tape, Model& model, std::span<const SegmentInput> batch);

}  // namespace readtwice::model
