#include "model/readtwice.hpp"

#include <algorithm>

#include "model/encoder.hpp"

namespace readtwice::model {

std::size_t SegmentInput::real_length() const {
  if (attention_mask.empty()) return token_ids.size();
  return static_cast<std::size_t>(std::count(attention_mask.begin(), attention_mask.end(), 1));
}

ForwardResult read_twice(ad::Tape& tape, Model& model, std::span<const SegmentInput> batch) {
  const MemoryMode mode = model.config.memory.mode;
  ForwardResult result;
  result.segments.reserve(batch.size());
  std::vector<SegmentMemories> memories;
  memories.reserve(batch.size());

  for (const SegmentInput& seg : batch) {
    SegmentStates s;
    s.doc = seg.doc;
    s.segment = seg.segment;
    s.h0 = embed(tape, model, seg.token_ids);
    s.h1 = encode_first(tape, model, s.h0, seg.attention_mask);
    memories.push_back(extract_memories(tape, model, s.h1, seg.doc, seg.segment, seg.mentions,
                                        seg.real_length(), mode));
    result.segments.push_back(s);
  }

  result.table = gather(tape, model, memories);

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const SegmentInput& seg = batch[i];
    SegmentStates& s = result.segments[i];
    if (mode == MemoryMode::kOff) {
      s.h2 = tape.constant(ad::Tensor::matrix(s.h1.rows(), s.h1.cols()));
    } else {
      auto eligible = token_eligibility(seg.token_ids.size(), seg.mentions, mode);
      s.h2 = memory_attention(tape, model, s.h1, seg.doc, seg.segment, result.table, eligible)
                 .output;
    }
    s.h3 = merge(tape, model, s.h1, s.h2);
    s.h4 = encode_second(tape, model, s.h3, seg.attention_mask);
  }
  return result;
}

}  // namespace readtwice::model
