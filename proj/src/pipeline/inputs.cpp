#include "pipeline/inputs.hpp"

#include <map>

#include "common/error.hpp"

namespace readtwice::pipeline {

std::vector<std::uint8_t> EncodedSegment::context_mask() const {
  std::vector<std::uint8_t> mask(input.token_ids.size(), 0);
  for (std::size_t i = 0; i < context_length; ++i) mask[context_offset + i] = 1;
  return mask;
}

std::size_t EncodedDocument::document_position(std::size_t segment,
                                               std::size_t model_position) const {
  const EncodedSegment& s = segments.at(segment);
  if (model_position < s.context_offset || model_position >= s.context_offset + s.context_length) {
    fail(ErrorKind::kInvalidArgument, "position is not a context token");
  }
  return map.to_document(s.window, model_position - s.context_offset);
}

EncodedDocument encode_document(const corpus::AnnotatedDocument& doc,
                                const corpus::SegmentationProfile& profile,
                                std::size_t first_doc,
                                std::span<const std::size_t> question_ids) {
  corpus::SegmentedDocument segmented = corpus::segment_document(doc, profile);
  EncodedDocument out;
  out.map = segmented.map;
  std::vector<std::size_t> prefix{corpus::kClsId};
  if (!question_ids.empty()) {
    prefix.insert(prefix.end(), question_ids.begin(), question_ids.end());
    prefix.push_back(corpus::kSepId);
  }
  for (std::size_t k = 0; k < segmented.segments.size(); ++k) {
    const corpus::Segment& seg = segmented.segments[k];
    EncodedSegment e;
    e.window = k;
    e.context_offset = prefix.size();
    e.context_length = seg.token_ids.size();
    e.input.doc = first_doc + seg.sub_document;
    e.input.segment = seg.index;
    e.input.token_ids = prefix;
    e.input.token_ids.insert(e.input.token_ids.end(), seg.token_ids.begin(), seg.token_ids.end());
    for (const auto& m : seg.mentions) {
      e.input.mentions.push_back({m.begin + e.context_offset, m.end + e.context_offset, m.entity_id});
    }
    out.segments.push_back(std::move(e));
  }
  return out;
}

std::vector<model::SegmentInput> batch_inputs(std::span<const EncodedDocument* const> docs) {
  std::vector<model::SegmentInput> out;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> renumber;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    for (const auto& s : docs[d]->segments) {
      auto key = std::make_pair(d, s.input.doc);
      auto it = renumber.try_emplace(key, renumber.size()).first;
      model::SegmentInput in = s.input;
      in.doc = it->second;
      out.push_back(std::move(in));
    }
  }
  return out;
}

}  // namespace readtwice::pipeline
