#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "corpus/document.hpp"
#include "corpus/segment.hpp"
#include "model/readtwice.hpp"

namespace readtwice::pipeline {

// A segment laid out as model input: [CLS] (question [SEP])? window.
struct EncodedSegment {
  model::SegmentInput input;
  std::size_t window = 0;          // index into the document's SegmentationMap
  std::size_t context_offset = 0;  // model position of the first window token
  std::size_t context_length = 0;

  // 1 for window tokens, 0 for CLS / question / SEP.
  std::vector<std::uint8_t> context_mask() const;
};

struct EncodedDocument {
  std::size_t source = 0;  // index of the AnnotatedDocument
  std::vector<EncodedSegment> segments;
  corpus::SegmentationMap map;

  std::size_t document_position(std::size_t segment, std::size_t model_position) const;
};

// Sub-document k of the document becomes batch document first_doc + k, so
// segments past a sub-document boundary never share memory.
EncodedDocument encode_document(const corpus::AnnotatedDocument& doc,
                                const corpus::SegmentationProfile& profile,
                                std::size_t first_doc,
                                std::span<const std::size_t> question_ids = {});

// Renumbers batch documents 0..k-1 in order of first appearance.
std::vector<model::SegmentInput> batch_inputs(std::span<const EncodedDocument* const> docs);

}  // namespace readtwice::pipeline
