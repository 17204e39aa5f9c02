#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "corpus/document.hpp"

namespace readtwice::corpus {

struct SegmentationProfile {
  std::size_t window = 512;
  std::size_t overlap = 0;
  std::size_t max_segments = 128;  // per sub-document

  static SegmentationProfile pretrain() { return {512, 0, 128}; }
  static SegmentationProfile finetune() { return {512, 128, 128}; }

  std::size_t stride() const { return window - overlap; }
  // Largest document that fits in one sub-document.
  std::size_t sub_document_span() const { return max_segments * stride(); }
  void validate() const;
};

struct SegmentWindow {
  std::size_t sub_document = 0;
  std::size_t index = 0;  // position within its sub-document
  std::size_t offset = 0;
  std::size_t length = 0;
  std::size_t overlap_prefix = 0;  // leading tokens also covered by the previous window
};

struct SegmentationMap {
  std::vector<SegmentWindow> windows;

  std::size_t to_document(std::size_t segment, std::size_t local) const;
  std::optional<std::size_t> to_local(std::size_t segment, std::size_t doc_position) const;
  std::size_t sub_documents() const {
    return windows.empty() ? 0 : windows.back().sub_document + 1;
  }
};

struct Segment {
  std::size_t sub_document = 0;
  std::size_t index = 0;
  std::vector<std::size_t> token_ids;
  std::vector<DocMention> mentions;  // window-local, clipped
};

struct SegmentedDocument {
  std::vector<Segment> segments;
  SegmentationMap map;
};

// The document is cut into sub-documents of sub_document_span() tokens. Inside
// each, window k starts at k * stride and windows are emitted while the
// previous one left tokens uncovered, so the last window may be short.
SegmentationMap plan_windows(std::size_t n_tokens, const SegmentationProfile& profile);
SegmentedDocument segment_document(const AnnotatedDocument& doc,
                                   const SegmentationProfile& profile);

}  // namespace readtwice::corpus
