#include "corpus/segment.hpp"

#include <algorithm>

#include "common/error.hpp"

namespace readtwice::corpus {

void SegmentationProfile::validate() const {
  if (window == 0) fail(ErrorKind::kInvalidArgument, "segment window must be positive");
  if (overlap >= window) fail(ErrorKind::kInvalidArgument, "overlap must be smaller than the window");
  if (max_segments == 0) fail(ErrorKind::kInvalidArgument, "max_segments must be positive");
}

std::size_t SegmentationMap::to_document(std::size_t segment, std::size_t local) const {
  const SegmentWindow& w = windows.at(segment);
  if (local >= w.length) fail(ErrorKind::kInvalidArgument, "position outside segment");
  return w.offset + local;
}

std::optional<std::size_t> SegmentationMap::to_local(std::size_t segment,
                                                     std::size_t doc_position) const {
  const SegmentWindow& w = windows.at(segment);
  if (doc_position < w.offset || doc_position >= w.offset + w.length) return std::nullopt;
  return doc_position - w.offset;
}

SegmentationMap plan_windows(std::size_t n_tokens, const SegmentationProfile& profile) {
  profile.validate();
  if (n_tokens == 0) fail(ErrorKind::kInvalidArgument, "cannot segment an empty document");
  SegmentationMap map;
  const std::size_t span = profile.sub_document_span();
  for (std::size_t sub = 0; sub * span < n_tokens; ++sub) {
    const std::size_t base = sub * span;
    const std::size_t limit = std::min(n_tokens, base + span);
    std::size_t prev_end = base;
    for (std::size_t k = 0; k == 0 || prev_end < limit; ++k) {
      const std::size_t start = base + k * profile.stride();
      SegmentWindow w;
      w.sub_document = sub;
      w.index = k;
      w.offset = start;
      w.length = std::min(profile.window, limit - start);
      w.overlap_prefix = k == 0 ? 0 : prev_end - start;
      prev_end = start + w.length;
      map.windows.push_back(w);
    }
  }
  return map;
}

SegmentedDocument segment_document(const AnnotatedDocument& doc,
                                   const SegmentationProfile& profile) {
  SegmentedDocument out;
  out.map = plan_windows(doc.tokens.size(), profile);
  const auto ids = doc.ids();
  for (const SegmentWindow& w : out.map.windows) {
    Segment seg;
    seg.sub_document = w.sub_document;
    seg.index = w.index;
    seg.token_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(w.offset),
                         ids.begin() + static_cast<std::ptrdiff_t>(w.offset + w.length));
    const std::size_t lo = w.offset, hi = w.offset + w.length;
    for (const DocMention& m : doc.mentions) {
      const std::size_t b = std::max(m.begin, lo), e = std::min(m.end, hi);
      if (b < e) seg.mentions.push_back({b - lo, e - lo, m.entity_id});
    }
    out.segments.push_back(std::move(seg));
  }
  return out;
}

}  // namespace readtwice::corpus
