#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "autodiff/tape.hpp"
#include "model/config.hpp"
#include "model/model.hpp"

namespace readtwice::model {

enum class MemoryKind { kCls, kSts, kEntity };

std::string to_string(MemoryKind kind);

// Entity mention inside one segment, [begin, end) in model-input positions.
struct Mention {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::optional<std::string> entity_id;
};

struct MemoryEntry {
  std::size_t doc = 0;      // memory-sharing unit (document or sub-document)
  std::size_t segment = 0;  // document-local index of the source segment
  MemoryKind kind = MemoryKind::kCls;
  std::size_t span_begin = 0;
  std::size_t span_end = 0;
  std::optional<std::string> entity_id;
};

// Memories of one segment: `vectors` has one row per entry, or is unset when
// the segment produced none.
struct SegmentMemories {
  std::optional<ad::Var> vectors;
  std::vector<MemoryEntry> entries;
};

// The flat memory table shared by all segments of a batch, plus the learnable
// no-op entry M0.
struct MemoryTable {
  std::optional<ad::Var> vectors;  // [entries x hidden]
  std::vector<MemoryEntry> entries;
  ad::Var noop;                    // [1 x hidden]

  std::size_t size() const { return entries.size(); }
};

// CLS: the segment's first row. STS: one entry per consecutive span of
// config.memory.span_tokens real tokens (the trailing short span included).
// E: one entry per mention. Span entries are Linear(concat(H1[first],
// H1[last])) with a projection shared by all spans.
SegmentMemories extract_memories(ad::Tape& tape, Model& model, ad::Var h1, std::size_t doc,
                                 std::size_t segment, std::span<const Mention> mentions,
                                 std::size_t real_length, MemoryMode mode);

// Concatenates per-segment memories in the order given.
MemoryTable gather(ad::Tape& tape, Model& model, std::span<const SegmentMemories> per_segment);

// clip(reader - source, -clip, clip).
int clipped_distance(std::ptrdiff_t reader_segment, std::ptrdiff_t source_segment, int clip);

// omega[clipped_distance + clip]. Both segments must come from the same
// document; a cross-document pair is a contract violation.
double relative_distance_score(std::size_t reader_doc, std::size_t reader_segment,
                               std::size_t source_doc, std::size_t source_segment,
                               std::span<const double> omega, int clip);

// Per-token flags: which rows of a segment receive memory attention. Entity
// mode restricts it to tokens inside mentions; other modes use every token.
std::vector<std::uint8_t> token_eligibility(std::size_t length, std::span<const Mention> mentions,
                                            MemoryMode mode);

// Table entries a segment may attend to: same document (unless
// cross_document), and only its own entries under single_segment.
std::vector<std::size_t> eligible_entries(const MemoryTable& table, std::size_t doc,
                                          std::size_t segment, const MemoryConfig& config);

struct MemoryAttention {
  ad::Var output;                  // H2, [tokens x hidden]
  std::vector<std::size_t> entries;  // table indices of the attended columns
  // Attention weights [tokens x (entries + 1)]; the last column is the no-op.
  ad::Var weights;
};

// H2 for the rows of `h` (first-read states of segment `segment` of
// document `doc`). Logits are h.M_m + r(i, m_s) for eligible entries and
// h.M0 for the no-op; the output sums weights times M_m over real entries
// only. Rows whose `token_mask` flag is 0 get a zero output.
MemoryAttention memory_attention(ad::Tape& tape, Model& model, ad::Var h, std::size_t doc,
                                 std::size_t segment, const MemoryTable& table,
                                 std::span<const std::uint8_t> token_mask);

// H3 = LayerNorm(H1 + H2).
ad::Var merge(ad::Tape& tape, Model& model, ad::Var h1, ad::Var h2);

// Debug dump: one JSON object per line with doc, segment, kind, span,
// entity_id (null when absent) and vector.
void dump_memory_table(std::ostream& out, const MemoryTable& table);

}  // namespace readtwice::model
