#include "model/memory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "autodiff/ops.hpp"
#include "common/error.hpp"

namespace readtwice::model {

using ad::Var;

std::string to_string(MemoryKind kind) {
  switch (kind) {
    case MemoryKind::kCls: return "CLS";
    case MemoryKind::kSts: return "STS";
    case MemoryKind::kEntity: return "E";
  }
  return "?";
}

namespace {

SegmentMemories project_spans(ad::Tape& tape, Model& model, Var h1, std::size_t doc,
                              std::size_t segment, MemoryKind kind,
                              const std::vector<Mention>& spans) {
  SegmentMemories out;
  if (spans.empty()) return out;
  std::vector<std::size_t> firsts, lasts;
  for (const Mention& s : spans) {
    firsts.push_back(s.begin);
    lasts.push_back(s.end - 1);
    out.entries.push_back({doc, segment, kind, s.begin, s.end, s.entity_id});
  }
  const Var ends[] = {ad::gather_rows(h1, firsts), ad::gather_rows(h1, lasts)};
  Var joined = ad::concat_cols(ends);
  out.vectors = ad::add_broadcast(ad::matmul(joined, model.bind(tape, "memory/project/w")),
                                  model.bind(tape, "memory/project/b"));
  return out;
}

}  // namespace

SegmentMemories extract_memories(ad::Tape& tape, Model& model, Var h1, std::size_t doc,
                                 std::size_t segment, std::span<const Mention> mentions,
                                 std::size_t real_length, MemoryMode mode) {
  if (real_length > h1.rows()) {
    fail(ErrorKind::kDimension, "real length exceeds segment states");
  }
  switch (mode) {
    case MemoryMode::kOff:
      return {};
    case MemoryMode::kCls: {
      if (real_length == 0) return {};
      SegmentMemories out;
      const std::size_t first[] = {0};
      out.vectors = ad::gather_rows(h1, first);
      out.entries.push_back({doc, segment, MemoryKind::kCls, 0, 1, std::nullopt});
      return out;
    }
    case MemoryMode::kSts: {
      std::vector<Mention> spans;
      const std::size_t w = model.config.memory.span_tokens;
      for (std::size_t b = 0; b < real_length; b += w) {
        spans.push_back({b, std::min(b + w, real_length), std::nullopt});
      }
      return project_spans(tape, model, h1, doc, segment, MemoryKind::kSts, spans);
    }
    case MemoryMode::kEntity: {
      std::vector<Mention> spans(mentions.begin(), mentions.end());
      for (const Mention& m : spans) {
        if (m.begin >= m.end || m.end > real_length) {
          fail(ErrorKind::kContract, "mention [" + std::to_string(m.begin) + "," +
                                         std::to_string(m.end) + ") outside segment of " +
                                         std::to_string(real_length) + " tokens");
        }
      }
      return project_spans(tape, model, h1, doc, segment, MemoryKind::kEntity, spans);
    }
  }
  return {};
}

MemoryTable gather(ad::Tape& tape, Model& model, std::span<const SegmentMemories> per_segment) {
  MemoryTable table;
  table.noop = model.bind(tape, "memory/noop");
  std::vector<Var> parts;
  for (const SegmentMemories& s : per_segment) {
    if (!s.vectors || s.entries.empty()) continue;
    parts.push_back(*s.vectors);
    table.entries.insert(table.entries.end(), s.entries.begin(), s.entries.end());
  }
  if (!parts.empty()) table.vectors = parts.size() == 1 ? parts.front() : ad::concat_rows(parts);
  return table;
}

int clipped_distance(std::ptrdiff_t reader_segment, std::ptrdiff_t source_segment, int clip) {
  const std::ptrdiff_t d = reader_segment - source_segment;
  return static_cast<int>(std::clamp<std::ptrdiff_t>(d, -clip, clip));
}

double relative_distance_score(std::size_t reader_doc, std::size_t reader_segment,
                               std::size_t source_doc, std::size_t source_segment,
                               std::span<const double> omega, int clip) {
  if (reader_doc != source_doc) {
    fail(ErrorKind::kContract, "relative distance between segments of different documents");
  }
  if (omega.size() != static_cast<std::size_t>(2 * clip + 1)) {
    fail(ErrorKind::kDimension, "position score table needs 2*clip+1 entries");
  }
  const int d = clipped_distance(static_cast<std::ptrdiff_t>(reader_segment),
                                 static_cast<std::ptrdiff_t>(source_segment), clip);
  return omega[static_cast<std::size_t>(d + clip)];
}

std::vector<std::uint8_t> token_eligibility(std::size_t length, std::span<const Mention> mentions,
                                            MemoryMode mode) {
  if (mode != MemoryMode::kEntity) {
    return std::vector<std::uint8_t>(length, mode == MemoryMode::kOff ? 0 : 1);
  }
  std::vector<std::uint8_t> flags(length, 0);
  for (const Mention& m : mentions) {
    for (std::size_t j = m.begin; j < std::min(m.end, length); ++j) flags[j] = 1;
  }
  return flags;
}

std::vector<std::size_t> eligible_entries(const MemoryTable& table, std::size_t doc,
                                          std::size_t segment, const MemoryConfig& config) {
  std::vector<std::size_t> out;
  for (std::size_t m = 0; m < table.entries.size(); ++m) {
    const MemoryEntry& e = table.entries[m];
    if (!config.cross_document && e.doc != doc) continue;
    if (config.single_segment && (e.doc != doc || e.segment != segment)) continue;
    out.push_back(m);
  }
  return out;
}

MemoryAttention memory_attention(ad::Tape& tape, Model& model, Var h, std::size_t doc,
                                 std::size_t segment, const MemoryTable& table,
                                 std::span<const std::uint8_t> token_mask) {
  const MemoryConfig& cfg = model.config.memory;
  const std::size_t n = h.rows(), d = h.cols();
  if (!token_mask.empty() && token_mask.size() != n) {
    fail(ErrorKind::kDimension, "token mask length differs from segment length");
  }
  MemoryAttention out;
  out.entries = eligible_entries(table, doc, segment, cfg);
  const std::size_t count = out.entries.size();
  const double logit_scale = cfg.scaled_logits ? 1.0 / std::sqrt(static_cast<double>(d)) : 1.0;

  Var noop_logit = ad::matmul_nt(h, table.noop);
  if (cfg.scaled_logits) noop_logit = ad::scale(noop_logit, logit_scale);
  if (count == 0) {
    // All mass on the no-op, which carries no value.
    out.weights = ad::softmax_rows(noop_logit);
    out.output = tape.constant(ad::Tensor::matrix(n, d));
    return out;
  }

  Var memories = ad::gather_rows(*table.vectors, out.entries);
  Var dots = ad::matmul_nt(h, memories);
  Var logits = cfg.scaled_logits ? ad::scale(dots, logit_scale) : dots;

  // Relative position scores, one per column.
  std::vector<std::size_t> score_index;
  std::vector<double> cross_doc_zero(count, 1.0);
  score_index.reserve(count);
  bool any_cross = false;
  for (std::size_t c = 0; c < count; ++c) {
    const MemoryEntry& e = table.entries[out.entries[c]];
    if (e.doc != doc) {
      // Cross-document entries (only with cross_document) carry no position score.
      score_index.push_back(static_cast<std::size_t>(cfg.clip_distance));
      cross_doc_zero[c] = 0.0;
      any_cross = true;
      continue;
    }
    const int dist = clipped_distance(static_cast<std::ptrdiff_t>(segment),
                                      static_cast<std::ptrdiff_t>(e.segment), cfg.clip_distance);
    score_index.push_back(static_cast<std::size_t>(dist + cfg.clip_distance));
  }
  Var omega_col = ad::transpose(model.bind(tape, "memory/position_scores"));
  Var scores = ad::transpose(ad::gather_rows(omega_col, score_index));
  if (any_cross) scores = ad::mul(scores, tape.constant(ad::Tensor({1, count}, cross_doc_zero)));
  logits = ad::add_broadcast(logits, scores);

  const Var columns[] = {logits, noop_logit};
  Var all_logits = ad::concat_cols(columns);

  std::vector<std::uint8_t> allowed;
  if (cfg.top_k > 0 && cfg.top_k < count) {
    allowed.assign(n * (count + 1), 0);
    const ad::Tensor& dv = dots.value();
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < n; ++i) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return dv(i, a) > dv(i, b);
      });
      for (std::size_t r = 0; r < cfg.top_k; ++r) allowed[i * (count + 1) + order[r]] = 1;
      allowed[i * (count + 1) + count] = 1;
    }
  }
  out.weights = ad::softmax_rows(all_logits, allowed);
  Var h2 = ad::matmul(ad::slice_cols(out.weights, 0, count), memories);
  if (!token_mask.empty()) {
    ad::Tensor rows_mask = ad::Tensor::matrix(n, d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) rows_mask(i, j) = token_mask[i] ? 1.0 : 0.0;
    h2 = ad::mul(h2, tape.constant(std::move(rows_mask)));
  }
  out.output = h2;
  return out;
}

Var merge(ad::Tape& tape, Model& model, Var h1, Var h2) {
  return ad::layer_norm(ad::add(h1, h2), model.bind(tape, "memory/merge_norm/gamma"),
                        model.bind(tape, "memory/merge_norm/beta"),
                        model.config.encoder.layer_norm_eps);
}

void dump_memory_table(std::ostream& out, const MemoryTable& table) {
  for (std::size_t m = 0; m < table.entries.size(); ++m) {
    const MemoryEntry& e = table.entries[m];
    nlohmann::json rec;
    rec["doc"] = e.doc;
    rec["segment"] = e.segment;
    rec["kind"] = to_string(e.kind);
    rec["span"] = {e.span_begin, e.span_end};
    rec["entity_id"] = e.entity_id ? nlohmann::json(*e.entity_id) : nlohmann::json(nullptr);
    const ad::Tensor& v = table.vectors->value();
    std::vector<double> row(v.values().begin() + static_cast<std::ptrdiff_t>(m * v.cols()),
                            v.values().begin() + static_cast<std::ptrdiff_t>((m + 1) * v.cols()));
    rec["vector"] = row;
    out << rec.dump() << '\n';
  }
}

}  // namespace readtwice::model
