#include "pretrain/masking.hpp"

#include <algorithm>
#include <cmath>

#include "common/error.hpp"
#include "corpus/vocab.hpp"

namespace readtwice::pretrain {

namespace {

std::vector<std::uint8_t> entity_flags(std::size_t n, std::span<const model::Mention> mentions) {
  std::vector<std::uint8_t> flags(n, 0);
  for (const auto& m : mentions) {
    if (m.end > n || m.begin > m.end) fail(ErrorKind::kInvalidArgument, "mention out of range");
    for (std::size_t i = m.begin; i < m.end; ++i) flags[i] = 1;
  }
  return flags;
}

void finish(MaskedSegment& out) {
  out.positions.clear();
  for (std::size_t i = 0; i < out.masked.size(); ++i) {
    if (out.masked[i]) out.positions.push_back(i);
  }
}

}  // namespace

MaskedSegment mask_tokens(std::span<const std::size_t> token_ids,
                          std::span<const model::Mention> mentions,
                          std::span<const std::uint8_t> maskable, Rng& rng,
                          const MaskingConfig& config, std::size_t vocab_size,
                          std::span<const std::size_t> forced) {
  const std::size_t n = token_ids.size();
  if (!maskable.empty() && maskable.size() != n) {
    fail(ErrorKind::kDimension, "maskable flags do not match the segment length");
  }
  if (config.min_span == 0 || config.max_span < config.min_span) {
    fail(ErrorKind::kInvalidArgument, "span length bounds must satisfy 1 <= min <= max");
  }
  auto can_mask = [&](std::size_t i) { return maskable.empty() || maskable[i] != 0; };

  MaskedSegment out;
  out.input_ids.assign(token_ids.begin(), token_ids.end());
  out.labels = out.input_ids;
  out.masked.assign(n, 0);
  out.entity = entity_flags(n, mentions);
  std::vector<std::uint8_t> force_mask(n, 0);

  for (std::size_t p : forced) {
    if (p >= n) fail(ErrorKind::kInvalidArgument, "forced mask position out of range");
    force_mask[p] = 1;
  }

  for (const auto& m : mentions) {
    bool whole = true, forced_inside = false;
    for (std::size_t i = m.begin; i < m.end; ++i) {
      whole = whole && can_mask(i);
      forced_inside = forced_inside || force_mask[i];
    }
    const bool draw = rng.bernoulli(config.entity_rate);
    if ((whole && draw) || forced_inside) {
      for (std::size_t i = m.begin; i < m.end; ++i) out.masked[i] = 1;
    }
  }
  for (std::size_t p : forced) out.masked[p] = 1;

  std::vector<std::size_t> candidates;
  std::size_t already = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (out.entity[i] || !can_mask(i)) continue;
    candidates.push_back(i);
    if (out.masked[i]) ++already;
  }
  const double target = config.span_rate * static_cast<double>(candidates.size());
  std::size_t budget = static_cast<std::size_t>(std::floor(target));
  if (rng.bernoulli(target - std::floor(target))) ++budget;
  std::size_t remaining = budget > already ? budget - already : 0;

  auto open = [&](std::size_t i) {
    return i < n && !out.entity[i] && can_mask(i) && !out.masked[i];
  };
  const std::size_t max_attempts = 20 * budget + 20;
  for (std::size_t attempt = 0; remaining > 0 && attempt < max_attempts; ++attempt) {
    std::size_t len = config.min_span;
    while (len < config.max_span && !rng.bernoulli(config.span_geometric_p)) ++len;
    const std::size_t start = candidates[rng.below(candidates.size())];
    if (!open(start)) continue;
    len = std::min(len, remaining);
    for (std::size_t i = start; i < start + len && open(i); ++i) {
      out.masked[i] = 1;
      --remaining;
    }
  }

  const std::size_t first_word = corpus::kFirstByteId;
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.masked[i]) continue;
    if (force_mask[i]) {
      out.input_ids[i] = corpus::kMaskId;
      continue;
    }
    const double u = rng.uniform();
    if (u < config.mask_token_prob) {
      out.input_ids[i] = corpus::kMaskId;
    } else if (u < config.mask_token_prob + config.random_token_prob && vocab_size > first_word) {
      out.input_ids[i] = first_word + rng.below(vocab_size - first_word);
    }
  }
  finish(out);
  return out;
}

MaskedSegment mask_exactly(std::span<const std::size_t> token_ids,
                           std::span<const model::Mention> mentions,
                           std::span<const std::size_t> positions) {
  MaskedSegment out;
  out.input_ids.assign(token_ids.begin(), token_ids.end());
  out.labels = out.input_ids;
  out.masked.assign(token_ids.size(), 0);
  out.entity = entity_flags(token_ids.size(), mentions);
  for (std::size_t p : positions) {
    if (p >= token_ids.size()) fail(ErrorKind::kInvalidArgument, "mask position out of range");
    out.masked[p] = 1;
    out.input_ids[p] = corpus::kMaskId;
  }
  finish(out);
  return out;
}

}  // namespace readtwice::pretrain
