#include "pretrain/losses.hpp"

#include "autodiff/ops.hpp"
#include "common/error.hpp"

namespace readtwice::pretrain {

ad::Var mlm_logits(ad::Tape& tape, model::Model& model, ad::Var rows) {
  const double eps = model.config.encoder.layer_norm_eps;
  ad::Var x = ad::add_broadcast(ad::matmul(rows, model.bind(tape, "mlm/transform/w")),
                                model.bind(tape, "mlm/transform/b"));
  x = ad::layer_norm(ad::gelu(x), model.bind(tape, "mlm/norm/gamma"),
                     model.bind(tape, "mlm/norm/beta"), eps);
  ad::Var decoder = model.config.encoder.tie_mlm_output ? model.bind(tape, "embed/token/w")
                                                        : model.bind(tape, "mlm/decoder/w");
  return ad::add_broadcast(ad::matmul_nt(x, decoder), model.bind(tape, "mlm/output_bias"));
}

MlmResult mlm_loss(ad::Tape& tape, model::Model& model, std::span<const ad::Var> h4,
                   std::span<const MaskedSegment> masks) {
  if (h4.size() != masks.size()) fail(ErrorKind::kDimension, "one mask per segment required");
  MlmResult out;
  std::vector<ad::Var> parts;
  for (std::size_t s = 0; s < h4.size(); ++s) {
    const MaskedSegment& m = masks[s];
    if (m.positions.empty()) continue;
    if (m.masked.size() != h4[s].rows()) {
      fail(ErrorKind::kDimension, "mask length does not match segment length");
    }
    parts.push_back(ad::gather_rows(h4[s], m.positions));
    for (std::size_t p : m.positions) {
      out.labels.push_back(m.labels[p]);
      out.entity.push_back(m.entity[p]);
    }
  }
  out.count = out.labels.size();
  if (parts.empty()) {
    out.empty = true;
    out.loss = tape.constant(ad::Tensor::scalar(0.0));
    return out;
  }
  ad::Var rows = parts.size() == 1 ? parts[0] : ad::concat_rows(parts);
  out.logits = mlm_logits(tape, model, rows);
  out.loss = ad::cross_entropy(*out.logits, out.labels);
  return out;
}

std::vector<CorefPair> coref_pairs(std::span<const model::MemoryEntry> entries,
                                   std::size_t negatives_per_positive, Rng* rng) {
  std::vector<std::size_t> linked;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].entity_id) linked.push_back(i);
  }
  auto same_segment = [&](std::size_t a, std::size_t b) {
    return entries[a].doc == entries[b].doc && entries[a].segment == entries[b].segment;
  };
  std::vector<CorefPair> pairs;
  std::vector<CorefPair> positives;
  for (std::size_t x = 0; x < linked.size(); ++x) {
    for (std::size_t y = x + 1; y < linked.size(); ++y) {
      const std::size_t a = linked[x], b = linked[y];
      const bool same = *entries[a].entity_id == *entries[b].entity_id;
      if (same && !same_segment(a, b)) positives.push_back({a, b, true});
      if (!same && negatives_per_positive == 0) pairs.push_back({a, b, false});
    }
  }
  if (negatives_per_positive == 0) {
    pairs.insert(pairs.begin(), positives.begin(), positives.end());
    return pairs;
  }
  if (!rng) fail(ErrorKind::kInvalidArgument, "sampled coref negatives need an rng");
  for (const CorefPair& pos : positives) {
    pairs.push_back(pos);
    std::vector<std::size_t> others;
    for (std::size_t c : linked) {
      if (*entries[c].entity_id != *entries[pos.first].entity_id) others.push_back(c);
    }
    if (others.empty()) continue;
    for (std::size_t k = 0; k < negatives_per_positive; ++k) {
      pairs.push_back({pos.first, others[rng->below(others.size())], false});
    }
  }
  return pairs;
}

CorefResult coref_loss(ad::Tape& tape, model::Model& model, const model::MemoryTable& table,
                       std::span<const CorefPair> pairs) {
  CorefResult out;
  out.pairs = pairs.size();
  if (pairs.empty() || !table.vectors) {
    out.pairs = 0;
    out.loss = tape.constant(ad::Tensor::scalar(0.0));
    return out;
  }
  std::vector<std::size_t> left, right;
  std::vector<double> targets;
  for (const CorefPair& p : pairs) {
    if (p.first >= table.size() || p.second >= table.size() || p.first == p.second) {
      fail(ErrorKind::kInvalidArgument, "invalid coref pair");
    }
    left.push_back(p.first);
    right.push_back(p.second);
    targets.push_back(p.positive ? 1.0 : 0.0);
  }
  ad::Var a = ad::gather_rows(*table.vectors, left);
  ad::Var b = ad::gather_rows(*table.vectors, right);
  ad::Var logits = ad::add_broadcast(ad::row_sum(ad::mul(a, b)), model.bind(tape, "coref/bias"));
  out.loss = ad::scale(ad::bce_with_logits(logits, targets), 1.0 / static_cast<double>(pairs.size()));
  return out;
}

}  // namespace readtwice::pretrain
