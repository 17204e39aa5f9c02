#include "model/encoder.hpp"

#include <cmath>
#include <numeric>
#include <vector>

#include "autodiff/ops.hpp"
#include "common/error.hpp"

namespace readtwice::model {

using ad::Var;

namespace {

Var linear(ad::Tape& tape, Model& model, const std::string& prefix, Var x) {
  return ad::add_broadcast(ad::matmul(x, model.bind(tape, prefix + "/w")),
                           model.bind(tape, prefix + "/b"));
}

Var norm(ad::Tape& tape, Model& model, const std::string& prefix, Var x) {
  return ad::layer_norm(x, model.bind(tape, prefix + "/gamma"), model.bind(tape, prefix + "/beta"),
                        model.config.encoder.layer_norm_eps);
}

Var encode_stack(ad::Tape& tape, Model& model, const std::string& stack, std::size_t layers,
                 Var h, std::span<const std::uint8_t> key_mask) {
  const std::size_t n = h.rows();
  if (!key_mask.empty()) {
    if (key_mask.size() != n) {
      fail(ErrorKind::kDimension, "attention mask of " + std::to_string(key_mask.size()) +
                                      " slots for " + std::to_string(n) + " tokens");
    }
    if (std::accumulate(key_mask.begin(), key_mask.end(), 0) == 0) {
      fail(ErrorKind::kInvalidArgument, "segment consists only of padding");
    }
  }
  for (std::size_t i = 0; i < layers; ++i) {
    h = transformer_layer(tape, model, stack + "/layer" + std::to_string(i), h, key_mask);
  }
  return h;
}

}  // namespace

Var embed(ad::Tape& tape, Model& model, std::span<const std::size_t> token_ids,
          std::span<const std::size_t> positions) {
  const auto& cfg = model.config.encoder;
  if (token_ids.size() > cfg.max_segment_len) {
    fail(ErrorKind::kInvalidArgument, "segment of " + std::to_string(token_ids.size()) +
                                          " tokens exceeds max_segment_len " +
                                          std::to_string(cfg.max_segment_len));
  }
  for (std::size_t id : token_ids) {
    if (id >= cfg.vocab_size) {
      fail(ErrorKind::kInvalidArgument, "token id " + std::to_string(id) +
                                            " outside vocabulary of " +
                                            std::to_string(cfg.vocab_size));
    }
  }
  std::vector<std::size_t> pos(positions.begin(), positions.end());
  if (pos.empty()) {
    pos.resize(token_ids.size());
    std::iota(pos.begin(), pos.end(), std::size_t{0});
  }
  if (pos.size() != token_ids.size()) {
    fail(ErrorKind::kDimension, "positions and token ids differ in length");
  }
  Var tok = ad::gather_rows(model.bind(tape, "embed/token/w"), token_ids);
  Var p = ad::gather_rows(model.bind(tape, "embed/position/w"), pos);
  return ad::add(tok, p);
}

Var transformer_layer(ad::Tape& tape, Model& model, const std::string& prefix, Var h,
                      std::span<const std::uint8_t> key_mask) {
  const auto& cfg = model.config.encoder;
  const std::size_t n = h.rows();
  const std::size_t heads = cfg.num_heads;
  const std::size_t head_dim = cfg.hidden_dim / heads;

  std::vector<std::uint8_t> allowed;
  if (!key_mask.empty()) {
    allowed.resize(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) allowed[i * n + j] = key_mask[j];
  }

  Var q = linear(tape, model, prefix + "/attn/query", h);
  Var k = linear(tape, model, prefix + "/attn/key", h);
  Var v = linear(tape, model, prefix + "/attn/value", h);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Var> contexts;
  contexts.reserve(heads);
  for (std::size_t hd = 0; hd < heads; ++hd) {
    const std::size_t b = hd * head_dim, e = b + head_dim;
    Var qh = heads == 1 ? q : ad::slice_cols(q, b, e);
    Var kh = heads == 1 ? k : ad::slice_cols(k, b, e);
    Var vh = heads == 1 ? v : ad::slice_cols(v, b, e);
    Var probs = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt), allowed);
    probs = ad::dropout(probs, cfg.dropout);
    contexts.push_back(ad::matmul(probs, vh));
  }
  Var context = heads == 1 ? contexts.front() : ad::concat_cols(contexts);
  Var attn = ad::dropout(linear(tape, model, prefix + "/attn/output", context), cfg.dropout);
  h = norm(tape, model, prefix + "/attn_norm", ad::add(h, attn));

  Var inner = ad::gelu(linear(tape, model, prefix + "/ffn/in", h));
  Var ffn = ad::dropout(linear(tape, model, prefix + "/ffn/out", inner), cfg.dropout);
  return norm(tape, model, prefix + "/ffn_norm", ad::add(h, ffn));
}

Var encode_first(ad::Tape& tape, Model& model, Var h0, std::span<const std::uint8_t> key_mask) {
  return encode_stack(tape, model, "first", model.config.encoder.layers_first, h0, key_mask);
}

Var encode_second(ad::Tape& tape, Model& model, Var h3, std::span<const std::uint8_t> key_mask) {
  return encode_stack(tape, model, "second", model.config.encoder.layers_second, h3, key_mask);
}

}  // namespace readtwice::model
