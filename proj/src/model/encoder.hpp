#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "autodiff/tape.hpp"
#include "model/model.hpp"

namespace readtwice::model {

// H0: token embedding plus learned absolute position embedding. Positions
// default to 0..n-1 and restart for every segment.
ad::Var embed(ad::Tape& tape, Model& model, std::span<const std::size_t> token_ids,
              std::span<const std::size_t> positions = {});

// One post-LayerNorm transformer layer (self-attention + GELU feed-forward).
// `key_mask` flags real (1) versus padding (0) slots; padding is never
// attended to.
ad::Var transformer_layer(ad::Tape& tape, Model& model, const std::string& prefix, ad::Var h,
                          std::span<const std::uint8_t> key_mask);

// H1 = BERT1(H0): layers_first layers under "first/".
ad::Var encode_first(ad::Tape& tape, Model& model, ad::Var h0,
                     std::span<const std::uint8_t> key_mask);
// H4 = BERT2(H3): layers_second layers under "second/".
ad::Var encode_second(ad::Tape& tape, Model& model, ad::Var h3,
                      std::span<const std::uint8_t> key_mask);

}  // namespace readtwice::model
