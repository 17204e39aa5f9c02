#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "autodiff/tape.hpp"

namespace readtwice::ad {

// Row-major 2-D operations with reverse-mode rules. Shapes are checked eagerly
// and mismatches raise ErrorKind::kDimension naming both operands.

Var matmul(Var a, Var b);     // [m x k] . [k x n]
Var matmul_nt(Var a, Var b);  // [m x k] . [n x k]^T
Var transpose(Var a);

Var add(Var a, Var b);
// b is [1 x 1], [1 x cols] or [rows x 1] and is broadcast over a.
Var add_broadcast(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);

Var gelu(Var a);

// Softmax over each row. `allowed`, when non-empty, has one flag per element;
// disallowed entries get probability exactly 0. A row with nothing allowed
// yields all zeros.
Var softmax_rows(Var a, std::span<const std::uint8_t> allowed = {});

// Per-row normalization followed by the affine map gamma * xhat + beta, with
// gamma and beta of shape [1 x cols].
Var layer_norm(Var x, Var gamma, Var beta, double eps);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var gather_rows(Var a, std::span<const std::size_t> rows);

// Mean over rows of -log softmax(logits)[label].
Var cross_entropy(Var logits, std::span<const std::size_t> labels);
// log sum exp over the allowed elements of a (all when `allowed` is empty).
Var logsumexp(Var a, std::span<const std::uint8_t> allowed = {});
// Sum over elements of the logistic loss with 0/1 targets.
Var bce_with_logits(Var logits, std::span<const double> targets);

Var sum(Var a);
Var mean(Var a);
Var row_sum(Var a);

// Inverted dropout; identity when rate == 0 or the tape has no generator.
Var dropout(Var a, double rate);

}  // namespace readtwice::ad
