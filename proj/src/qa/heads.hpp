#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "autodiff/tape.hpp"
#include "model/model.hpp"

namespace readtwice::qa {

// Begin/end scores per segment, each [tokens x 1].
struct SpanScores {
  std::vector<ad::Var> begin;
  std::vector<ad::Var> end;
};

// Shared FFN (hidden -> hidden, GELU) over every token, then two linear maps.
SpanScores qa_scores(ad::Tape& tape, model::Model& model, std::span<const ad::Var> h4);

// [segment, begin, end], end inclusive, in model-input positions.
struct GoldSpan {
  std::size_t segment = 0;
  std::size_t begin = 0;
  std::size_t end = 0;

  auto operator<=>(const GoldSpan&) const = default;
};

struct AnswerSpanSet {
  std::vector<GoldSpan> spans;
  bool empty() const { return spans.empty(); }
};

// Candidate flags per segment: positions that may start or end an answer.
using CandidateMask = std::vector<std::vector<std::uint8_t>>;

// -log(sum_gold exp Z / sum_all exp Z) for begin scores plus the same for end
// scores. Normalization runs jointly over the candidate positions of all
// segments; duplicate gold positions count once.
ad::Var span_loss(ad::Tape& tape, const SpanScores& scores, const AnswerSpanSet& gold,
                  const CandidateMask& candidates);

struct DecodedSpan {
  std::size_t segment = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  double score = 0.0;
};

// argmax of Z_b + Z_e over legal pairs: same segment, b <= e,
// e - b < max_answer_len, both candidates. Ties go to the lexicographically
// smallest (segment, begin, end).
DecodedSpan decode_answer(const std::vector<std::vector<double>>& begin,
                          const std::vector<std::vector<double>>& end,
                          const CandidateMask& candidates, std::size_t max_answer_len = 30);

std::vector<std::vector<double>> score_values(std::span<const ad::Var> scores);

enum class AnswerOption { kYes = 0, kNo = 1, kSpan = 2 };
std::string to_string(AnswerOption option);
AnswerOption parse_option(const std::string& name);

// One row of yes/no/span logits per segment from its [CLS] state: [segments x 3].
ad::Var option_logits(ad::Tape& tape, model::Model& model, std::span<const ad::Var> h4);

// Global normalization over every (segment, option) cell; the numerator only
// sums the gold option over the supporting segments.
ad::Var option_loss(ad::Tape& tape, ad::Var logits, std::span<const std::size_t> supporting,
                    AnswerOption gold);

struct OptionDecision {
  AnswerOption option = AnswerOption::kSpan;
  std::size_t segment = 0;
  double score = 0.0;
};

// Highest logit over all segments; ties prefer span, then yes, then no, then
// the lower segment.
OptionDecision decide_option(const ad::Tensor& logits);

}  // namespace readtwice::qa
