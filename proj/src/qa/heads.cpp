#include "qa/heads.hpp"

#include <limits>
#include <set>

#include "autodiff/ops.hpp"
#include "common/error.hpp"

namespace readtwice::qa {

SpanScores qa_scores(ad::Tape& tape, model::Model& model, std::span<const ad::Var> h4) {
  SpanScores out;
  ad::Var w = model.bind(tape, "qa/ffn/w"), b = model.bind(tape, "qa/ffn/b");
  ad::Var wb = model.bind(tape, "qa/begin/w"), we = model.bind(tape, "qa/end/w");
  for (ad::Var h : h4) {
    ad::Var f = ad::gelu(ad::add_broadcast(ad::matmul(h, w), b));
    out.begin.push_back(ad::matmul(f, wb));
    out.end.push_back(ad::matmul(f, we));
  }
  return out;
}

namespace {

std::vector<std::uint8_t> flat_candidates(const std::vector<ad::Var>& scores,
                                          const CandidateMask& candidates) {
  if (candidates.size() != scores.size()) {
    fail(ErrorKind::kDimension, "candidate mask needs one entry per segment");
  }
  std::vector<std::uint8_t> flat;
  for (std::size_t s = 0; s < scores.size(); ++s) {
    if (candidates[s].size() != scores[s].rows()) {
      fail(ErrorKind::kDimension, "candidate mask length does not match segment length");
    }
    flat.insert(flat.end(), candidates[s].begin(), candidates[s].end());
  }
  return flat;
}

ad::Var family_loss(const std::vector<ad::Var>& scores, const std::vector<std::uint8_t>& allowed,
                    const std::set<std::pair<std::size_t, std::size_t>>& gold) {
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& s : scores) {
    offsets.push_back(total);
    total += s.rows();
  }
  std::vector<std::uint8_t> numerator(total, 0);
  for (const auto& [seg, pos] : gold) {
    const std::size_t flat = offsets[seg] + pos;
    if (!allowed[flat]) fail(ErrorKind::kInvalidArgument, "gold position is not a candidate");
    numerator[flat] = 1;
  }
  ad::Var column = scores.size() == 1 ? scores[0] : ad::concat_rows(scores);
  return ad::sub(ad::logsumexp(column, allowed), ad::logsumexp(column, numerator));
}

}  // namespace

ad::Var span_loss(ad::Tape&, const SpanScores& scores, const AnswerSpanSet& gold,
                  const CandidateMask& candidates) {
  if (gold.empty()) fail(ErrorKind::kInvalidArgument, "span_loss needs at least one gold span");
  if (scores.begin.empty()) fail(ErrorKind::kInvalidArgument, "span_loss needs scores");
  std::set<std::pair<std::size_t, std::size_t>> begins, ends;
  for (const GoldSpan& g : gold.spans) {
    if (g.segment >= scores.begin.size() || g.end >= scores.begin[g.segment].rows() ||
        g.begin > g.end) {
      fail(ErrorKind::kInvalidArgument, "gold span outside its segment");
    }
    begins.insert({g.segment, g.begin});
    ends.insert({g.segment, g.end});
  }
  auto allowed = flat_candidates(scores.begin, candidates);
  return ad::add(family_loss(scores.begin, allowed, begins),
                 family_loss(scores.end, allowed, ends));
}

DecodedSpan decode_answer(const std::vector<std::vector<double>>& begin,
                          const std::vector<std::vector<double>>& end,
                          const CandidateMask& candidates, std::size_t max_answer_len) {
  if (begin.size() != end.size() || begin.size() != candidates.size()) {
    fail(ErrorKind::kDimension, "decode_answer inputs disagree on the segment count");
  }
  if (max_answer_len == 0) fail(ErrorKind::kInvalidArgument, "max_answer_len must be positive");
  DecodedSpan best;
  bool found = false;
  for (std::size_t s = 0; s < begin.size(); ++s) {
    const std::size_t n = begin[s].size();
    if (end[s].size() != n || candidates[s].size() != n) {
      fail(ErrorKind::kDimension, "decode_answer segment lengths disagree");
    }
    for (std::size_t b = 0; b < n; ++b) {
      if (!candidates[s][b]) continue;
      for (std::size_t e = b; e < n && e - b < max_answer_len; ++e) {
        if (!candidates[s][e]) continue;
        const double score = begin[s][b] + end[s][e];
        if (!found || score > best.score) {
          best = {s, b, e, score};
          found = true;
        }
      }
    }
  }
  if (!found) fail(ErrorKind::kInvalidArgument, "no candidate answer positions");
  return best;
}

std::vector<std::vector<double>> score_values(std::span<const ad::Var> scores) {
  std::vector<std::vector<double>> out;
  for (ad::Var v : scores) out.push_back(v.value().values());
  return out;
}

std::string to_string(AnswerOption option) {
  switch (option) {
    case AnswerOption::kYes: return "yes";
    case AnswerOption::kNo: return "no";
    case AnswerOption::kSpan: return "span";
  }
  return "span";
}

AnswerOption parse_option(const std::string& name) {
  if (name == "yes") return AnswerOption::kYes;
  if (name == "no") return AnswerOption::kNo;
  if (name == "span") return AnswerOption::kSpan;
  fail(ErrorKind::kParse, "unknown answer option '" + name + "'");
}

ad::Var option_logits(ad::Tape& tape, model::Model& model, std::span<const ad::Var> h4) {
  if (h4.empty()) fail(ErrorKind::kInvalidArgument, "option_logits needs segments");
  std::vector<ad::Var> cls;
  for (ad::Var h : h4) cls.push_back(ad::slice_rows(h, 0, 1));
  ad::Var rows = cls.size() == 1 ? cls[0] : ad::concat_rows(cls);
  return ad::add_broadcast(ad::matmul(rows, model.bind(tape, "qa/option/w")),
                           model.bind(tape, "qa/option/b"));
}

ad::Var option_loss(ad::Tape&, ad::Var logits, std::span<const std::size_t> supporting,
                    AnswerOption gold) {
  const std::size_t segments = logits.rows();
  if (logits.cols() != 3) fail(ErrorKind::kDimension, "option logits need 3 columns");
  if (supporting.empty()) fail(ErrorKind::kInvalidArgument, "option loss needs supporting segments");
  std::vector<std::uint8_t> numerator(segments * 3, 0);
  for (std::size_t s : supporting) {
    if (s >= segments) fail(ErrorKind::kInvalidArgument, "supporting segment out of range");
    numerator[s * 3 + static_cast<std::size_t>(gold)] = 1;
  }
  return ad::sub(ad::logsumexp(logits), ad::logsumexp(logits, numerator));
}

OptionDecision decide_option(const ad::Tensor& logits) {
  if (logits.cols() != 3 || logits.rows() == 0) {
    fail(ErrorKind::kDimension, "option logits need shape [segments x 3]");
  }
  static constexpr AnswerOption kOrder[] = {AnswerOption::kSpan, AnswerOption::kYes,
                                            AnswerOption::kNo};
  OptionDecision best;
  best.score = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (AnswerOption o : kOrder) {
    for (std::size_t s = 0; s < logits.rows(); ++s) {
      const double v = logits(s, static_cast<std::size_t>(o));
      if (!found || v > best.score) {
        best = {o, s, v};
        found = true;
      }
    }
  }
  return best;
}

}  // namespace readtwice::qa
