#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "common/error.hpp"
#include "corpus/vocab.hpp"
#include "pipeline/inputs.hpp"
#include "qa/data.hpp"
#include "qa/finetune.hpp"
#include "qa/heads.hpp"
#include "support/checks.hpp"

using namespace readtwice;
using namespace readtwice::qa;

namespace {

SpanScores constant_scores(ad::Tape& tape, const std::vector<std::vector<double>>& b,
                           const std::vector<std::vector<double>>& e) {
  SpanScores s;
  for (std::size_t i = 0; i < b.size(); ++i) {
    s.begin.push_back(tape.constant(ad::Tensor({b[i].size(), 1}, b[i])));
    s.end.push_back(tape.constant(ad::Tensor({e[i].size(), 1}, e[i])));
  }
  return s;
}

corpus::AnnotatedDocument numbered_document(std::size_t n) {
  corpus::AnnotatedDocument doc;
  doc.doc_id = "d";
  for (std::size_t i = 0; i < n; ++i) doc.tokens.push_back({corpus::kFirstByteId + 'a', i, i + 1});
  doc.text.assign(n, 'a');
  return doc;
}

QaRecord record(const std::string& id, const std::string& answer) {
  QaRecord r;
  r.question_id = id;
  r.doc_id = "d";
  r.answers = {answer};
  return r;
}

Prediction prediction(const std::string& id, const std::string& answer) {
  Prediction p;
  p.question_id = id;
  p.answer = answer;
  return p;
}

}  // namespace

TEST(SpanLoss, UniformScoresClosedForm) {
  ad::Tape tape;
  std::vector<std::vector<double>> zeros{std::vector<double>(6, 0.0), std::vector<double>(4, 0.0)};
  CandidateMask cand{std::vector<std::uint8_t>(6, 1), std::vector<std::uint8_t>(4, 1)};
  cand[0][0] = 0;
  const double n = 9.0;
  auto scores = constant_scores(tape, zeros, zeros);
  AnswerSpanSet one{{{0, 2, 3}}};
  EXPECT_NEAR(span_loss(tape, scores, one, cand).value().item(), 2 * std::log(n), 1e-12);
  AnswerSpanSet two{{{0, 2, 3}, {1, 0, 1}}};
  EXPECT_NEAR(span_loss(tape, scores, two, cand).value().item(), 2 * std::log(n / 2), 1e-12);
  AnswerSpanSet dup{{{0, 2, 3}, {0, 2, 3}}};
  EXPECT_NEAR(span_loss(tape, scores, dup, cand).value().item(), 2 * std::log(n), 1e-12);
  AnswerSpanSet shared_begin{{{0, 2, 3}, {0, 2, 4}}};
  EXPECT_NEAR(span_loss(tape, scores, shared_begin, cand).value().item(),
              std::log(n) + std::log(n / 2), 1e-12);
}

TEST(SpanLoss, MatchesIndependentOracle) {
  Rng rng(31);
  for (int t = 0; t < 100; ++t) {
    const std::size_t segs = 1 + rng.below(3);
    std::vector<std::vector<double>> b(segs), e(segs);
    CandidateMask cand(segs);
    AnswerSpanSet gold;
    for (std::size_t s = 0; s < segs; ++s) {
      const std::size_t len = 2 + rng.below(10);
      for (std::size_t i = 0; i < len; ++i) {
        b[s].push_back(rng.normal());
        e[s].push_back(rng.normal());
        cand[s].push_back(i == 0 ? 0 : 1);
      }
      const std::size_t gb = 1 + rng.below(len - 1);
      gold.spans.push_back({s, gb, gb + rng.below(len - gb)});
    }
    ad::Tape tape;
    auto got = span_loss(tape, constant_scores(tape, b, e), gold, cand).value().item();
    EXPECT_NEAR(got, checks::oracle::span_loss(b, e, gold, cand), 1e-10);
  }
}

TEST(SpanLoss, GoldOutsideCandidatesRejected) {
  ad::Tape tape;
  std::vector<std::vector<double>> z{std::vector<double>(4, 0.0)};
  CandidateMask cand{{0, 1, 1, 1}};
  AnswerSpanSet gold{{{0, 0, 1}}};
  EXPECT_THROW(span_loss(tape, constant_scores(tape, z, z), gold, cand), Error);
}

TEST(Decode, WorkedExampleAndConstraints) {
  std::vector<std::vector<double>> b{{0, 5, 0, 0}, {0, 0, 4, 0}};
  std::vector<std::vector<double>> e{{9, 0, 0, 1}, {0, 0, 0, 3}};
  CandidateMask cand{{0, 1, 1, 1}, {0, 1, 1, 1}};
  auto d = decode_answer(b, e, cand, 30);
  EXPECT_EQ(d.segment, 1u);
  EXPECT_EQ(d.begin, 2u);
  EXPECT_EQ(d.end, 3u);
  EXPECT_NEAR(d.score, 7.0, 1e-12);
  auto short_only = decode_answer(b, e, cand, 1);
  EXPECT_EQ(short_only.end - short_only.begin, 0u);
}

TEST(Decode, TiesGoToSmallestSegmentBeginEnd) {
  std::vector<std::vector<double>> z{std::vector<double>(5, 0.0), std::vector<double>(5, 0.0)};
  CandidateMask cand{{0, 0, 1, 1, 1}, {1, 1, 1, 1, 1}};
  auto d = decode_answer(z, z, cand, 30);
  EXPECT_EQ(d.segment, 0u);
  EXPECT_EQ(d.begin, 2u);
  EXPECT_EQ(d.end, 2u);
}

TEST(Decode, MatchesBruteForce) {
  Rng rng(32);
  for (int t = 0; t < 200; ++t) {
    const std::size_t segs = 1 + rng.below(3);
    std::vector<std::vector<double>> b(segs), e(segs);
    CandidateMask cand(segs);
    for (std::size_t s = 0; s < segs; ++s) {
      const std::size_t len = 1 + rng.below(12);
      for (std::size_t i = 0; i < len; ++i) {
        b[s].push_back(static_cast<double>(rng.below(4)));
        e[s].push_back(static_cast<double>(rng.below(4)));
        cand[s].push_back(rng.below(4) != 0);
      }
    }
    cand[0][0] = 1;
    const std::size_t max_len = 1 + rng.below(5);
    auto got = decode_answer(b, e, cand, max_len);
    auto want = checks::oracle::decode(b, e, cand, max_len);
    EXPECT_EQ(got.segment, want.segment);
    EXPECT_EQ(got.begin, want.begin);
    EXPECT_EQ(got.end, want.end);
    EXPECT_NEAR(got.score, want.score, 1e-12);
  }
}

TEST(Options, UniformLossClosedForm) {
  ad::Tape tape;
  auto logits = tape.constant(ad::Tensor::matrix(4, 3));
  const std::size_t one[] = {2};
  EXPECT_NEAR(option_loss(tape, logits, one, AnswerOption::kYes).value().item(), std::log(12.0), 1e-12);
  const std::size_t two[] = {0, 3};
  EXPECT_NEAR(option_loss(tape, logits, two, AnswerOption::kNo).value().item(), std::log(6.0), 1e-12);
  EXPECT_THROW(option_loss(tape, logits, std::span<const std::size_t>{}, AnswerOption::kNo), Error);
}

TEST(Options, DecisionTieBreaks) {
  auto tied = ad::Tensor::from_rows({{1, 1, 1}, {1, 1, 1}});
  auto d = decide_option(tied);
  EXPECT_EQ(d.option, AnswerOption::kSpan);
  EXPECT_EQ(d.segment, 0u);
  auto yes_no = ad::Tensor::from_rows({{0, 2, 1}, {2, 0, 1}});
  d = decide_option(yes_no);
  EXPECT_EQ(d.option, AnswerOption::kYes);
  EXPECT_EQ(d.segment, 1u);
  auto no = ad::Tensor::from_rows({{0, 3, 1}, {2, 0, 1}});
  EXPECT_EQ(decide_option(no).option, AnswerOption::kNo);
  EXPECT_EQ(parse_option("yes"), AnswerOption::kYes);
  EXPECT_EQ(to_string(AnswerOption::kNo), "no");
  EXPECT_THROW(parse_option("maybe"), Error);
}

TEST(Projection, SpansInOverlapAppearTwiceAndStraddlersDrop) {
  auto doc = numbered_document(1000);
  const std::vector<std::size_t> question{corpus::kFirstByteId + 'q', corpus::kFirstByteId + 'q'};
  auto enc = pipeline::encode_document(doc, corpus::SegmentationProfile::finetune(), 0, question);
  ASSERT_EQ(enc.segments.size(), 3u);
  const std::size_t ctx = enc.segments[0].context_offset;
  EXPECT_EQ(ctx, 1 + question.size() + 1);
  auto p = project_gold_spans({{400, 410}, {10, 12}, {500, 520}}, enc);
  EXPECT_EQ(p.dropped, 0u);
  std::vector<GoldSpan> spans = p.gold.spans;
  std::sort(spans.begin(), spans.end());
  ASSERT_EQ(spans.size(), 4u);
  EXPECT_EQ(spans[0], (GoldSpan{0, ctx + 10, ctx + 11}));
  EXPECT_EQ(spans[1], (GoldSpan{0, ctx + 400, ctx + 409}));
  EXPECT_EQ(spans[2], (GoldSpan{1, ctx + 16, ctx + 25}));
  EXPECT_EQ(spans[3], (GoldSpan{1, ctx + 116, ctx + 135}));
  auto straddle = project_gold_spans({{300, 800}}, enc);
  EXPECT_EQ(straddle.dropped, 1u);
  EXPECT_TRUE(straddle.gold.empty());
}

TEST(Projection, CandidateMaskCoversContextOnly) {
  auto doc = numbered_document(20);
  const std::vector<std::size_t> question{corpus::kFirstByteId + 'q'};
  auto enc = pipeline::encode_document(doc, corpus::SegmentationProfile::finetune(), 0, question);
  auto cand = candidate_mask(enc);
  ASSERT_EQ(cand.size(), 1u);
  EXPECT_EQ(cand[0].size(), 23u);
  EXPECT_EQ(cand[0][0], 0);
  EXPECT_EQ(cand[0][1], 0);
  EXPECT_EQ(cand[0][2], 0);
  EXPECT_EQ(cand[0][3], 1);
}

TEST(Matching, AnswerTextFoundOnTokenBoundaries) {
  auto v = corpus::Vocab::from_tokens({" the", " ring", " rings"});
  corpus::AnnotatedDocument doc;
  doc.doc_id = "d";
  doc.text = " the Ring the rings the ring";
  doc.tokens = corpus::tokenize(doc.text, v);
  auto spans = match_answer_spans(doc, {"the ring"});
  ASSERT_FALSE(spans.empty());
  EXPECT_EQ(spans.back().end, doc.tokens.size());
}

TEST(Records, ParseOptionalFields) {
  auto r = qa_record_from_json({{"question_id", "q"}, {"question", "?"}, {"doc_id", "d"},
                                {"answers", {"yes"}}, {"option", "yes"},
                                {"supporting", {{{"start", 0}, {"end", 3}}}}});
  ASSERT_TRUE(r.option.has_value());
  EXPECT_EQ(*r.option, AnswerOption::kYes);
  ASSERT_TRUE(r.supporting.has_value());
  EXPECT_EQ(r.supporting->at(0).end, 3u);
  EXPECT_FALSE(r.spans.has_value());
  EXPECT_THROW(qa_record_from_json({{"question_id", "q"}}), std::exception);
}

TEST(Evaluation, MissingIdsAreReported) {
  std::vector<QaRecord> gold{record("q1", "frodo"), record("q2", "sam")};
  std::vector<Prediction> preds{prediction("q1", "frodo"), prediction("q3", "x")};
  try {
    evaluate_predictions(preds, gold, DevMetric::kF1);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("q2"), std::string::npos);
    EXPECT_NE(what.find("q3"), std::string::npos);
  }
}

TEST(Evaluation, InvariantUnderShuffle) {
  std::vector<QaRecord> gold;
  std::vector<Prediction> preds;
  Rng rng(33);
  const std::vector<std::string> words{"frodo", "sam", "the ring", "mordor"};
  for (int i = 0; i < 20; ++i) {
    gold.push_back(record("q" + std::to_string(i), words[rng.below(4)]));
    preds.push_back(prediction("q" + std::to_string(i), words[rng.below(4)]));
  }
  for (DevMetric metric : {DevMetric::kF1, DevMetric::kRougeL}) {
    auto a = evaluate_predictions(preds, gold, metric).to_json();
    rng.shuffle(preds);
    rng.shuffle(gold);
    auto b = evaluate_predictions(preds, gold, metric).to_json();
    EXPECT_EQ(a, b);
  }
  auto exact = evaluate_predictions(
      std::vector<Prediction>{prediction("q1", "The Ring.")}, {record("q1", "the ring")},
      DevMetric::kRougeL);
  EXPECT_NEAR(headline(exact, DevMetric::kRougeL), 1.0, 1e-12);
}

TEST(Predictions, JsonRoundTrip) {
  Prediction p = prediction("q9", "mount doom");
  p.start = 3;
  p.end = 5;
  p.char_start = 10;
  p.char_end = 20;
  p.score = 1.25;
  p.option = AnswerOption::kNo;
  auto back = prediction_from_json(prediction_to_json(p));
  EXPECT_EQ(back.question_id, p.question_id);
  EXPECT_EQ(back.answer, p.answer);
  EXPECT_EQ(back.end, 5u);
  EXPECT_EQ(back.char_end, 20u);
  EXPECT_EQ(back.score, 1.25);
  EXPECT_EQ(back.option, p.option);
  const auto path = std::filesystem::temp_directory_path() / "readtwice_preds.jsonl";
  write_predictions(path, {p, prediction("q10", "")});
  EXPECT_EQ(read_predictions(path).size(), 2u);
}

TEST(Heads, QaScoresShapes) {
  auto m = checks::tiny_model(model::MemoryMode::kEntity, false, 12);
  ad::Tape tape;
  const ad::Var h4[] = {tape.constant(ad::Tensor::matrix(7, m.config.encoder.hidden_dim, 0.1)),
                        tape.constant(ad::Tensor::matrix(3, m.config.encoder.hidden_dim, 0.2))};
  auto s = qa_scores(tape, m, h4);
  ASSERT_EQ(s.begin.size(), 2u);
  EXPECT_EQ(s.begin[0].rows(), 7u);
  EXPECT_EQ(s.end[1].rows(), 3u);
  EXPECT_EQ(option_logits(tape, m, h4).value().shape(), (std::vector<std::size_t>{2, 3}));
}

TEST(BruteForce, OracleCheckPasses) {
  auto r = checks::check_bruteforce_oracles();
  EXPECT_TRUE(r.passed) << r.detail;
}
