#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "corpus/document.hpp"
#include "corpus/segment.hpp"
#include "pipeline/inputs.hpp"
#include "qa/heads.hpp"

namespace readtwice::qa {

// [start, end) in document tokens.
struct TokenSpan {
  std::size_t start = 0;
  std::size_t end = 0;
};

// QA file record:
//   {"question_id": str, "question": str, "doc_id": str, "answers": [str],
//    "spans": [{"start": i, "end": j}]?, "option": "yes"|"no"?,
//    "supporting": [{"start": i, "end": j}]?}
// Spans are document token offsets, end exclusive.
struct QaRecord {
  std::string question_id;
  std::string question;
  std::string doc_id;
  std::vector<std::string> answers;
  std::optional<std::vector<TokenSpan>> spans;
  std::optional<AnswerOption> option;
  std::optional<std::vector<TokenSpan>> supporting;
};

QaRecord qa_record_from_json(const nlohmann::json& j);
std::vector<QaRecord> load_qa_records(const std::filesystem::path& path);

// Token spans whose text equals an answer (case-insensitive, surrounding
// blanks ignored) and whose edges fall on token boundaries.
std::vector<TokenSpan> match_answer_spans(const corpus::AnnotatedDocument& doc,
                                          const std::vector<std::string>& answers);

struct ProjectedSpans {
  AnswerSpanSet gold;
  std::size_t dropped = 0;  // spans no window contains
};

// Each span fully inside a window yields one entry per such window.
ProjectedSpans project_gold_spans(const std::vector<TokenSpan>& spans,
                                  const pipeline::EncodedDocument& doc);

struct QaExample {
  QaRecord record;
  std::size_t doc_index = 0;
  pipeline::EncodedDocument encoded;
  AnswerSpanSet gold;
  std::vector<std::size_t> supporting;  // segment indices
  bool oracle_label = false;            // gold came from the ROUGE-L oracle
};

struct PrepareStats {
  std::size_t examples = 0;
  std::size_t without_span = 0;   // no gold span survived (span loss skipped)
  std::size_t dropped_spans = 0;  // spans straddling every window
  std::size_t oracle_labels = 0;
  std::size_t missing_documents = 0;
};

struct PrepareOptions {
  corpus::SegmentationProfile profile = corpus::SegmentationProfile::finetune();
  std::size_t question_max_tokens = 64;
  bool rouge_oracle = false;  // label unmatched answers with the ROUGE-L oracle
  std::size_t max_answer_len = 30;
};

std::vector<QaExample> prepare_examples(const std::vector<QaRecord>& records,
                                        const std::vector<corpus::AnnotatedDocument>& docs,
                                        const corpus::Vocab& vocab, const PrepareOptions& options,
                                        PrepareStats* stats = nullptr);

// Context tokens of every segment (question, CLS and SEP excluded).
CandidateMask candidate_mask(const pipeline::EncodedDocument& doc);

}  // namespace readtwice::qa
