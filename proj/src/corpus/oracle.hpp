#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "corpus/vocab.hpp"

namespace readtwice::corpus {

struct OracleSpan {
  std::size_t begin = 0;  // inclusive token positions
  std::size_t end = 0;
  double score = 0.0;
};

// Best span of at most max_span_len words by ROUGE-L against the answer words.
// Ties go to the earliest start, then the shortest span. nullopt when every
// span scores 0.
std::optional<OracleSpan> rouge_oracle_label(std::span<const std::string> document_words,
                                             std::span<const std::string> answer_words,
                                             std::size_t max_span_len = 30);

// Word form of each token for oracle matching: surface lowercased with
// surrounding whitespace removed (may be empty).
std::vector<std::string> oracle_words(const std::vector<Token>& tokens, const Vocab& vocab);

std::optional<OracleSpan> rouge_oracle_label(const std::vector<Token>& document,
                                             std::string_view answer, const Vocab& vocab,
                                             std::size_t max_span_len = 30);

}  // namespace readtwice::corpus
