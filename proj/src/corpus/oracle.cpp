#include "corpus/oracle.hpp"

#include <algorithm>
#include <cctype>

#include "common/error.hpp"
#include "metrics/metrics.hpp"

namespace readtwice::corpus {

std::optional<OracleSpan> rouge_oracle_label(std::span<const std::string> document_words,
                                             std::span<const std::string> answer_words,
                                             std::size_t max_span_len) {
  if (answer_words.empty()) fail(ErrorKind::kInvalidArgument, "oracle answer is empty");
  if (max_span_len == 0) fail(ErrorKind::kInvalidArgument, "max_span_len must be positive");
  const std::size_t m = answer_words.size();
  std::optional<OracleSpan> best;
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t b = 0; b < document_words.size(); ++b) {
    std::fill(prev.begin(), prev.end(), 0);
    const std::size_t last = std::min(document_words.size(), b + max_span_len);
    for (std::size_t e = b; e < last; ++e) {
      cur[0] = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        cur[j] = document_words[e] == answer_words[j - 1] ? prev[j - 1] + 1
                                                          : std::max(prev[j], cur[j - 1]);
      }
      std::swap(prev, cur);
      const double score = metrics::rouge_from_lcs(prev[m], e - b + 1, m);
      if (score > 0.0 && (!best || score > best->score)) best = OracleSpan{b, e, score};
    }
  }
  return best;
}

std::vector<std::string> oracle_words(const std::vector<Token>& tokens, const Vocab& vocab) {
  std::vector<std::string> words;
  words.reserve(tokens.size());
  for (const Token& t : tokens) {
    std::string w;
    for (char c : vocab.surface(t.id)) {
      if (!std::isspace(static_cast<unsigned char>(c))) {
        w += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      }
    }
    words.push_back(std::move(w));
  }
  return words;
}

std::optional<OracleSpan> rouge_oracle_label(const std::vector<Token>& document,
                                             std::string_view answer, const Vocab& vocab,
                                             std::size_t max_span_len) {
  auto answer_words = oracle_words(tokenize(metrics::normalize_for_eval(answer), vocab), vocab);
  std::erase_if(answer_words, [](const std::string& w) { return w.empty(); });
  if (answer_words.empty()) return std::nullopt;
  return rouge_oracle_label(oracle_words(document, vocab), answer_words, max_span_len);
}

}  // namespace readtwice::corpus
