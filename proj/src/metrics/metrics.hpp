#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace readtwice::metrics {

inline constexpr double kRougeBeta = 1.2;
// Stand-in precision numerator for an n-gram order with zero matches.
inline constexpr double kBleuEpsilon = 1e-9;
inline constexpr const char* kPreprocessingTag =
    "lower+strip-one-trailing-period;rouge-l-beta=1.2;bleu-zero-count-epsilon=1e-9;"
    "qa=lower,strip-punct,strip-articles,whitespace-split";

// Lowercase (ASCII) and remove exactly one trailing period.
std::string normalize_for_eval(std::string_view text);
std::vector<std::string> split_words(std::string_view text);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

// F-score from an LCS length and the two sequence lengths.
double rouge_from_lcs(std::size_t lcs, std::size_t hyp_len, std::size_t ref_len);

// Inputs are already-normalized word sequences.
double rouge_l(std::span<const std::string> hypothesis, std::span<const std::string> reference);
double rouge_l(std::string_view hypothesis, std::string_view reference);

// Orders k with no hypothesis k-grams (hypothesis shorter than k) are left out
// of the geometric mean. Brevity penalty uses the reference length closest to
// the hypothesis length (shorter on ties).
double bleu(std::span<const std::string> hypothesis,
            const std::vector<std::vector<std::string>>& references, int n);
double bleu(std::string_view hypothesis, const std::vector<std::string>& references, int n);

// SQuAD-style: lowercase, drop punctuation, drop a/an/the, split on whitespace.
std::string normalize_answer(std::string_view text);

struct F1Em {
  double f1 = 0.0;
  double em = 0.0;
};
F1Em qa_f1_em(std::string_view prediction, const std::vector<std::string>& golds);

class EvalReport {
 public:
  void add(const std::string& id, const std::map<std::string, double>& values);
  std::size_t count() const { return examples_.size(); }
  std::map<std::string, double> aggregates() const;
  const std::map<std::string, std::map<std::string, double>>& examples() const {
    return examples_;
  }
  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::map<std::string, double>> examples_;  // ordered by id
};

}  // namespace readtwice::metrics
