#include "metrics/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "common/error.hpp"

namespace readtwice::metrics {

namespace {

std::string lower(std::string_view text) {
  std::string out(text);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::map<std::vector<std::string>, std::size_t> ngram_counts(std::span<const std::string> words,
                                                            std::size_t k) {
  std::map<std::vector<std::string>, std::size_t> counts;
  for (std::size_t i = 0; i + k <= words.size(); ++i) {
    ++counts[std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(i),
                                      words.begin() + static_cast<std::ptrdiff_t>(i + k))];
  }
  return counts;
}

}  // namespace

std::string normalize_for_eval(std::string_view text) {
  std::string out = lower(text);
  if (!out.empty() && out.back() == '.') out.pop_back();
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_from_lcs(std::size_t lcs, std::size_t hyp_len, std::size_t ref_len) {
  if (lcs == 0 || hyp_len == 0 || ref_len == 0) return 0.0;
  const double p = static_cast<double>(lcs) / static_cast<double>(hyp_len);
  const double r = static_cast<double>(lcs) / static_cast<double>(ref_len);
  const double b2 = kRougeBeta * kRougeBeta;
  return (1.0 + b2) * p * r / (r + b2 * p);
}

double rouge_l(std::span<const std::string> hypothesis, std::span<const std::string> reference) {
  if (hypothesis.empty() || reference.empty()) return 0.0;
  return rouge_from_lcs(lcs_length(hypothesis, reference), hypothesis.size(), reference.size());
}

double rouge_l(std::string_view hypothesis, std::string_view reference) {
  auto h = split_words(hypothesis), r = split_words(reference);
  return rouge_l(h, r);
}

double bleu(std::span<const std::string> hypothesis,
            const std::vector<std::vector<std::string>>& references, int n) {
  if (n < 1) fail(ErrorKind::kInvalidArgument, "bleu order must be positive");
  if (hypothesis.empty() || references.empty()) return 0.0;
  double log_sum = 0.0;
  int orders = 0;
  for (std::size_t k = 1; k <= static_cast<std::size_t>(n); ++k) {
    if (hypothesis.size() < k) break;
    auto hyp = ngram_counts(hypothesis, k);
    std::map<std::vector<std::string>, std::size_t> max_ref;
    for (const auto& ref : references) {
      for (const auto& [g, c] : ngram_counts(ref, k)) max_ref[g] = std::max(max_ref[g], c);
    }
    std::size_t matched = 0, total = 0;
    for (const auto& [g, c] : hyp) {
      total += c;
      auto it = max_ref.find(g);
      if (it != max_ref.end()) matched += std::min(c, it->second);
    }
    const double num = matched == 0 ? kBleuEpsilon : static_cast<double>(matched);
    log_sum += std::log(num / static_cast<double>(total));
    ++orders;
  }
  const double c = static_cast<double>(hypothesis.size());
  double r = 0.0, best = -1.0;
  for (const auto& ref : references) {
    const double len = static_cast<double>(ref.size());
    const double diff = std::abs(len - c);
    if (best < 0.0 || diff < best || (diff == best && len < r)) {
      best = diff;
      r = len;
    }
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / orders);
}

double bleu(std::string_view hypothesis, const std::vector<std::string>& references, int n) {
  std::vector<std::vector<std::string>> refs;
  for (const auto& r : references) refs.push_back(split_words(r));
  auto h = split_words(hypothesis);
  return bleu(h, refs, n);
}

std::string normalize_answer(std::string_view text) {
  std::string stripped;
  for (char c : lower(text)) {
    if (!std::ispunct(static_cast<unsigned char>(c))) stripped += c;
  }
  std::string out;
  for (const auto& w : split_words(stripped)) {
    if (w == "a" || w == "an" || w == "the") continue;
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

F1Em qa_f1_em(std::string_view prediction, const std::vector<std::string>& golds) {
  F1Em best;
  const std::string pred = normalize_answer(prediction);
  const auto pred_words = split_words(pred);
  for (const auto& gold_text : golds) {
    const std::string gold = normalize_answer(gold_text);
    if (pred == gold) best.em = 1.0;
    const auto gold_words = split_words(gold);
    double f1 = 0.0;
    if (pred_words.empty() || gold_words.empty()) {
      f1 = pred_words.empty() && gold_words.empty() ? 1.0 : 0.0;
    } else {
      std::unordered_map<std::string, int> counts;
      for (const auto& w : gold_words) ++counts[w];
      int common = 0;
      for (const auto& w : pred_words) {
        if (counts[w] > 0) {
          --counts[w];
          ++common;
        }
      }
      if (common > 0) {
        const double p = static_cast<double>(common) / static_cast<double>(pred_words.size());
        const double r = static_cast<double>(common) / static_cast<double>(gold_words.size());
        f1 = 2.0 * p * r / (p + r);
      }
    }
    best.f1 = std::max(best.f1, f1);
  }
  return best;
}

void EvalReport::add(const std::string& id, const std::map<std::string, double>& values) {
  if (examples_.count(id)) fail(ErrorKind::kInvalidArgument, "duplicate example id " + id);
  examples_[id] = values;
}

std::map<std::string, double> EvalReport::aggregates() const {
  std::map<std::string, double> sums;
  std::map<std::string, std::size_t> counts;
  for (const auto& [id, values] : examples_) {
    for (const auto& [k, v] : values) {
      sums[k] += v;
      ++counts[k];
    }
  }
  for (auto& [k, v] : sums) v /= static_cast<double>(counts[k]);
  return sums;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["preprocessing"] = kPreprocessingTag;
  j["count"] = count();
  j["aggregate"] = aggregates();
  j["absent_metrics"] = {"meteor"};
  auto rows = nlohmann::json::array();
  for (const auto& [id, values] : examples_) {
    nlohmann::json row = values;
    row["id"] = id;
    rows.push_back(std::move(row));
  }
  j["examples"] = std::move(rows);
  return j;
}

void EvalReport::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write report " + path.string());
  out << to_json().dump(2) << '\n';
}

}  // namespace readtwice::metrics
