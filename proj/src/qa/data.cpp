#include "qa/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <unordered_map>

#include "common/error.hpp"
#include "corpus/oracle.hpp"

namespace readtwice::qa {

namespace {

std::vector<TokenSpan> parse_spans(const nlohmann::json& j) {
  std::vector<TokenSpan> out;
  for (const auto& s : j) out.push_back({s.at("start").get<std::size_t>(), s.at("end").get<std::size_t>()});
  return out;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\n\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\n\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

QaRecord qa_record_from_json(const nlohmann::json& j) {
  QaRecord r;
  r.question_id = j.at("question_id").get<std::string>();
  r.question = j.at("question").get<std::string>();
  r.doc_id = j.at("doc_id").get<std::string>();
  if (j.contains("answers")) r.answers = j.at("answers").get<std::vector<std::string>>();
  if (j.contains("spans") && !j.at("spans").is_null()) r.spans = parse_spans(j.at("spans"));
  if (j.contains("option") && !j.at("option").is_null()) {
    r.option = parse_option(j.at("option").get<std::string>());
  }
  if (j.contains("supporting") && !j.at("supporting").is_null()) {
    r.supporting = parse_spans(j.at("supporting"));
  }
  return r;
}

std::vector<QaRecord> load_qa_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open QA file " + path.string());
  std::vector<QaRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(qa_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kParse, path.string() + ":" + std::to_string(n) + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorKind::kParse, path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::vector<TokenSpan> match_answer_spans(const corpus::AnnotatedDocument& doc,
                                          const std::vector<std::string>& answers) {
  std::unordered_map<std::size_t, std::size_t> starts, ends;
  for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
    starts[doc.tokens[i].begin] = i;
    ends[doc.tokens[i].end] = i + 1;
  }
  const std::string text = lower(doc.text);
  std::set<std::pair<std::size_t, std::size_t>> found;
  for (const auto& raw : answers) {
    const std::string answer = lower(trim(raw));
    if (answer.empty()) continue;
    for (std::size_t pos = text.find(answer); pos != std::string::npos;
         pos = text.find(answer, pos + 1)) {
      // Tokens may carry the preceding blank, so a match may start one byte
      // into its first token.
      std::size_t b = pos;
      auto sb = starts.find(b);
      if (sb == starts.end() && b > 0 && std::isspace(static_cast<unsigned char>(text[b - 1]))) {
        sb = starts.find(b - 1);
      }
      auto se = ends.find(pos + answer.size());
      if (sb == starts.end() || se == ends.end()) continue;
      found.insert({sb->second, se->second});
    }
  }
  std::vector<TokenSpan> out;
  for (const auto& [s, e] : found) out.push_back({s, e});
  return out;
}

ProjectedSpans project_gold_spans(const std::vector<TokenSpan>& spans,
                                  const pipeline::EncodedDocument& doc) {
  ProjectedSpans out;
  for (const TokenSpan& span : spans) {
    if (span.end <= span.start) {
      ++out.dropped;
      continue;
    }
    bool placed = false;
    for (std::size_t s = 0; s < doc.segments.size(); ++s) {
      const auto& seg = doc.segments[s];
      const auto& w = doc.map.windows[seg.window];
      if (span.start >= w.offset && span.end <= w.offset + w.length) {
        out.gold.spans.push_back({s, span.start - w.offset + seg.context_offset,
                                  span.end - 1 - w.offset + seg.context_offset});
        placed = true;
      }
    }
    if (!placed) ++out.dropped;
  }
  std::sort(out.gold.spans.begin(), out.gold.spans.end());
  out.gold.spans.erase(std::unique(out.gold.spans.begin(), out.gold.spans.end()),
                       out.gold.spans.end());
  return out;
}

CandidateMask candidate_mask(const pipeline::EncodedDocument& doc) {
  CandidateMask out;
  for (const auto& s : doc.segments) out.push_back(s.context_mask());
  return out;
}

std::vector<QaExample> prepare_examples(const std::vector<QaRecord>& records,
                                        const std::vector<corpus::AnnotatedDocument>& docs,
                                        const corpus::Vocab& vocab, const PrepareOptions& options,
                                        PrepareStats* stats) {
  PrepareStats local;
  PrepareStats& st = stats ? *stats : local;
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < docs.size(); ++i) by_id.emplace(docs[i].doc_id, i);
  std::vector<QaExample> out;
  for (const QaRecord& r : records) {
    auto it = by_id.find(r.doc_id);
    if (it == by_id.end()) {
      ++st.missing_documents;
      fail(ErrorKind::kInvalidArgument, "question " + r.question_id + " names unknown document " + r.doc_id);
    }
    const corpus::AnnotatedDocument& doc = docs[it->second];
    QaExample ex;
    ex.record = r;
    ex.doc_index = it->second;
    auto q = corpus::token_ids(corpus::tokenize(r.question, vocab));
    if (q.size() > options.question_max_tokens) q.resize(options.question_max_tokens);
    // The question prefix shares the window budget with document tokens.
    corpus::SegmentationProfile profile = options.profile;
    const std::size_t prefix = q.empty() ? 1 : q.size() + 2;
    if (profile.window <= prefix - 1 + profile.overlap + 1) {
      fail(ErrorKind::kInvalidArgument, "question leaves no room in the segment window");
    }
    profile.window -= prefix - 1;
    ex.encoded = pipeline::encode_document(doc, profile, 0, q);
    ex.encoded.source = it->second;

    std::vector<TokenSpan> spans;
    if (r.spans) spans = *r.spans;
    else spans = match_answer_spans(doc, r.answers);
    if (spans.empty() && options.rouge_oracle && !r.answers.empty()) {
      if (auto label = corpus::rouge_oracle_label(doc.tokens, r.answers.front(), vocab,
                                                  options.max_answer_len)) {
        spans.push_back({label->begin, label->end + 1});
        ex.oracle_label = true;
        ++st.oracle_labels;
      }
    }
    ProjectedSpans projected = project_gold_spans(spans, ex.encoded);
    ex.gold = std::move(projected.gold);
    st.dropped_spans += projected.dropped;
    if (ex.gold.empty()) ++st.without_span;

    if (r.supporting) {
      for (std::size_t s = 0; s < ex.encoded.segments.size(); ++s) {
        const auto& w = ex.encoded.map.windows[ex.encoded.segments[s].window];
        for (const TokenSpan& sp : *r.supporting) {
          if (sp.start < w.offset + w.length && w.offset < sp.end) {
            ex.supporting.push_back(s);
            break;
          }
        }
      }
    }
    if (ex.supporting.empty()) {
      for (std::size_t s = 0; s < ex.encoded.segments.size(); ++s) ex.supporting.push_back(s);
    }
    ++st.examples;
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace readtwice::qa
