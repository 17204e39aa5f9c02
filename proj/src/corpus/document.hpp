#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "corpus/vocab.hpp"

namespace readtwice::corpus {

// [begin, end) in document token positions.
struct DocMention {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::optional<std::string> entity_id;

  bool operator==(const DocMention&) const = default;
};

struct AnnotatedDocument {
  std::string doc_id;
  std::string text;
  std::vector<Token> tokens;
  std::vector<DocMention> mentions;  // sorted, non-overlapping
  nlohmann::json metadata = nlohmann::json::object();

  std::vector<std::size_t> ids() const { return token_ids(tokens); }
};

// Drops nothing; resolves overlaps by keeping the longer mention (tie: the
// earlier one) and returns the survivors sorted by position. Empty mentions
// are discarded.
std::vector<DocMention> resolve_overlaps(std::vector<DocMention> mentions);

// Builds a document from one corpus record:
//   {"doc_id": str, "text": str, "mentions": [{"start": i, "end": j, "entity_id": str?}]}
// start/end are token offsets into tokenize(text). Any other field is kept as
// metadata. Returns nullopt when a mention is out of bounds.
std::optional<AnnotatedDocument> document_from_record(const nlohmann::json& record,
                                                      const Vocab& vocab);
nlohmann::json document_to_record(const AnnotatedDocument& doc);

// Line-delimited corpus reader. Blank lines are skipped; malformed lines throw
// with their line number; out-of-bounds records are skipped and counted.
class CorpusReader {
 public:
  CorpusReader(const std::filesystem::path& path, const Vocab& vocab);
  std::optional<AnnotatedDocument> next();
  std::size_t rejected() const { return rejected_; }
  std::size_t line() const { return line_; }

 private:
  std::ifstream in_;
  const Vocab& vocab_;
  std::filesystem::path path_;
  std::size_t line_ = 0;
  std::size_t rejected_ = 0;
};

struct LoadedCorpus {
  std::vector<AnnotatedDocument> documents;
  std::size_t rejected = 0;
};

LoadedCorpus load_annotated_corpus(const std::filesystem::path& path, const Vocab& vocab);
void write_corpus(const std::filesystem::path& path, const std::vector<AnnotatedDocument>& docs);

// Exact-string gazetteer: every occurrence of a name whose bytes align with
// token boundaries becomes a mention of the mapped entity. Longest names win.
struct GazetteerEntry {
  std::string name;
  std::string entity_id;
};
std::vector<DocMention> annotate_with_gazetteer(const AnnotatedDocument& doc,
                                                const std::vector<GazetteerEntry>& gazetteer);

}  // namespace readtwice::corpus
