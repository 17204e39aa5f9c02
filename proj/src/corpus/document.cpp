#include "corpus/document.hpp"

#include <algorithm>
#include <unordered_map>

#include "common/error.hpp"

namespace readtwice::corpus {

std::vector<DocMention> resolve_overlaps(std::vector<DocMention> mentions) {
  std::erase_if(mentions, [](const DocMention& m) { return m.end <= m.begin; });
  std::vector<std::size_t> order(mentions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto la = mentions[a].end - mentions[a].begin;
    const auto lb = mentions[b].end - mentions[b].begin;
    if (la != lb) return la > lb;
    return mentions[a].begin < mentions[b].begin;
  });
  std::vector<DocMention> kept;
  for (std::size_t i : order) {
    const DocMention& m = mentions[i];
    bool clash = std::any_of(kept.begin(), kept.end(), [&](const DocMention& k) {
      return m.begin < k.end && k.begin < m.end;
    });
    if (!clash) kept.push_back(m);
  }
  std::sort(kept.begin(), kept.end(),
            [](const DocMention& a, const DocMention& b) { return a.begin < b.begin; });
  return kept;
}

std::optional<AnnotatedDocument> document_from_record(const nlohmann::json& record,
                                                      const Vocab& vocab) {
  if (!record.is_object()) fail(ErrorKind::kParse, "corpus record is not an object");
  if (!record.contains("doc_id") || !record.contains("text")) {
    fail(ErrorKind::kParse, "corpus record needs doc_id and text");
  }
  AnnotatedDocument doc;
  const auto& id = record.at("doc_id");
  doc.doc_id = id.is_string() ? id.get<std::string>() : id.dump();
  doc.text = record.at("text").get<std::string>();
  doc.tokens = tokenize(doc.text, vocab);

  std::vector<DocMention> mentions;
  if (record.contains("mentions")) {
    for (const auto& m : record.at("mentions")) {
      DocMention dm;
      dm.begin = m.at("start").get<std::size_t>();
      dm.end = m.at("end").get<std::size_t>();
      if (m.contains("entity_id") && !m.at("entity_id").is_null()) {
        dm.entity_id = m.at("entity_id").get<std::string>();
      }
      if (dm.end > doc.tokens.size() || dm.begin > dm.end) return std::nullopt;
      mentions.push_back(std::move(dm));
    }
  }
  doc.mentions = resolve_overlaps(std::move(mentions));
  for (const auto& [key, value] : record.items()) {
    if (key != "doc_id" && key != "text" && key != "mentions") doc.metadata[key] = value;
  }
  return doc;
}

nlohmann::json document_to_record(const AnnotatedDocument& doc) {
  nlohmann::json rec = doc.metadata.is_object() ? doc.metadata : nlohmann::json::object();
  rec["doc_id"] = doc.doc_id;
  rec["text"] = doc.text;
  auto mentions = nlohmann::json::array();
  for (const auto& m : doc.mentions) {
    nlohmann::json j = {{"start", m.begin}, {"end", m.end}};
    if (m.entity_id) j["entity_id"] = *m.entity_id;
    mentions.push_back(std::move(j));
  }
  rec["mentions"] = std::move(mentions);
  return rec;
}

CorpusReader::CorpusReader(const std::filesystem::path& path, const Vocab& vocab)
    : in_(path), vocab_(vocab), path_(path) {
  if (!in_) fail(ErrorKind::kIo, "cannot open corpus " + path.string());
}

std::optional<AnnotatedDocument> CorpusReader::next() {
  std::string text;
  while (std::getline(in_, text)) {
    ++line_;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::optional<AnnotatedDocument> doc;
    try {
      doc = document_from_record(nlohmann::json::parse(text), vocab_);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kParse, path_.string() + ":" + std::to_string(line_) + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorKind::kParse, path_.string() + ":" + std::to_string(line_) + ": " + e.what());
    }
    if (doc) return doc;
    ++rejected_;
  }
  return std::nullopt;
}

LoadedCorpus load_annotated_corpus(const std::filesystem::path& path, const Vocab& vocab) {
  CorpusReader reader(path, vocab);
  LoadedCorpus out;
  while (auto doc = reader.next()) out.documents.push_back(std::move(*doc));
  out.rejected = reader.rejected();
  return out;
}

void write_corpus(const std::filesystem::path& path, const std::vector<AnnotatedDocument>& docs) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write corpus " + path.string());
  for (const auto& d : docs) out << document_to_record(d).dump() << '\n';
}

std::vector<DocMention> annotate_with_gazetteer(const AnnotatedDocument& doc,
                                                const std::vector<GazetteerEntry>& gazetteer) {
  std::unordered_map<std::size_t, std::size_t> token_at_begin, token_at_end;
  for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
    token_at_begin[doc.tokens[i].begin] = i;
    token_at_end[doc.tokens[i].end] = i + 1;
  }
  std::vector<DocMention> found;
  for (const auto& entry : gazetteer) {
    if (entry.name.empty()) continue;
    for (std::size_t pos = doc.text.find(entry.name); pos != std::string::npos;
         pos = doc.text.find(entry.name, pos + 1)) {
      auto b = token_at_begin.find(pos);
      auto e = token_at_end.find(pos + entry.name.size());
      if (b == token_at_begin.end() || e == token_at_end.end()) continue;
      found.push_back({b->second, e->second, entry.entity_id});
    }
  }
  return resolve_overlaps(std::move(found));
}

}  // namespace readtwice::corpus
