#include "corpus/probe.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "common/error.hpp"

namespace readtwice::corpus {

namespace {

std::string entity_word(std::size_t i) { return " ent" + std::to_string(i); }
std::string value_word(std::size_t i) { return " val" + std::to_string(i); }
std::string filler_word(std::size_t i) { return " w" + std::to_string(i); }
const std::string kIs = " is";

std::string attribute_id(const std::string& doc_id, std::size_t entity) {
  return doc_id + "/ent" + std::to_string(entity) + "/value";
}

std::vector<std::string> vocab_list(const ProbeConfig& c) {
  std::vector<std::string> out{kIs};
  for (std::size_t i = 0; i < c.n_entities; ++i) out.push_back(entity_word(i));
  for (std::size_t i = 0; i < c.n_values; ++i) out.push_back(value_word(i));
  for (std::size_t i = 0; i < c.n_fillers; ++i) out.push_back(filler_word(i));
  return out;
}

}  // namespace

void ProbeConfig::validate() const {
  if (segments_per_doc < 2) fail(ErrorKind::kInvalidArgument, "probe needs at least 2 segments per document");
  if (n_entities == 0 || n_values == 0 || n_fillers == 0) {
    fail(ErrorKind::kInvalidArgument, "probe word pools must be non-empty");
  }
  if (facts_per_doc == 0 || facts_per_doc > n_entities) {
    fail(ErrorKind::kInvalidArgument, "facts_per_doc must be in [1, n_entities]");
  }
  if (segment_tokens < 3 * facts_per_doc) {
    fail(ErrorKind::kInvalidArgument, "segment too short for its statements");
  }
}

Vocab probe_vocab(const ProbeConfig& config) { return Vocab::from_tokens(vocab_list(config)); }

ProbeCorpus generate_probe_corpus(const ProbeConfig& config, Rng& rng) {
  config.validate();
  ProbeCorpus out;
  out.vocab_tokens = vocab_list(config);
  out.chance_accuracy = 1.0 / static_cast<double>(config.n_values);
  const Vocab vocab = Vocab::from_tokens(out.vocab_tokens);
  const std::size_t seg_len = config.segment_tokens;

  for (std::size_t d = 0; d < config.n_docs; ++d) {
    const std::string doc_id = "probe-" + std::to_string(d);
    std::vector<std::string> words(config.segments_per_doc * seg_len);
    std::vector<bool> used(words.size(), false);
    std::vector<DocMention> mentions;

    std::vector<std::size_t> entities(config.n_entities);
    for (std::size_t i = 0; i < entities.size(); ++i) entities[i] = i;
    rng.shuffle(entities);

    // Each segment holds at most facts_per_doc statements; slots are
    // statement-sized cells so statements never overlap.
    const std::size_t slots = seg_len / 3;
    std::vector<std::vector<std::size_t>> free_slots(config.segments_per_doc);
    for (auto& fs : free_slots) {
      for (std::size_t s = 0; s < slots; ++s) fs.push_back(s);
      rng.shuffle(fs);
    }
    auto place = [&](std::size_t segment, std::size_t entity, std::size_t value) {
      const std::size_t slot = free_slots[segment].back();
      free_slots[segment].pop_back();
      const std::size_t start = segment * seg_len + slot * 3;
      words[start] = entity_word(entity);
      words[start + 1] = kIs;
      words[start + 2] = value_word(value);
      used[start] = used[start + 1] = used[start + 2] = true;
      mentions.push_back({start, start + 1, "ent" + std::to_string(entity)});
      mentions.push_back({start + 2, start + 3, attribute_id(doc_id, entity)});
      return start + 2;
    };

    for (std::size_t f = 0; f < config.facts_per_doc; ++f) {
      const std::size_t entity = entities[f];
      const std::size_t value = rng.below(config.n_values);
      const std::size_t fact_seg = rng.below(config.segments_per_doc);
      std::size_t probe_seg = rng.below(config.segments_per_doc - 1);
      if (probe_seg >= fact_seg) ++probe_seg;
      place(fact_seg, entity, value);
      const std::size_t pos = place(probe_seg, entity, value);
      out.manifest.push_back({doc_id, pos, "ent" + std::to_string(entity),
                              value_word(value), fact_seg, probe_seg});
    }
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (!used[i]) words[i] = filler_word(rng.below(config.n_fillers));
    }

    AnnotatedDocument doc;
    doc.doc_id = doc_id;
    for (const auto& w : words) doc.text += w;
    doc.tokens = tokenize(doc.text, vocab);
    if (doc.tokens.size() != words.size()) {
      fail(ErrorKind::kContract, "probe text did not tokenize word-for-word");
    }
    doc.mentions = resolve_overlaps(std::move(mentions));
    out.documents.push_back(std::move(doc));
  }
  return out;
}

void write_probe_manifest(const std::filesystem::path& path,
                          const std::vector<ProbePosition>& manifest) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write manifest " + path.string());
  for (const auto& p : manifest) {
    out << nlohmann::json{{"doc_id", p.doc_id},           {"position", p.position},
                          {"entity_id", p.entity_id},     {"answer", p.answer},
                          {"fact_segment", p.fact_segment}, {"probe_segment", p.probe_segment}}
               .dump()
        << '\n';
  }
}

std::vector<ProbePosition> read_probe_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open manifest " + path.string());
  std::vector<ProbePosition> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      out.push_back({j.at("doc_id").get<std::string>(), j.at("position").get<std::size_t>(),
                     j.at("entity_id").get<std::string>(), j.at("answer").get<std::string>(),
                     j.at("fact_segment").get<std::size_t>(),
                     j.at("probe_segment").get<std::size_t>()});
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kParse, path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace readtwice::corpus
