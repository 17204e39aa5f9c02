#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "autodiff/rng.hpp"
#include "corpus/document.hpp"

namespace readtwice::corpus {

struct ProbeConfig {
  std::size_t n_docs = 200;
  std::size_t n_entities = 20;
  std::size_t segments_per_doc = 2;
  std::size_t n_values = 10;
  std::size_t n_fillers = 40;
  std::size_t segment_tokens = 16;
  std::size_t facts_per_doc = 1;

  void validate() const;
};

// A masked position whose answer is stated only in another segment.
struct ProbePosition {
  std::string doc_id;
  std::size_t position = 0;  // document token index
  std::string entity_id;
  std::string answer;        // value token surface
  std::size_t fact_segment = 0;
  std::size_t probe_segment = 0;
};

struct ProbeCorpus {
  std::vector<std::string> vocab_tokens;
  std::vector<AnnotatedDocument> documents;
  std::vector<ProbePosition> manifest;
  double chance_accuracy = 0.0;
};

// Every document binds each of its entities to a value drawn at random. One
// segment states "<entity> is <value>"; a different segment repeats
// "<entity> is <value>" and that value is the probe position. Entities and
// values are both mentions; the two value mentions of a fact share an entity id
// local to the document. Other tokens are random fillers. Segments are exactly
// segment_tokens long, so the pretraining profile with window = segment_tokens
// recovers them.
ProbeCorpus generate_probe_corpus(const ProbeConfig& config, Rng& rng);

Vocab probe_vocab(const ProbeConfig& config);

void write_probe_manifest(const std::filesystem::path& path,
                          const std::vector<ProbePosition>& manifest);
std::vector<ProbePosition> read_probe_manifest(const std::filesystem::path& path);

}  // namespace readtwice::corpus
