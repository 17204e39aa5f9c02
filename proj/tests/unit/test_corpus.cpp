#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "common/error.hpp"
#include "corpus/document.hpp"
#include "corpus/oracle.hpp"
#include "corpus/probe.hpp"
#include "corpus/segment.hpp"
#include "corpus/vocab.hpp"
#include "support/checks.hpp"

using namespace readtwice;
using namespace readtwice::corpus;
namespace fs = std::filesystem;

namespace {

Vocab small_vocab() { return Vocab::from_tokens({"the", " cat", " sat", " on", " mat", "cat"}); }

fs::path temp_file(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "readtwice_unit";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Vocab, SpecialsThenBytesThenWords) {
  Vocab v = small_vocab();
  EXPECT_EQ(v.size(), kFirstWordId + 6);
  EXPECT_EQ(v.id("the"), kFirstWordId);
  EXPECT_EQ(v.id(" cat"), kFirstWordId + 1);
  EXPECT_EQ(v.surface(kFirstByteId + 'a'), "a");
  EXPECT_TRUE(v.is_special(kMaskId));
  EXPECT_FALSE(v.find("dog").has_value());
  EXPECT_THROW(v.id("dog"), Error);
}

TEST(Vocab, SaveLoadRoundTrip) {
  Vocab v = small_vocab();
  const fs::path p = temp_file("vocab.txt");
  v.save(p);
  Vocab w = Vocab::load(p);
  EXPECT_EQ(w.size(), v.size());
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(w.surface(i), v.surface(i));
}

TEST(Tokenize, GreedyLongestMatchAndRoundTrip) {
  Vocab v = small_vocab();
  auto toks = tokenize("the cat sat on the mat!", v);
  ASSERT_GE(toks.size(), 6u);
  EXPECT_EQ(toks[0].id, v.id("the"));
  EXPECT_EQ(toks[1].id, v.id(" cat"));
  EXPECT_EQ(toks.back().id, kFirstByteId + static_cast<unsigned char>('!'));
  EXPECT_EQ(detokenize(toks, v), "the cat sat on the mat!");
  std::size_t pos = 0;
  for (const auto& t : toks) {
    EXPECT_EQ(t.begin, pos);
    pos = t.end;
  }
}

TEST(Tokenize, ArbitraryBytesRoundTrip) {
  Vocab v = small_vocab();
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::string s;
    const std::size_t n = rng.below(40);
    for (std::size_t i = 0; i < n; ++i) {
      s.push_back(rng.bernoulli(0.5) ? " catmhe"[rng.below(7)] : static_cast<char>(rng.below(256)));
    }
    EXPECT_EQ(detokenize(tokenize(s, v), v), s);
  }
}

TEST(Mentions, OverlapKeepsLongerThenEarlier) {
  auto kept = resolve_overlaps({{3, 6, "b"}, {0, 5, "a"}});
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0], (DocMention{0, 5, "a"}));
  auto tie = resolve_overlaps({{2, 4, "late"}, {1, 3, "early"}});
  ASSERT_EQ(tie.size(), 1u);
  EXPECT_EQ(tie[0].entity_id, std::optional<std::string>("early"));
  auto disjoint = resolve_overlaps({{5, 6, "y"}, {0, 2, "x"}, {4, 4, "empty"}});
  ASSERT_EQ(disjoint.size(), 2u);
  EXPECT_EQ(disjoint[0].begin, 0u);
  EXPECT_EQ(disjoint[1].begin, 5u);
}

TEST(Mentions, ResolvedSetIsSortedAndDisjoint) {
  Rng rng(6);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<DocMention> ms;
    for (int i = 0; i < 8; ++i) {
      const std::size_t b = rng.below(30), len = 1 + rng.below(5);
      ms.push_back({b, b + len, "e" + std::to_string(i)});
    }
    auto kept = resolve_overlaps(ms);
    for (std::size_t i = 1; i < kept.size(); ++i) EXPECT_LE(kept[i - 1].end, kept[i].begin);
    for (const auto& m : ms) {
      bool covered = false;
      for (const auto& k : kept) covered |= k.begin < m.end && m.begin < k.end;
      EXPECT_TRUE(covered);
    }
  }
}

TEST(Records, OutOfBoundsMentionRejected) {
  Vocab v = small_vocab();
  nlohmann::json ok = {{"doc_id", "d"}, {"text", "the cat"}, {"mentions", {{{"start", 1}, {"end", 2}, {"entity_id", "c"}}}}, {"title", "t"}};
  auto doc = document_from_record(ok, v);
  ASSERT_TRUE(doc.has_value());
  EXPECT_EQ(doc->mentions.size(), 1u);
  EXPECT_EQ(doc->metadata.at("title"), "t");
  auto back = document_to_record(*doc);
  EXPECT_EQ(back.at("mentions").size(), 1u);
  nlohmann::json bad = ok;
  bad["mentions"][0]["end"] = 3;
  EXPECT_FALSE(document_from_record(bad, v).has_value());
}

TEST(Records, ReaderSkipsBlankAndCountsRejected) {
  Vocab v = small_vocab();
  const fs::path p = temp_file("corpus.jsonl");
  {
    std::ofstream out(p);
    out << R"({"doc_id":"a","text":"the cat","mentions":[{"start":0,"end":1}]})" << "\n\n";
    out << R"({"doc_id":"b","text":"the","mentions":[{"start":0,"end":9}]})" << "\n";
  }
  auto loaded = load_annotated_corpus(p, v);
  EXPECT_EQ(loaded.documents.size(), 1u);
  EXPECT_EQ(loaded.rejected, 1u);
  {
    std::ofstream out(p);
    out << "{not json\n";
  }
  EXPECT_THROW(load_annotated_corpus(p, v), Error);
}

TEST(Gazetteer, TokenAlignedLongestNames) {
  Vocab v = small_vocab();
  AnnotatedDocument doc;
  doc.text = "the cat sat on the mat";
  doc.tokens = tokenize(doc.text, v);
  auto ms = annotate_with_gazetteer(doc, {{"the cat", "Q1"}, {"cat", "Q2"}, {"the", "Q4"}, {"at", "X"}});
  ASSERT_EQ(ms.size(), 2u);
  EXPECT_EQ(ms[0].entity_id, std::optional<std::string>("Q1"));
  EXPECT_EQ(ms[0].begin, 0u);
  EXPECT_EQ(ms[0].end, 2u);
  EXPECT_EQ(ms[1], (DocMention{5, 6, "Q4"}));
}

TEST(Segmentation, ShortDocumentIsOneWindow) {
  auto map = plan_windows(300, SegmentationProfile::pretrain());
  ASSERT_EQ(map.windows.size(), 1u);
  EXPECT_EQ(map.windows[0].length, 300u);
  EXPECT_THROW(plan_windows(0, SegmentationProfile::pretrain()), Error);
}

TEST(Segmentation, FinetuneOffsetsForThousandTokens) {
  auto map = plan_windows(1000, SegmentationProfile::finetune());
  std::vector<std::size_t> offsets;
  for (const auto& w : map.windows) offsets.push_back(w.offset);
  EXPECT_EQ(offsets, (std::vector<std::size_t>{0, 384, 768}));
  EXPECT_EQ(map.windows[1].overlap_prefix, 128u);
  EXPECT_EQ(map.windows.back().length, 232u);
}

TEST(Segmentation, CoversEveryTokenAndRespectsOverlap) {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    SegmentationProfile p{1 + rng.below(64), 0, 1 + rng.below(6)};
    p.overlap = rng.below(p.window);
    const std::size_t n = rng.below(2000);
    auto map = plan_windows(n, p);
    std::vector<int> covered(n, 0);
    for (std::size_t i = 0; i < map.windows.size(); ++i) {
      const auto& w = map.windows[i];
      ASSERT_LE(w.offset + w.length, n);
      EXPECT_LE(w.length, p.window);
      EXPECT_LT(w.index, p.max_segments);
      for (std::size_t k = 0; k < w.length; ++k) covered[w.offset + k] = 1;
      if (i > 0 && map.windows[i - 1].sub_document == w.sub_document) {
        EXPECT_EQ(w.offset, map.windows[i - 1].offset + p.stride());
      }
      EXPECT_EQ(w.offset, w.sub_document * p.sub_document_span() + w.index * p.stride());
      for (std::size_t k = 0; k < w.length; ++k) {
        EXPECT_EQ(map.to_document(i, k), w.offset + k);
        EXPECT_EQ(map.to_local(i, w.offset + k), std::optional<std::size_t>(k));
      }
    }
    for (std::size_t t = 0; t < n; ++t) ASSERT_EQ(covered[t], 1);
  }
}

TEST(Segmentation, InvalidProfileRejected) {
  SegmentationProfile p{16, 16, 4};
  EXPECT_THROW(p.validate(), Error);
  SegmentationProfile q{16, 0, 0};
  EXPECT_THROW(q.validate(), Error);
}

TEST(Segmentation, MentionsClippedToWindows) {
  Vocab v;
  AnnotatedDocument doc;
  for (std::size_t i = 0; i < 40; ++i) doc.tokens.push_back({kFirstByteId + 'a', i, i + 1});
  doc.mentions = {{14, 18, "e"}, {20, 21, "f"}};
  auto seg = segment_document(doc, {16, 0, 128});
  ASSERT_EQ(seg.segments.size(), 3u);
  ASSERT_EQ(seg.segments[0].mentions.size(), 1u);
  EXPECT_EQ(seg.segments[0].mentions[0], (DocMention{14, 16, "e"}));
  ASSERT_EQ(seg.segments[1].mentions.size(), 2u);
  EXPECT_EQ(seg.segments[1].mentions[0], (DocMention{0, 2, "e"}));
  EXPECT_EQ(seg.segments[1].mentions[1], (DocMention{4, 5, "f"}));
}

TEST(Segmentation, ArithmeticCheckPasses) {
  auto r = checks::check_segmentation_arithmetic();
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Probe, FactAndProbeInDifferentSegments) {
  ProbeConfig cfg;
  cfg.n_docs = 50;
  Rng rng(11);
  auto corpus = generate_probe_corpus(cfg, rng);
  Vocab v = probe_vocab(cfg);
  ASSERT_EQ(corpus.documents.size(), 50u);
  EXPECT_DOUBLE_EQ(corpus.chance_accuracy, 1.0 / cfg.n_values);
  EXPECT_EQ(corpus.manifest.size(), 50u * cfg.facts_per_doc);
  std::map<std::string, const AnnotatedDocument*> by_id;
  for (const auto& d : corpus.documents) {
    EXPECT_EQ(d.tokens.size(), cfg.segments_per_doc * cfg.segment_tokens);
    by_id[d.doc_id] = &d;
  }
  for (const auto& p : corpus.manifest) {
    const auto& doc = *by_id.at(p.doc_id);
    EXPECT_NE(p.fact_segment, p.probe_segment);
    EXPECT_EQ(p.position / cfg.segment_tokens, p.probe_segment);
    EXPECT_EQ(v.surface(doc.tokens[p.position].id), p.answer);
    // The answer also appears in the fact segment.
    bool stated = false;
    for (std::size_t i = p.fact_segment * cfg.segment_tokens;
         i < (p.fact_segment + 1) * cfg.segment_tokens; ++i) {
      stated |= v.surface(doc.tokens[i].id) == p.answer;
    }
    EXPECT_TRUE(stated);
  }
}

TEST(Probe, DeterministicAndManifestRoundTrip) {
  ProbeConfig cfg;
  cfg.n_docs = 10;
  Rng a(3), b(3);
  auto x = generate_probe_corpus(cfg, a), y = generate_probe_corpus(cfg, b);
  ASSERT_EQ(x.documents.size(), y.documents.size());
  for (std::size_t i = 0; i < x.documents.size(); ++i) {
    EXPECT_EQ(x.documents[i].ids(), y.documents[i].ids());
  }
  const fs::path p = temp_file("manifest.jsonl");
  write_probe_manifest(p, x.manifest);
  auto back = read_probe_manifest(p);
  ASSERT_EQ(back.size(), x.manifest.size());
  EXPECT_EQ(back[0].position, x.manifest[0].position);
  EXPECT_EQ(back[0].answer, x.manifest[0].answer);
}

TEST(Oracle, PicksBestRougeSpan) {
  const std::vector<std::string> doc{"the", "ring", "was", "made", "in", "mordor", "long", "ago"};
  const std::vector<std::string> ans{"made", "in", "mordor"};
  auto best = rouge_oracle_label(doc, ans, 30);
  ASSERT_TRUE(best.has_value());
  EXPECT_EQ(best->begin, 3u);
  EXPECT_EQ(best->end, 5u);
  EXPECT_NEAR(best->score, 1.0, 1e-12);
  EXPECT_FALSE(rouge_oracle_label(doc, std::vector<std::string>{"elves"}, 30).has_value());
}

TEST(Oracle, TieBreaksEarliestThenShortest) {
  const std::vector<std::string> doc{"x", "a", "y", "a"};
  auto best = rouge_oracle_label(doc, std::vector<std::string>{"a"}, 30);
  ASSERT_TRUE(best.has_value());
  EXPECT_EQ(best->begin, 1u);
  EXPECT_EQ(best->end, 1u);
}

TEST(Oracle, RespectsMaxSpanLength) {
  const std::vector<std::string> doc{"a", "b", "c", "d"};
  auto best = rouge_oracle_label(doc, std::vector<std::string>{"a", "b", "c", "d"}, 2);
  ASSERT_TRUE(best.has_value());
  EXPECT_LE(best->end - best->begin + 1, 2u);
}

TEST(Oracle, MatchesBruteForceOnRandomDocuments) {
  Rng rng(13);
  const std::vector<std::string> words{"a", "b", "c", "d", "e"};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> doc(1 + rng.below(40)), ans(1 + rng.below(5));
    for (auto& w : doc) w = words[rng.below(words.size())];
    for (auto& w : ans) w = words[rng.below(words.size())];
    auto got = rouge_oracle_label(doc, ans, 8);
    auto want = checks::oracle::rouge_span(doc, ans, 8);
    ASSERT_EQ(got.has_value(), want.has_value());
    if (got) {
      EXPECT_EQ(got->begin, want->begin);
      EXPECT_EQ(got->end, want->end);
      EXPECT_NEAR(got->score, want->score, 1e-12);
    }
  }
}
