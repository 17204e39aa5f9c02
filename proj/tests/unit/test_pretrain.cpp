#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "autodiff/ops.hpp"
#include "common/error.hpp"
#include "corpus/probe.hpp"
#include "corpus/vocab.hpp"
#include "pretrain/losses.hpp"
#include "pretrain/masking.hpp"
#include "pretrain/trainer.hpp"
#include "support/checks.hpp"

using namespace readtwice;
using namespace readtwice::pretrain;
using model::MemoryKind;
namespace fs = std::filesystem;

namespace {

struct ProbeFixture {
  corpus::ProbeConfig probe;
  std::vector<TrainingDocument> docs;
  model::ModelConfig model_config;
};

ProbeFixture probe_fixture(std::size_t n_docs) {
  ProbeFixture f;
  f.probe.n_docs = n_docs;
  Rng rng(17);
  auto corpus = corpus::generate_probe_corpus(f.probe, rng);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < corpus.documents.size(); ++i) index[corpus.documents[i].doc_id] = i;
  std::map<std::size_t, std::vector<std::size_t>> forced;
  for (const auto& p : corpus.manifest) forced[index.at(p.doc_id)].push_back(p.position);
  f.docs = make_training_documents(corpus.documents, {16, 0, 128}, forced);
  f.model_config.encoder.vocab_size = corpus::probe_vocab(f.probe).size();
  f.model_config.encoder.max_segment_len = 17;
  return f;
}

std::vector<const TrainingDocument*> batch_of(const std::vector<TrainingDocument>& docs,
                                              std::uint64_t seed, std::uint64_t step,
                                              std::size_t size) {
  std::vector<const TrainingDocument*> out;
  for (std::size_t i : select_batch(docs.size(), size, seed, step)) out.push_back(&docs[i]);
  return out;
}

std::vector<double> flat_params(const model::Model& m) {
  std::vector<double> out;
  m.params.for_each([&](const ad::Parameter& p) {
    out.insert(out.end(), p.value.values().begin(), p.value.values().end());
  });
  return out;
}

}  // namespace

TEST(Masking, ForcedPositionsAlwaysBecomeMaskToken) {
  Rng rng(1);
  std::vector<std::size_t> ids(32);
  std::iota(ids.begin(), ids.end(), corpus::kFirstWordId);
  const std::vector<model::Mention> mentions{{4, 6, "e"}};
  const std::vector<std::size_t> forced{5, 20};
  MaskingConfig cfg;
  for (int t = 0; t < 200; ++t) {
    auto m = mask_tokens(ids, mentions, {}, rng, cfg, 400, forced);
    for (std::size_t p : {4u, 5u, 20u}) {
      EXPECT_EQ(m.masked[p], 1);
      EXPECT_EQ(m.labels[p], ids[p]);
    }
    EXPECT_EQ(m.input_ids[5], corpus::kMaskId);
    EXPECT_EQ(m.input_ids[20], corpus::kMaskId);
    EXPECT_TRUE(std::is_sorted(m.positions.begin(), m.positions.end()));
    EXPECT_EQ(m.masked_count(),
              static_cast<std::size_t>(std::accumulate(m.masked.begin(), m.masked.end(), 0)));
  }
}

TEST(Masking, MentionsMaskedWholeAndMaskableRespected) {
  Rng rng(2);
  std::vector<std::size_t> ids(40, corpus::kFirstWordId + 3);
  const std::vector<model::Mention> mentions{{2, 5, "a"}, {10, 12, "b"}, {30, 33, "c"}};
  std::vector<std::uint8_t> maskable(40, 1);
  maskable[0] = 0;
  for (std::size_t i = 20; i < 25; ++i) maskable[i] = 0;
  MaskingConfig cfg;
  cfg.entity_rate = 0.5;
  for (int t = 0; t < 300; ++t) {
    auto m = mask_tokens(ids, mentions, maskable, rng, cfg, 400);
    for (const auto& men : mentions) {
      std::size_t n = 0;
      for (std::size_t i = men.begin; i < men.end; ++i) n += m.masked[i];
      EXPECT_TRUE(n == 0 || n == men.end - men.begin);
      for (std::size_t i = men.begin; i < men.end; ++i) EXPECT_EQ(m.entity[i], 1);
    }
    EXPECT_EQ(m.masked[0], 0);
    for (std::size_t i = 20; i < 25; ++i) EXPECT_EQ(m.masked[i], 0);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!m.masked[i]) EXPECT_EQ(m.input_ids[i], ids[i]);
    }
  }
}

TEST(Masking, MaskExactlyTouchesOnlyListedPositions) {
  std::vector<std::size_t> ids{10, 11, 12, 13};
  auto m = mask_exactly(ids, {}, std::vector<std::size_t>{2});
  EXPECT_EQ(m.input_ids, (std::vector<std::size_t>{10, 11, corpus::kMaskId, 13}));
  EXPECT_EQ(m.positions, (std::vector<std::size_t>{2}));
}

TEST(Masking, StatisticsCheckPasses) {
  auto r = checks::check_masking_statistics();
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(MlmLoss, UniformLogitsGiveLogVocab) {
  auto m = checks::tiny_model(model::MemoryMode::kEntity, false, 3);
  for (const char* p : {"mlm/transform/w", "mlm/norm/gamma", "mlm/norm/beta", "mlm/output_bias"}) {
    for (double& v : m.params.at(p).value.values()) v = 0.0;
  }
  ad::Tape tape;
  Rng rng(3);
  ad::Tensor h = ad::Tensor::matrix(6, m.config.encoder.hidden_dim);
  for (double& v : h.values()) v = rng.normal();
  const ad::Var rows[] = {tape.constant(h)};
  std::vector<std::size_t> ids{5, 6, 7, 8, 9, 10};
  const MaskedSegment masks[] = {mask_exactly(ids, {}, std::vector<std::size_t>{1, 4})};
  auto r = mlm_loss(tape, m, rows, masks);
  EXPECT_EQ(r.count, 2u);
  EXPECT_NEAR(r.loss.value().item(), std::log(static_cast<double>(m.config.encoder.vocab_size)), 1e-12);
}

TEST(MlmLoss, MatchesManualCrossEntropyAcrossSegments) {
  auto m = checks::tiny_model(model::MemoryMode::kEntity, false, 4);
  ad::Tape tape;
  Rng rng(4);
  std::vector<ad::Var> rows;
  std::vector<MaskedSegment> masks;
  std::vector<std::vector<std::size_t>> picks{{0, 3}, {}, {2}};
  for (std::size_t s = 0; s < 3; ++s) {
    ad::Tensor h = ad::Tensor::matrix(5, m.config.encoder.hidden_dim);
    for (double& v : h.values()) v = rng.normal();
    rows.push_back(tape.constant(h));
    std::vector<std::size_t> ids(5);
    for (auto& id : ids) id = 4 + rng.below(30);
    masks.push_back(mask_exactly(ids, {}, picks[s]));
  }
  auto r = mlm_loss(tape, m, rows, masks);
  ASSERT_EQ(r.count, 3u);
  double want = 0.0;
  std::size_t row = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t p : picks[s]) {
      ad::Tape t2;
      const std::size_t one[] = {p};
      auto logits = mlm_logits(t2, m, ad::gather_rows(t2.constant(rows[s].value()), one)).value();
      double mx = -1e300, z = 0.0;
      for (double v : logits.values()) mx = std::max(mx, v);
      for (double v : logits.values()) z += std::exp(v - mx);
      want += mx + std::log(z) - logits(0, masks[s].labels[p]);
      EXPECT_EQ(r.labels[row++], masks[s].labels[p]);
    }
  }
  EXPECT_NEAR(r.loss.value().item(), want / 3.0, 1e-12);
}

TEST(MlmLoss, NoMaskedPositionsIsFlaggedEmpty) {
  auto m = checks::tiny_model(model::MemoryMode::kEntity, false, 4);
  ad::Tape tape;
  const ad::Var rows[] = {tape.constant(ad::Tensor::matrix(3, m.config.encoder.hidden_dim))};
  std::vector<std::size_t> ids{5, 6, 7};
  const MaskedSegment masks[] = {mask_exactly(ids, {}, std::vector<std::size_t>{})};
  auto r = mlm_loss(tape, m, rows, masks);
  EXPECT_TRUE(r.empty);
  EXPECT_EQ(r.loss.value().item(), 0.0);
}

TEST(CorefPairs, ExhaustiveEnumeration) {
  std::vector<model::MemoryEntry> e{{0, 0, MemoryKind::kEntity, 0, 1, "a"},
                                    {0, 1, MemoryKind::kEntity, 0, 1, "a"},
                                    {0, 1, MemoryKind::kEntity, 2, 3, "b"},
                                    {0, 2, MemoryKind::kEntity, 0, 1, std::nullopt},
                                    {0, 0, MemoryKind::kEntity, 4, 5, "a"}};
  auto pairs = coref_pairs(e, 0, nullptr);
  std::size_t pos = 0, neg = 0;
  for (const auto& p : pairs) {
    ASSERT_TRUE(e[p.first].entity_id && e[p.second].entity_id);
    const bool same = *e[p.first].entity_id == *e[p.second].entity_id;
    EXPECT_EQ(p.positive, same);
    if (same) EXPECT_NE(e[p.first].segment, e[p.second].segment);
    (p.positive ? pos : neg) += 1;
  }
  EXPECT_EQ(pos, 2u);
  EXPECT_EQ(neg, 3u);
}

TEST(CorefPairs, SampledNegativesHaveOtherEntities) {
  std::vector<model::MemoryEntry> e;
  for (std::size_t s = 0; s < 6; ++s) {
    e.push_back({0, s, MemoryKind::kEntity, 0, 1, "e" + std::to_string(s % 3)});
  }
  Rng rng(5);
  auto pairs = coref_pairs(e, 4, &rng);
  std::size_t pos = 0;
  for (const auto& p : pairs) {
    if (p.positive) ++pos;
    else EXPECT_NE(*e[p.first].entity_id, *e[p.second].entity_id);
  }
  EXPECT_EQ(pos, 3u);
  EXPECT_EQ(pairs.size(), pos * 5);
}

TEST(CorefLoss, ZeroVectorsGiveLogTwo) {
  auto m = checks::tiny_model(model::MemoryMode::kEntity, false, 6);
  ad::Tape tape;
  model::MemoryTable table;
  table.vectors = tape.constant(ad::Tensor::matrix(3, m.config.encoder.hidden_dim));
  table.entries = {{0, 0, MemoryKind::kEntity, 0, 1, "a"}, {0, 1, MemoryKind::kEntity, 0, 1, "a"},
                   {0, 1, MemoryKind::kEntity, 2, 3, "b"}};
  table.noop = m.bind(tape, "memory/noop");
  auto pairs = coref_pairs(table.entries, 0, nullptr);
  auto r = coref_loss(tape, m, table, pairs);
  EXPECT_EQ(r.pairs, pairs.size());
  EXPECT_NEAR(r.loss.value().item(), std::log(2.0), 1e-12);
  auto none = coref_loss(tape, m, table, {});
  EXPECT_EQ(none.pairs, 0u);
  EXPECT_EQ(none.loss.value().item(), 0.0);
}

TEST(CorefLoss, MatchesIndependentOracle) {
  auto m = checks::tiny_model(model::MemoryMode::kEntity, false, 7);
  m.params.at("coref/bias").value[0] = -0.3;
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(8);
    std::vector<model::MemoryEntry> entries;
    std::vector<std::vector<double>> vectors;
    ad::Tensor t = ad::Tensor::matrix(n, m.config.encoder.hidden_dim);
    for (std::size_t i = 0; i < n; ++i) {
      std::optional<std::string> id;
      if (rng.below(5) != 0) id = "e" + std::to_string(rng.below(3));
      entries.push_back({0, rng.below(3), MemoryKind::kEntity, i, i + 1, id});
      std::vector<double> row;
      for (std::size_t c = 0; c < t.cols(); ++c) row.push_back(t(i, c) = rng.normal(0, 0.4));
      vectors.push_back(row);
    }
    ad::Tape tape;
    model::MemoryTable table;
    table.vectors = tape.constant(t);
    table.entries = entries;
    table.noop = m.bind(tape, "memory/noop");
    auto pairs = coref_pairs(entries, 0, nullptr);
    auto r = coref_loss(tape, m, table, pairs);
    EXPECT_NEAR(r.loss.value().item(), checks::oracle::coref_loss(vectors, entries, -0.3), 1e-12);
  }
}

TEST(PretrainLoss, ZeroCorefWeightLeavesMlmGradients) {
  auto f = probe_fixture(8);
  auto m = model::make_model(f.model_config, 2);
  auto batch = batch_of(f.docs, 0, 1, 4);
  std::vector<const pipeline::EncodedDocument*> encoded;
  for (auto* d : batch) encoded.push_back(&d->encoded);
  auto inputs = pipeline::batch_inputs(encoded);

  auto grads = [&](double weight, double* mlm_value) {
    PretrainConfig cfg;
    cfg.coref_weight = weight;
    Rng mask_rng(9);
    auto masks = mask_batch(batch, mask_rng, cfg.masking, f.model_config.encoder.vocab_size);
    Rng rng(10);
    ad::Tape tape;
    m.params.zero_grad();
    auto loss = pretrain_loss(tape, m, inputs, masks, cfg, rng);
    *mlm_value = loss.mlm.loss.value().item();
    if (weight > 0) EXPECT_GT(loss.coref.pairs, 0u);
    tape.backward(loss.total);
    std::vector<double> g;
    m.params.for_each([&](const ad::Parameter& p) { g.insert(g.end(), p.grad.begin(), p.grad.end()); });
    return std::make_pair(loss.total.value().item(), g);
  };
  double mlm0 = 0, mlm1 = 0;
  auto [total0, g0] = grads(0.0, &mlm0);
  auto [total1, g1] = grads(1.0, &mlm1);
  EXPECT_EQ(total0, mlm0);
  EXPECT_EQ(mlm0, mlm1);
  EXPECT_GT(total1, mlm1);

  // Weight 0 must equal a pure MLM backward.
  PretrainConfig cfg;
  Rng mask_rng(9);
  auto masks = mask_batch(batch, mask_rng, cfg.masking, f.model_config.encoder.vocab_size);
  ad::Tape tape;
  m.params.zero_grad();
  auto fwd = model::read_twice(tape, m, [&] {
    std::vector<model::SegmentInput> masked = inputs;
    for (std::size_t i = 0; i < masked.size(); ++i) masked[i].token_ids = masks[i].input_ids;
    return masked;
  }());
  std::vector<ad::Var> h4;
  for (const auto& s : fwd.segments) h4.push_back(s.h4);
  tape.backward(mlm_loss(tape, m, h4, masks).loss);
  std::vector<double> g;
  m.params.for_each([&](const ad::Parameter& p) { g.insert(g.end(), p.grad.begin(), p.grad.end()); });
  ASSERT_EQ(g.size(), g0.size());
  double diff = 0;
  for (std::size_t i = 0; i < g.size(); ++i) diff = std::max(diff, std::abs(g[i] - g0[i]));
  EXPECT_LT(diff, 1e-12);
}

TEST(Trainer, SelectBatchIsDeterministicAndDistinct) {
  auto a = select_batch(50, 8, 3, 7), b = select_batch(50, 8, 3, 7);
  EXPECT_EQ(a, b);
  EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), 8u);
  EXPECT_NE(a, select_batch(50, 8, 3, 8));
  EXPECT_EQ(select_batch(3, 8, 0, 1).size(), 3u);
}

TEST(Trainer, StepIsDeterministic) {
  auto f = probe_fixture(16);
  auto run = [&] {
    auto m = model::make_model(f.model_config, 4);
    ad::Adam adam({});
    PretrainConfig cfg;
    for (std::uint64_t s = 1; s <= 3; ++s) pretrain_step(m, adam, batch_of(f.docs, 0, s, 4), cfg, s);
    return flat_params(m);
  };
  EXPECT_EQ(run(), run());
}

TEST(Trainer, LossDecreasesOnProbeCorpus) {
  auto f = probe_fixture(100);
  auto m = model::make_model(f.model_config, 1);
  ad::AdamConfig ac;
  ac.warmup_steps = 20;
  ad::Adam adam(ac);
  PretrainConfig cfg;
  std::vector<double> mlm;
  TrainLoopOptions opt;
  opt.steps = 200;
  TrainLoopHooks hooks;
  hooks.on_step = [&](const StepMetrics& s) { mlm.push_back(s.mlm); };
  run_pretraining(m, adam, f.docs, cfg, opt, hooks);
  ASSERT_EQ(mlm.size(), 200u);
  const double head = std::accumulate(mlm.begin(), mlm.begin() + 20, 0.0) / 20;
  const double tail = std::accumulate(mlm.end() - 20, mlm.end(), 0.0) / 20;
  EXPECT_LT(tail, head - 0.5);
}

TEST(Trainer, ResumeFromCheckpointIsBitIdentical) {
  auto f = probe_fixture(20);
  PretrainConfig cfg;
  cfg.batch_documents = 4;
  ad::AdamConfig ac;
  ac.warmup_steps = 2;
  ac.total_steps = 8;
  const fs::path dir = fs::temp_directory_path() / "readtwice_resume";
  fs::create_directories(dir);

  auto straight = model::make_model(f.model_config, 3);
  ad::Adam a1(ac);
  TrainLoopOptions full;
  full.steps = 8;
  full.checkpoint_path = dir / "straight.rtw";
  run_pretraining(straight, a1, f.docs, cfg, full, {});

  auto first = model::make_model(f.model_config, 3);
  ad::Adam a2(ac);
  TrainLoopOptions half = full;
  half.steps = 4;
  half.checkpoint_path = dir / "half.rtw";
  run_pretraining(first, a2, f.docs, cfg, half, {});

  auto resumed = model::make_model(f.model_config, 99);
  ad::Adam a3(ac);
  load_training_state(dir / "half.rtw", resumed, &a3);
  EXPECT_EQ(a3.steps_taken(), 4u);
  TrainLoopOptions rest = full;
  rest.checkpoint_path = dir / "resumed.rtw";
  run_pretraining(resumed, a3, f.docs, cfg, rest, {});
  EXPECT_EQ(flat_params(straight), flat_params(resumed));
}

TEST(Trainer, MissingCheckpointIsAnError) {
  auto f = probe_fixture(2);
  auto m = model::make_model(f.model_config, 3);
  ad::Adam adam({});
  EXPECT_THROW(load_training_state("/nonexistent/x.rtw", m, &adam), Error);
}

TEST(Trainer, ProbeAccuracyCountsForcedPositionsOnly) {
  auto f = probe_fixture(10);
  auto m = model::make_model(f.model_config, 3);
  auto acc = mlm_accuracy(m, f.docs, {}, 1, true);
  EXPECT_EQ(acc.all_count, 10u);
  EXPECT_EQ(acc.entity_count, 10u);
  EXPECT_GE(acc.all, 0.0);
  EXPECT_LE(acc.all, 1.0);
}
