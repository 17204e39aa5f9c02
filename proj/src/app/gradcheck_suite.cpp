#include "app/gradcheck_suite.hpp"

#include <cstdio>
#include <set>
#include <sstream>

#include "corpus/vocab.hpp"
#include "pretrain/losses.hpp"
#include "pretrain/masking.hpp"
#include "qa/heads.hpp"

namespace readtwice::app {

namespace {

std::string group_of(const std::string& path) {
  const auto cut = path.rfind('/');
  return cut == std::string::npos ? path : path.substr(0, cut);
}

std::vector<ad::Var> h4_of(ad::Tape& tape, GradCheckFixture& fx,
                           const std::vector<model::SegmentInput>& batch) {
  std::vector<ad::Var> h4;
  for (const auto& s : model::read_twice(tape, fx.model, batch).segments) h4.push_back(s.h4);
  return h4;
}

}  // namespace

GradCheckFixture make_gradcheck_fixture(std::uint64_t seed) {
  model::ModelConfig cfg;
  cfg.encoder.vocab_size = corpus::kFirstByteId + 20;
  cfg.encoder.hidden_dim = 8;
  cfg.encoder.num_heads = 2;
  cfg.encoder.ffn_dim = 12;
  cfg.encoder.layers_first = 1;
  cfg.encoder.layers_second = 1;
  cfg.encoder.max_segment_len = 16;
  cfg.encoder.init_std = 0.2;
  cfg.memory.mode = model::MemoryMode::kEntity;
  cfg.memory.clip_distance = 2;
  GradCheckFixture fx{model::make_model(cfg, seed), {}};
  // Non-zero defaults so every parameter carries a non-trivial gradient.
  Rng rng(seed + 1);
  fx.model.params.for_each([&](ad::Parameter& p) {
    if (p.path.find("position_scores") != std::string::npos || p.path.ends_with("/b") ||
        p.path.ends_with("beta") || p.path.ends_with("bias")) {
      for (double& v : p.value.values()) v = rng.normal(0.0, 0.3);
    }
  });

  for (std::size_t s = 0; s < 2; ++s) {
    model::SegmentInput in;
    in.doc = 0;
    in.segment = s;
    in.token_ids.push_back(corpus::kClsId);
    for (std::size_t i = 1; i < 16; ++i) {
      in.token_ids.push_back(corpus::kFirstByteId + rng.below(20));
    }
    in.mentions.push_back({2, 4, "e1"});
    in.mentions.push_back({7, 8, s == 0 ? "e2" : "e3"});
    in.mentions.push_back({11, 13, std::nullopt});
    fx.batch.push_back(std::move(in));
  }
  return fx;
}

std::vector<LossCheck> run_gradcheck_suite(std::uint64_t seed, double tolerance) {
  GradCheckFixture fx = make_gradcheck_fixture(seed);
  Rng mask_rng(seed + 2);
  pretrain::MaskingConfig mc;
  mc.entity_rate = 0.5;
  mc.span_rate = 0.3;
  std::vector<pretrain::MaskedSegment> masks;
  std::vector<model::SegmentInput> masked = fx.batch;
  for (auto& in : masked) {
    std::vector<std::uint8_t> maskable(in.token_ids.size(), 1);
    maskable[0] = 0;
    masks.push_back(pretrain::mask_tokens(in.token_ids, in.mentions, maskable, mask_rng, mc,
                                          fx.model.config.encoder.vocab_size, {{5}}));
    in.token_ids = masks.back().input_ids;
  }

  qa::AnswerSpanSet gold;
  gold.spans = {{0, 3, 5}, {1, 3, 5}, {1, 9, 9}};
  qa::CandidateMask candidates;
  for (const auto& in : fx.batch) {
    std::vector<std::uint8_t> c(in.token_ids.size(), 1);
    c[0] = 0;
    candidates.push_back(c);
  }
  const std::vector<std::size_t> supporting{1};

  struct Case {
    std::string name;
    ad::ScalarFn fn;
  };
  std::vector<Case> cases{
      {"mlm_loss",
       [&](ad::Tape& tape) {
         auto h4 = h4_of(tape, fx, masked);
         return pretrain::mlm_loss(tape, fx.model, h4, masks).loss;
       }},
      {"coref_loss",
       [&](ad::Tape& tape) {
         auto fwd = model::read_twice(tape, fx.model, fx.batch);
         auto pairs = pretrain::coref_pairs(fwd.table.entries, 0, nullptr);
         return pretrain::coref_loss(tape, fx.model, fwd.table, pairs).loss;
       }},
      {"span_loss",
       [&](ad::Tape& tape) {
         auto h4 = h4_of(tape, fx, fx.batch);
         return qa::span_loss(tape, qa::qa_scores(tape, fx.model, h4), gold, candidates);
       }},
      {"option_loss",
       [&](ad::Tape& tape) {
         auto h4 = h4_of(tape, fx, fx.batch);
         return qa::option_loss(tape, qa::option_logits(tape, fx.model, h4), supporting,
                                qa::AnswerOption::kYes);
       }},
  };

  std::vector<LossCheck> out;
  for (const auto& c : cases) {
    LossCheck lc;
    lc.loss = c.name;
    lc.result = ad::grad_check(c.fn);
    std::set<std::string> groups;
    for (const auto& p : lc.result.params) groups.insert(group_of(p.path));
    lc.groups.assign(groups.begin(), groups.end());
    lc.passed = lc.result.max_relative_error < tolerance;
    out.push_back(std::move(lc));
  }
  return out;
}

std::string format_gradcheck_table(const std::vector<LossCheck>& checks) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %-6s %-12s %-8s %s\n", "loss", "result", "max_rel_err",
                "params", "worst");
  out << line;
  for (const auto& c : checks) {
    std::size_t elements = 0;
    for (const auto& p : c.result.params) elements += p.elements_checked;
    std::snprintf(line, sizeof line, "%-12s %-6s %-12.3e %-8zu %s[%zu]\n", c.loss.c_str(),
                  c.passed ? "PASS" : "FAIL", c.result.max_relative_error, elements,
                  c.result.worst_path.c_str(), c.result.worst_index);
    out << line;
    out << "  groups:";
    for (const auto& g : c.groups) out << ' ' << g;
    out << '\n';
  }
  return out.str();
}

}  // namespace readtwice::app
