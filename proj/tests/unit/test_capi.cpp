#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "readtwice/readtwice.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const json kTiny = {{"hidden_dim", 16}, {"num_heads", 2},    {"ffn_dim", 32},
                    {"layers_first", 1}, {"layers_second", 1}, {"batch_documents", 4}};

struct Context {
  rt_context* ctx = nullptr;
  std::vector<std::string> log;
  rt_status status = RT_OK;

  explicit Context(json overrides) {
    status = rt_context_create(nullptr, overrides.dump().c_str(), &ctx);
    if (ctx) {
      rt_context_set_log(
          ctx, [](const char* line, void* user) { static_cast<Context*>(user)->log.push_back(line); },
          this);
    }
  }
  ~Context() { rt_context_destroy(ctx); }
  Context(const Context&) = delete;
  Context& operator=(const Context&) = delete;

  rt_status run(const char* command) { return rt_run(ctx, command); }
  json result() const { return json::parse(rt_context_result(ctx)); }
  bool logged(const std::string& needle) const {
    for (const auto& l : log) {
      if (l.find(needle) != std::string::npos) return true;
    }
    return false;
  }
};

json with(json base, const json& extra) {
  base.update(extra);
  return base;
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::vector<json> out;
  std::ifstream in(path);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

std::vector<json> step_records(const fs::path& path) {
  std::vector<json> out;
  for (auto& r : read_jsonl(path)) {
    if (r.at("event") == "step") out.push_back(r);
  }
  return out;
}

std::string trim(std::string s) {
  while (!s.empty() && s.front() == ' ') s.erase(s.begin());
  return s;
}

class CapiTest : public ::testing::Test {
 protected:
  static fs::path root;
  static fs::path probe_dir;
  static fs::path pretrained;

  static void SetUpTestSuite() {
    root = fs::temp_directory_path() / "readtwice_capi";
    fs::remove_all(root);
    fs::create_directories(root);
    probe_dir = root / "probe";
    Context gen(with(kTiny, {{"profile", "probe"}, {"output_dir", probe_dir.string()},
                             {"probe_docs", 24}, {"probe_heldout_docs", 8}}));
    ASSERT_EQ(gen.status, RT_OK) << rt_last_error();
    ASSERT_EQ(gen.run("gen-probe"), RT_OK) << rt_last_error();
    write_qa(probe_dir / "qa.jsonl", 0, 16);
    write_qa(probe_dir / "dev_qa.jsonl", 16, 24);

    Context pre(corpus_config(root / "pretrained", {{"steps", 3}}));
    ASSERT_EQ(pre.run("pretrain"), RT_OK) << rt_last_error();
    pretrained = root / "pretrained" / "checkpoint.rtw";
  }

  static void write_qa(const fs::path& path, std::size_t from, std::size_t to) {
    std::ofstream out(path);
    for (const json& p : read_jsonl(probe_dir / "manifest.jsonl")) {
      const std::string doc = p.at("doc_id");
      const std::size_t index = std::stoul(doc.substr(doc.find('-') + 1));
      if (index < from || index >= to) continue;
      const std::size_t pos = p.at("position");
      out << json{{"question_id", "q" + std::to_string(index)},
                  {"question", trim(p.at("entity_id").get<std::string>()) + " is"},
                  {"doc_id", doc},
                  {"answers", {trim(p.at("answer"))}},
                  {"spans", {{{"start", pos}, {"end", pos + 1}}}}}
                 .dump()
          << "\n";
    }
  }

  static json corpus_config(const fs::path& out, const json& extra) {
    return with(with(kTiny, {{"corpus", (probe_dir / "corpus.jsonl").string()},
                             {"heldout", (probe_dir / "heldout.jsonl").string()},
                             {"vocab", (probe_dir / "vocab.txt").string()},
                             {"output_dir", out.string()},
                             {"eval_every", 2}}),
                extra);
  }

  static json qa_config(const fs::path& out, const std::string& profile, const json& extra) {
    return with(with(kTiny, {{"profile", profile},
                             {"corpus", (probe_dir / "corpus.jsonl").string()},
                             {"vocab", (probe_dir / "vocab.txt").string()},
                             {"qa", (probe_dir / "qa.jsonl").string()},
                             {"dev_qa", (probe_dir / "dev_qa.jsonl").string()},
                             {"checkpoint", pretrained.string()},
                             {"output_dir", out.string()},
                             {"steps", 2},
                             {"eval_every", 1}}),
                extra);
  }
};

fs::path CapiTest::root;
fs::path CapiTest::probe_dir;
fs::path CapiTest::pretrained;

}  // namespace

TEST(Capi, VersionStatusAndKeys) {
  EXPECT_STRNE(rt_version(), "");
  EXPECT_STREQ(rt_status_string(RT_OK), "ok");
  EXPECT_STRNE(rt_status_string(RT_ERR_IO), rt_status_string(RT_ERR_PARSE));
  const std::string keys = rt_config_keys();
  EXPECT_NE(keys.find("memory_mode\n"), std::string::npos);
  EXPECT_NE(keys.find("top_k"), std::string::npos);
}

TEST(Capi, UnknownKeyFailsBeforeWork) {
  rt_context* ctx = nullptr;
  EXPECT_EQ(rt_context_create(nullptr, R"({"no_such_key": 1})", &ctx), RT_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(ctx, nullptr);
  EXPECT_NE(std::string(rt_last_error()).find("no_such_key"), std::string::npos);
  EXPECT_EQ(rt_context_create(nullptr, "{oops", &ctx), RT_ERR_PARSE);
  EXPECT_EQ(rt_context_create(nullptr, nullptr, nullptr), RT_ERR_INVALID_ARGUMENT);
}

TEST(Capi, UnknownCommandRejected) {
  Context c(json::object());
  ASSERT_EQ(c.status, RT_OK);
  EXPECT_EQ(c.run("dance"), RT_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(rt_run(nullptr, "pretrain"), RT_ERR_INVALID_ARGUMENT);
  EXPECT_STREQ(rt_context_result(c.ctx), "");
  auto cfg = json::parse(rt_context_config(c.ctx));
  EXPECT_EQ(cfg.at("profile"), "pretrain");
}

TEST_F(CapiTest, GenProbeWritesAllArtifacts) {
  for (const char* f : {"vocab.txt", "corpus.jsonl", "heldout.jsonl", "manifest.jsonl",
                        "heldout_manifest.jsonl", "probe_summary.json", "config.json"}) {
    EXPECT_TRUE(fs::exists(probe_dir / f)) << f;
  }
  EXPECT_EQ(read_jsonl(probe_dir / "manifest.jsonl").size(), 24u);
  EXPECT_EQ(read_jsonl(probe_dir / "heldout_manifest.jsonl").size(), 8u);
}

TEST_F(CapiTest, PretrainResumeMatchesStraightRun) {
  Context straight(corpus_config(root / "straight", {{"steps", 4}}));
  ASSERT_EQ(straight.run("pretrain"), RT_OK) << rt_last_error();
  Context half(corpus_config(root / "half", {{"steps", 2}, {"schedule_steps", 4}}));
  ASSERT_EQ(half.run("pretrain"), RT_OK) << rt_last_error();
  Context rest(corpus_config(root / "rest", {{"steps", 4},
                                             {"checkpoint", (root / "half" / "checkpoint.rtw").string()}}));
  ASSERT_EQ(rest.run("pretrain"), RT_OK) << rt_last_error();
  EXPECT_TRUE(rest.logged("resumed"));
  EXPECT_EQ(rest.result().at("steps"), 4);

  auto a = step_records(root / "straight" / "metrics.jsonl");
  auto b = step_records(root / "rest" / "metrics.jsonl");
  ASSERT_EQ(a.size(), 4u);
  ASSERT_EQ(b.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(a[i + 2].at("step"), b[i].at("step"));
    EXPECT_EQ(a[i + 2].at("loss").get<double>(), b[i].at("loss").get<double>());
    EXPECT_EQ(a[i + 2].at("grad_norm").get<double>(), b[i].at("grad_norm").get<double>());
  }
  EXPECT_EQ(straight.result().at("heldout"), rest.result().at("heldout"));
}

TEST_F(CapiTest, OffAndSingleSegmentAreTheSameRun) {
  Context off(corpus_config(root / "off", {{"steps", 2}, {"memory_mode", "off"}}));
  Context ss(corpus_config(root / "ss", {{"steps", 2}, {"memory_mode", "SS"}}));
  ASSERT_EQ(off.run("pretrain"), RT_OK) << rt_last_error();
  ASSERT_EQ(ss.run("pretrain"), RT_OK) << rt_last_error();
  EXPECT_EQ(step_records(root / "off" / "metrics.jsonl"), step_records(root / "ss" / "metrics.jsonl"));
  EXPECT_TRUE(off.logged("single_segment=1") || off.logged("single_segment=true"));
}

TEST_F(CapiTest, FinetuneWithoutCheckpointFails) {
  Context c(qa_config(root / "no_ckpt", "trivia", {{"checkpoint", (root / "missing.rtw").string()}}));
  EXPECT_EQ(c.run("finetune"), RT_ERR_IO);
  EXPECT_NE(std::string(rt_last_error()).find("checkpoint"), std::string::npos);
  Context none(qa_config(root / "no_ckpt2", "trivia", {{"checkpoint", ""}}));
  EXPECT_EQ(none.run("finetune"), RT_ERR_INVALID_ARGUMENT);
}

TEST_F(CapiTest, ZeroStepFinetuneThenPredictAndEvaluate) {
  const fs::path dir = root / "ft0";
  Context ft(qa_config(dir, "trivia", {{"steps", 0}}));
  ASSERT_EQ(ft.run("finetune"), RT_OK) << rt_last_error();
  ASSERT_TRUE(fs::exists(dir / "finetuned.rtw"));
  EXPECT_EQ(ft.result().at("train").at("examples"), 16);

  Context pred(qa_config(dir, "trivia", {{"checkpoint", (dir / "finetuned.rtw").string()},
                                        {"qa", (probe_dir / "dev_qa.jsonl").string()}}));
  ASSERT_EQ(pred.run("predict"), RT_OK) << rt_last_error();
  EXPECT_EQ(pred.result().at("count"), 8);
  const auto preds = read_jsonl(dir / "predictions.jsonl");
  ASSERT_EQ(preds.size(), 8u);

  Context ev(qa_config(dir, "trivia", {{"qa", (probe_dir / "dev_qa.jsonl").string()},
                                      {"predictions", (dir / "predictions.jsonl").string()}}));
  ASSERT_EQ(ev.run("evaluate"), RT_OK) << rt_last_error();
  const json report = ev.result();
  EXPECT_GE(report.at("headline").get<double>(), 0.0);
  EXPECT_LE(report.at("headline").get<double>(), 1.0);
  EXPECT_TRUE(fs::exists(dir / "report.json"));

  Context wrong(qa_config(dir, "trivia", {{"qa", (probe_dir / "qa.jsonl").string()},
                                         {"predictions", (dir / "predictions.jsonl").string()}}));
  EXPECT_NE(wrong.run("evaluate"), RT_OK);
}

TEST_F(CapiTest, LearningRateSweepRunsEveryRate) {
  const fs::path dir = root / "sweep";
  Context ft(qa_config(dir, "trivia", {{"lr_sweep", {1e-3, 2e-3, 3e-3}}}));
  ASSERT_EQ(ft.run("finetune"), RT_OK) << rt_last_error();
  EXPECT_EQ(ft.result().at("runs"), 3);
  std::set<double> rates;
  for (const auto& r : read_jsonl(dir / "finetune_log.jsonl")) rates.insert(r.at("learning_rate").get<double>());
  EXPECT_EQ(rates, (std::set<double>{1e-3, 2e-3, 3e-3}));
  const double best = ft.result().at("best_learning_rate");
  EXPECT_TRUE(rates.count(best));
}

TEST_F(CapiTest, NarrativeProfileAttendsToTopHundred) {
  Context ft(qa_config(root / "narrative", "narrative", {{"steps", 1}}));
  ASSERT_EQ(ft.run("finetune"), RT_OK) << rt_last_error();
  EXPECT_EQ(ft.result().at("top_k"), 100);
  EXPECT_TRUE(ft.logged("top_k=100"));
}

TEST_F(CapiTest, ProbeEvaluateUsesHeldOutSplit) {
  const fs::path dir = root / "probe_run";
  json base = with(kTiny, {{"profile", "probe"}, {"output_dir", dir.string()}, {"steps", 2},
                           {"probe_docs", 24}, {"probe_heldout_docs", 8}});
  Context pre(base);
  ASSERT_EQ(pre.run("pretrain"), RT_OK) << rt_last_error();
  const json held = pre.result().at("heldout");
  EXPECT_EQ(held.at("probe_positions"), 8);
  EXPECT_NEAR(held.at("chance_accuracy").get<double>(), 0.1, 1e-12);

  Context ev(with(base, {{"checkpoint", (dir / "checkpoint.rtw").string()}}));
  ASSERT_EQ(ev.run("evaluate"), RT_OK) << rt_last_error();
  EXPECT_EQ(ev.result().at("documents"), 8);
  EXPECT_EQ(ev.result().at("probe_accuracy"), held.at("probe_accuracy"));
}

TEST_F(CapiTest, CheckpointShapeMismatchIsDimensionError) {
  Context ft(qa_config(root / "mismatch", "trivia", {{"hidden_dim", 8}}));
  EXPECT_EQ(ft.run("finetune"), RT_ERR_DIMENSION);
}
