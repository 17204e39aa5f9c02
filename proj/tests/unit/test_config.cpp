#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "app/run_config.hpp"
#include "common/error.hpp"

using namespace readtwice;
using nlohmann::json;

TEST(Config, UnknownKeyRejected) {
  EXPECT_THROW(app::resolve_config(json::object(), {{"no_such_key", 1}}), Error);
  EXPECT_THROW(app::resolve_config({{"hidden_dims", 64}}), Error);
}

TEST(Config, IllTypedValueRejected) {
  EXPECT_THROW(app::resolve_config({{"steps", "many"}}), Error);
  EXPECT_THROW(app::resolve_config({{"num_heads", 5}}), Error);
  EXPECT_THROW(app::resolve_config({{"profile", "imaginary"}}), Error);
}

TEST(Config, OverridesWinOverFile) {
  auto c = app::resolve_config({{"steps", 10}, {"learning_rate", 0.5}}, {{"steps", 20}});
  EXPECT_EQ(c.steps, 20u);
  EXPECT_EQ(c.adam.learning_rate, 0.5);
}

TEST(Config, ProfilesSetTaskDefaults) {
  auto narrative = app::resolve_config({{"profile", "narrative"}});
  EXPECT_EQ(narrative.model.memory.top_k, 100u);
  EXPECT_TRUE(narrative.rouge_oracle);
  EXPECT_EQ(narrative.dev_metric(), qa::DevMetric::kRougeL);
  EXPECT_EQ(narrative.segmentation.overlap, 128u);

  auto hotpot = app::resolve_config({{"profile", "hotpot"}});
  EXPECT_TRUE(hotpot.option_head);
  EXPECT_EQ(hotpot.model.memory.top_k, 0u);
  EXPECT_EQ(hotpot.dev_metric(), qa::DevMetric::kF1);

  auto pre = app::resolve_config(json::object());
  EXPECT_EQ(pre.segmentation.window, 512u);
  EXPECT_EQ(pre.segmentation.overlap, 0u);
  EXPECT_EQ(pre.segmentation.max_segments, 128u);
  EXPECT_EQ(pre.model.memory.clip_distance, 10);

  auto probe = app::resolve_config({{"profile", "probe"}});
  EXPECT_EQ(probe.segmentation.window, 16u);
  EXPECT_EQ(probe.model.encoder.max_segment_len, 17u);
  EXPECT_LE(probe.steps, 2000u);
}

TEST(Config, MemoryModeAliases) {
  auto off = app::resolve_config({{"memory_mode", "off"}});
  auto ss = app::resolve_config({{"memory_mode", "SS"}});
  EXPECT_EQ(off.model.memory.mode, model::MemoryMode::kEntity);
  EXPECT_TRUE(off.model.memory.single_segment);
  EXPECT_EQ(off.to_json().at("single_segment"), ss.to_json().at("single_segment"));
  EXPECT_EQ(off.model.memory.mode, ss.model.memory.mode);

  auto none = app::resolve_config({{"memory_mode", "none"}});
  EXPECT_EQ(none.model.memory.mode, model::MemoryMode::kOff);
  EXPECT_EQ(app::resolve_config({{"memory_mode", "CLS"}}).model.memory.mode, model::MemoryMode::kCls);
  EXPECT_EQ(app::resolve_config({{"memory_mode", "STS"}}).model.memory.mode, model::MemoryMode::kSts);
  EXPECT_THROW(app::resolve_config({{"memory_mode", "everything"}}), Error);
}

TEST(Config, LearningRateSweepAndFinetuneConfig) {
  auto c = app::resolve_config({{"profile", "trivia"}, {"lr_sweep", {1e-5, 3e-5, 5e-5}},
                                {"early_stopping_patience", 2}});
  EXPECT_EQ(c.lr_sweep, (std::vector<double>{1e-5, 3e-5, 5e-5}));
  auto f = c.finetune_config();
  EXPECT_EQ(f.patience, 2u);
  EXPECT_EQ(f.dev_metric, qa::DevMetric::kF1);
}

TEST(Config, ToJsonRoundTripsAndListsEveryKey) {
  auto c = app::resolve_config({{"profile", "narrative"}, {"hidden_dim", 32}, {"num_heads", 2}});
  json j = c.to_json();
  auto keys = app::config_keys();
  for (const auto& k : keys) EXPECT_TRUE(j.contains(k)) << k;
  auto again = app::resolve_config(j);
  EXPECT_EQ(again.to_json(), j);
}

TEST(Config, LoadFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "readtwice_config.json";
  {
    std::ofstream out(path);
    out << R"({"profile": "trivia", "steps": 7})";
  }
  auto c = app::load_config(path.string(), {{"seed", 3}});
  EXPECT_EQ(c.steps, 7u);
  EXPECT_EQ(c.seed, 3u);
  EXPECT_THROW(app::load_config("/nonexistent/config.json"), Error);
  {
    std::ofstream out(path);
    out << "{broken";
  }
  EXPECT_THROW(app::load_config(path.string()), Error);
}
