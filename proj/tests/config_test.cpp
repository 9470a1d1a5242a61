#include <gtest/gtest.h>

#include "lfp/config.hpp"
#include "test_support.hpp"

using namespace lfp;
using namespace lfp::pipeline;
using lfp::testing::TempDir;
using lfp::testing::write_file;

namespace {

json minimal() {
  return json::parse(R"({
    "asr_system_ids": ["w2"],
    "backends": [{"id": "w2", "kind": "asr", "endpoint": "mock:hash"},
                 {"id": "llm", "kind": "llm", "endpoint": "mock:echo"}]
  })");
}

}  // namespace

TEST(Config, Defaults) {
  const PipelineConfig c;
  EXPECT_DOUBLE_EQ(c.chunk_size_s.offline, 25.0);
  EXPECT_DOUBLE_EQ(c.chunk_size_s.if_asr, 20.0);
  EXPECT_DOUBLE_EQ(c.chunk_size_s.if_st, 25.0);
  EXPECT_DOUBLE_EQ(c.chunk_size_s.qa, 60.0);
  EXPECT_DOUBLE_EQ(c.truncation_cap_s, 1602.0);
  EXPECT_EQ(c.context_sizes.ape, 0u);
  EXPECT_EQ(c.context_sizes.if_asr, 5u);
  EXPECT_EQ(c.context_sizes.if_st, 15u);
  EXPECT_FALSE(c.context_sizes.edit_zh);
  EXPECT_EQ(c.top_k, 500000u);
  EXPECT_EQ(c.ape_sample_n, 100000u);
  EXPECT_DOUBLE_EQ(c.unanswerable_fraction, 0.05);
  EXPECT_EQ(c.grid_sizes, (std::vector<double>{5, 10, 15, 20, 25}));
}

TEST(Config, JsonRoundTrip) {
  auto c = config_from_json(minimal());
  c.seed = 17;
  c.context_sizes.edit_zh = true;
  const auto back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, HashTracksContent) {
  const auto a = config_from_json(minimal());
  auto b = a;
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 64u);
  b.chunk_size_s.offline = 20.0;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, UnknownKeysAreRejected) {
  auto j = minimal();
  j["chunk_sise_s"] = 3;
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = minimal();
  j["chunk_size_s"] = {{"offline", 10}, {"offlien", 3}};
  try {
    config_from_json(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("chunk_size_s.offlien"), std::string::npos);
  }
}

TEST(Config, WrongTypeNamesTheField) {
  auto j = minimal();
  j["top_k"] = "many";
  try {
    config_from_json(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("top_k"), std::string::npos);
  }
}

TEST(Config, ValidateRejectsBadValues) {
  const auto ok = config_from_json(minimal());
  EXPECT_NO_THROW(ok.validate());

  auto c = ok;
  c.chunk_size_s.offline = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ok;
  c.unanswerable_fraction = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ok;
  c.asr_system_ids = {"missing"};
  EXPECT_THROW(c.validate(), ConfigError);
  c = ok;
  c.asr_system_ids = {"llm"};
  EXPECT_THROW(c.validate(), ConfigError);
  c = ok;
  c.asr_system_ids = {"w2", "w2"};
  EXPECT_THROW(c.validate(), ConfigError);
  c = ok;
  c.backends.push_back(c.backends[0]);
  EXPECT_THROW(c.validate(), ConfigError);
  c = ok;
  c.grid_sizes.clear();
  EXPECT_THROW(c.validate(), ConfigError);
  c = ok;
  c.temperature = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(PipelineConfig{}.validate(), ConfigError);
}

TEST(Config, EnvOverridesDescendAndParse) {
  const auto j = apply_env_overrides(minimal(), {{"LFP_CHUNK_SIZE_S__OFFLINE", "20"},
                                                 {"LFP_TARGET_LANG", "ja"},
                                                 {"LFP_CONTEXT_SIZES__EDIT_ZH", "true"},
                                                 {"OTHER_VAR", "1"}});
  const auto c = config_from_json(j);
  EXPECT_DOUBLE_EQ(c.chunk_size_s.offline, 20.0);
  EXPECT_EQ(c.target_lang, "ja");
  EXPECT_TRUE(c.context_sizes.edit_zh);
  EXPECT_THROW(config_from_json(apply_env_overrides(minimal(), {{"LFP_NOPE", "1"}})), ConfigError);
  EXPECT_THROW(apply_env_overrides(minimal(), {{"LFP_TOP_K__X", "1"}, {"LFP_TOP_K", "3"}}), ConfigError);
}

TEST(Config, LoadMergesFileThenEnvironment) {
  TempDir dir;
  auto file = minimal();
  file["chunk_size_s"] = {{"offline", 15}};
  file["seed"] = 3;
  write_file(dir / "c.json", file.dump());
  const auto c = load_config(dir / "c.json", {{"LFP_SEED", "9"}});
  EXPECT_DOUBLE_EQ(c.chunk_size_s.offline, 15.0);
  EXPECT_DOUBLE_EQ(c.chunk_size_s.if_asr, 20.0);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.backends.size(), 2u);

  write_file(dir / "bad.json", "{not json");
  EXPECT_THROW(load_config(dir / "bad.json", {}), ConfigError);
  EXPECT_THROW(load_config(dir / "absent.json", {}), ConfigError);
  EXPECT_THROW(load_config(std::nullopt, {}), ConfigError);
}
