#include <gtest/gtest.h>

#include <algorithm>

#include "lfp/pipeline.hpp"
#include "test_support.hpp"

using namespace lfp;
using namespace lfp::pipeline;
using corpus::Stage;
using lfp::testing::TempDir;

namespace {

PipelineConfig base_config(const std::string& llm = "mock:echo", const std::string& mt = "mock:reverse-words") {
  auto j = json::parse(R"({
    "asr_system_ids": ["asr1", "asr2"],
    "backends": [
      {"id": "asr1", "kind": "asr", "endpoint": "mock:hash", "max_retries": 0},
      {"id": "asr2", "kind": "asr", "endpoint": "mock:hash", "max_retries": 0},
      {"id": "vad", "kind": "vad", "endpoint": "mock:sine"},
      {"id": "llm", "kind": "llm", "endpoint": "", "max_retries": 0},
      {"id": "mt", "kind": "mt", "endpoint": "", "max_retries": 0}
    ]
  })");
  j["backends"][3]["endpoint"] = llm;
  j["backends"][4]["endpoint"] = mt;
  auto c = config_from_json(j);
  c.validate();
  return c;
}

const char* kManifest =
    R"({"talk_id": "t1", "audio_path": "a/t1.wav", "duration_s": 70, "source_lang": "en", "target_langs": ["de"]}
{"talk_id": "t2", "audio_path": "a/t2.wav", "duration_s": 45, "source_lang": "en", "target_langs": ["de", "zh"]}
)";

const StageResult* find_stage(const RunReport& r, Stage stage, const std::string& talk,
                              const std::string& lang = {}) {
  for (const auto& s : r.stages) {
    if (s.stage != stage || s.talk_id != talk) continue;
    if (!lang.empty() && s.detail.value("lang", "") != lang) continue;
    return &s;
  }
  return nullptr;
}

std::string reverse_words(const std::string& s) {
  auto w = text::split_ws(s);
  std::reverse(w.begin(), w.end());
  return text::join(w, " ");
}

// Chunk texts of one ASR system over a stored plan, from a fresh client.
std::string system_document(const corpus::ArtifactStore& store, const std::string& run_id,
                            const corpus::TalkRef& talk, const std::string& system) {
  const auto plan = plan_from_jsonl(store.get({run_id, Stage::segments, talk.talk_id, "plan.jsonl"}));
  backends::BackendSpec spec;
  spec.id = system;
  spec.kind = backends::Kind::asr;
  spec.endpoint = "mock:hash";
  backends::Client client(spec);
  std::vector<std::pair<std::size_t, std::string>> parts;
  for (std::size_t i = 0; i < plan.chunks.size(); ++i) {
    parts.emplace_back(i, client.transcribe(talk.audio_path, plan.chunks[i].start_s, plan.chunks[i].end_s,
                                            talk.source_lang)
                              .text);
  }
  return document::assemble_talk(parts, talk.talk_id).text;
}

std::string final_of(const RunReport& r, const corpus::ArtifactStore& store, const std::string& talk,
                     const std::string& lang) {
  for (const auto& o : r.outputs) {
    if (o.talk_id == talk && o.lang == lang) return store.get(o.key);
  }
  ADD_FAILURE() << "no output for " << talk << "/" << lang;
  return {};
}

}  // namespace

TEST(PlanJsonl, RoundTrip) {
  segmentation::ChunkPlan plan;
  plan.talk_id = "t1";
  plan.policy = segmentation::Policy::if_qa60;
  plan.max_chunk_s = 60;
  plan.truncated_at_s = 1602;
  plan.chunks = {{"t1", 0, 60, 0.5}, {"t1", 60, 90.25, 0.75}};
  const auto back = plan_from_jsonl(plan_to_jsonl(plan));
  EXPECT_EQ(back.talk_id, "t1");
  EXPECT_EQ(back.policy, plan.policy);
  EXPECT_EQ(back.truncated_at_s, plan.truncated_at_s);
  ASSERT_EQ(back.chunks.size(), 2u);
  EXPECT_DOUBLE_EQ(back.chunks[1].end_s, 90.25);
  EXPECT_EQ(plan_to_jsonl(back), plan_to_jsonl(plan));
  const auto lines = plan_to_jsonl(plan);
  EXPECT_EQ(std::count(lines.begin(), lines.end(), '\n'), 2);
}

TEST(RecordsJsonl, RoundTripWithNulls) {
  std::vector<document::SentenceRecord> recs(2);
  recs[0] = {"t1", 0, "Hello \"there\".", std::string("Hallo."), std::nullopt, "de"};
  recs[1] = {"t1", 1, "Zweiter\nSatz", std::nullopt, std::string("x"), "de"};
  const auto text = records_to_jsonl(recs);
  EXPECT_NE(text.find("\"mt\":null"), std::string::npos);
  const auto back = records_from_jsonl(text);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].source, recs[0].source);
  EXPECT_EQ(back[0].mt, recs[0].mt);
  EXPECT_FALSE(back[0].ape.has_value());
  EXPECT_EQ(back[1].source, "Zweiter\nSatz");
  EXPECT_FALSE(back[1].mt.has_value());
  EXPECT_THROW(records_from_jsonl("{bad\n"), corpus::StorageError);
}

TEST(Report, JsonRoundTripAndExitCodes) {
  RunReport r;
  r.run_id = "run-x";
  r.stages.push_back({Stage::asr, "t1", Status::ok, "", 12.5, {{"chunks", 3}}});
  r.stages.push_back({Stage::ape, "t2", Status::fallback, "run-x/ape/t2/de.fallback.txt", std::nullopt, {}});
  r.outputs.push_back({"t1", "de", {"run-x", Stage::ape, "t1", "de.txt"}});
  r.warnings = {"w"};
  const auto back = RunReport::from_json(r.to_json());
  EXPECT_EQ(back.to_json(), r.to_json());
  EXPECT_FALSE(r.to_json()["stages"][0].contains("timing_ms"));
  EXPECT_TRUE(r.to_json(true)["stages"][0].contains("timing_ms"));
  EXPECT_EQ(r.exit_code(), 2);
  EXPECT_EQ(r.summary().fallback, 1u);
  r.stages.push_back({Stage::mt, "t3", Status::failed, "", std::nullopt, {}});
  EXPECT_EQ(r.exit_code(), 1);
  r.stages = {{Stage::ape, "t1", Status::skipped, "", std::nullopt, {}}};
  EXPECT_EQ(r.exit_code(), 0);
}

TEST(RunOffline, FinalTextFollowsTheCascade) {
  TempDir dir;
  const auto cfg = base_config();
  const auto manifest = corpus::parse_manifest(kManifest);
  auto be = BackendSet::from_config(cfg);
  const auto report = run_offline(manifest, cfg, be, {dir.path()});
  EXPECT_EQ(report.exit_code(), 0);
  EXPECT_TRUE(std::filesystem::exists(report_path(dir.path(), report.run_id)));
  EXPECT_EQ(report.outputs.size(), 3u);

  // Echo fusion returns the last system; reverse-words MT; echo APE keeps MT.
  corpus::ArtifactStore store(dir.path());
  for (const auto& talk : manifest.talks) {
    const auto doc = system_document(store, report.run_id, talk, "asr2");
    std::string want;
    for (const auto& s : document::split_sentence_texts(doc)) want += reverse_words(s) + "\n";
    EXPECT_EQ(final_of(report, store, talk.talk_id, "de"), want);
  }
  const auto* zh = find_stage(report, Stage::ape, "t2", "zh");
  ASSERT_NE(zh, nullptr);
  EXPECT_EQ(zh->status, Status::skipped);
}

TEST(RunOffline, RerunIsServedFromArtifacts) {
  TempDir dir;
  const auto cfg = base_config();
  const auto manifest = corpus::parse_manifest(kManifest);
  auto be1 = BackendSet::from_config(cfg);
  const auto first = run_offline(manifest, cfg, be1, {dir.path()});
  EXPECT_GT(be1.total_calls(), 0u);
  const auto report1 = lfp::testing::read_file(report_path(dir.path(), first.run_id));

  auto be2 = BackendSet::from_config(cfg);
  const auto second = run_offline(manifest, cfg, be2, {dir.path()});
  EXPECT_EQ(be2.total_calls(), 0u);
  EXPECT_EQ(lfp::testing::read_file(report_path(dir.path(), second.run_id)), report1);
}

TEST(RunOffline, LlmOutageFallsBackToTheFirstSystem) {
  TempDir dir;
  const auto cfg = base_config("mock:fail", "mock:identity");
  const auto manifest = corpus::parse_manifest(kManifest);
  auto be = BackendSet::from_config(cfg);
  const auto report = run_offline(manifest, cfg, be, {dir.path()});
  EXPECT_EQ(report.exit_code(), 2);
  EXPECT_EQ(report.summary().fallback, 2u);
  EXPECT_FALSE(report.warnings.empty());

  corpus::ArtifactStore store(dir.path());
  for (const auto& talk : manifest.talks) {
    EXPECT_EQ(report.talk_status(talk.talk_id), Status::fallback);
    const auto doc = system_document(store, report.run_id, talk, "asr1");
    EXPECT_EQ(text::normalize_ws(final_of(report, store, talk.talk_id, "de")), text::normalize_ws(doc));
  }
  for (const auto& o : report.outputs) {
    EXPECT_TRUE(store.contains(o.key));
    EXPECT_NE(o.key.variant.find("degraded"), std::string::npos);
  }
}

TEST(RunOffline, InterruptedRunNeedsResume) {
  TempDir dir;
  const auto cfg = base_config();
  const auto manifest = corpus::parse_manifest(kManifest);
  auto be = BackendSet::from_config(cfg);
  RunOptions stop{dir.path()};
  stop.stop_after = Stage::asr;
  const auto partial = run_offline(manifest, cfg, be, stop);
  EXPECT_FALSE(partial.complete);
  EXPECT_FALSE(std::filesystem::exists(report_path(dir.path(), partial.run_id)));
  EXPECT_EQ(find_stage(partial, Stage::fusion, "t1"), nullptr);

  EXPECT_THROW(run_offline(manifest, cfg, be, {dir.path()}), IncompleteRunError);

  auto be2 = BackendSet::from_config(cfg);
  RunOptions resume{dir.path()};
  resume.resume = true;
  const auto done = run_offline(manifest, cfg, be2, resume);
  EXPECT_TRUE(done.complete);
  EXPECT_TRUE(std::filesystem::exists(report_path(dir.path(), done.run_id)));
  const auto asr_calls = be2.client("asr1").calls() + be2.client("asr2").calls();
  EXPECT_EQ(asr_calls, 0u);
  EXPECT_GT(be2.client("llm").calls(), 0u);
}

TEST(RunOffline, MissingBackendIsAConfigError) {
  TempDir dir;
  auto cfg = base_config();
  BackendSet be;
  EXPECT_THROW(run_offline(corpus::parse_manifest(kManifest), cfg, be, {dir.path()}), ConfigError);
}

TEST(RunIf, AsrChunksRespectTheCap) {
  TempDir dir;
  const auto cfg = base_config();
  const auto manifest = corpus::parse_manifest(kManifest);
  auto be = BackendSet::from_config(cfg);
  const auto report = run_if(manifest, cfg, be, IfTask::asr, std::nullopt, {dir.path()});
  EXPECT_EQ(report.exit_code(), 0);
  corpus::ArtifactStore store(dir.path());
  for (const auto& talk : manifest.talks) {
    const auto plan = plan_from_jsonl(store.get({report.run_id, Stage::segments, talk.talk_id, "plan.jsonl"}));
    ASSERT_FALSE(plan.chunks.empty());
    for (const auto& c : plan.chunks) EXPECT_LE(c.end_s - c.start_s, 20.0 + 1e-9);
  }
  for (const auto& o : report.outputs) EXPECT_EQ(o.lang, "en");
}

TEST(RunIf, ChineseTranslationSkipsPostEditing) {
  TempDir dir;
  const auto cfg = base_config();
  const auto manifest = corpus::parse_manifest(
      R"({"talk_id": "z", "audio_path": "z.wav", "duration_s": 40, "source_lang": "en", "target_langs": ["zh"]})");
  auto be = BackendSet::from_config(cfg);
  const auto report = run_if(manifest, cfg, be, IfTask::st, std::nullopt, {dir.path()});
  const auto* ape = find_stage(report, Stage::ape, "z", "zh");
  ASSERT_NE(ape, nullptr);
  EXPECT_EQ(ape->status, Status::skipped);
  EXPECT_EQ(be.client("llm").calls(), 0u);
  EXPECT_EQ(report.exit_code(), 0);
}

TEST(RunIf, SummaryTruncatesLongTalks) {
  TempDir dir;
  const auto cfg = base_config();
  const auto manifest = corpus::parse_manifest(
      R"({"talk_id": "long", "audio_path": "l.wav", "duration_s": 1800, "source_lang": "en", "target_langs": ["de"]})");
  auto be = BackendSet::from_config(cfg);
  const auto report = run_if(manifest, cfg, be, IfTask::ssum, std::nullopt, {dir.path()});
  EXPECT_EQ(report.exit_code(), 0);
  corpus::ArtifactStore store(dir.path());
  const auto plan = plan_from_jsonl(store.get({report.run_id, Stage::segments, "long", "plan.jsonl"}));
  ASSERT_TRUE(plan.truncated_at_s.has_value());
  EXPECT_DOUBLE_EQ(*plan.truncated_at_s, 1602.0);
  EXPECT_DOUBLE_EQ(plan.chunks.back().end_s, 1602.0);
  EXPECT_EQ(be.client("asr1").calls(), 1u);
  EXPECT_FALSE(final_of(report, store, "long", "de").empty());
}

TEST(RunIf, QuestionAnsweringNeedsAQuestion) {
  TempDir dir;
  const auto cfg = base_config();
  auto be = BackendSet::from_config(cfg);
  EXPECT_THROW(run_if(corpus::parse_manifest(kManifest), cfg, be, IfTask::sqa, std::nullopt, {dir.path()}),
               std::invalid_argument);
}

TEST(Grid, SingleSizeGivesOneRow) {
  auto cfg = base_config();
  cfg.backends[0].endpoint = "mock:fragment";
  const auto manifest = corpus::parse_manifest(
      R"({"talk_id": "g", "audio_path": "g.wav", "duration_s": 60, "source_lang": "en", "target_langs": ["de"]})");
  auto be = BackendSet::from_config(cfg);
  const auto res = grid_search_chunks(manifest, cfg, be, {20.0}, Metric::wer,
                                      {{"g", backends::fragment_reference(60)}});
  ASSERT_EQ(res.table.rows.size(), 1u);
  EXPECT_EQ(res.table.rows[0].label, "20");
  ASSERT_EQ(res.table.columns.size(), 1u);
  EXPECT_GT(res.table.rows[0].values[0], 0.0);
}

TEST(Grid, PerfectSystemScoresZero) {
  auto cfg = base_config();
  cfg.backends[2].endpoint = "mock:constant?p=1";
  cfg.backends[0].endpoint = "mock:fragment";
  const auto manifest = corpus::parse_manifest(
      R"({"talk_id": "g", "audio_path": "g.wav", "duration_s": 10, "source_lang": "en", "target_langs": ["de"]})");
  auto be = BackendSet::from_config(cfg);
  // One chunk: only the first word is replaced.
  const auto ref = backends::fragment_reference(10);
  auto words = text::split_ws(ref);
  words[0] = "uh";
  const auto res = grid_search_chunks(manifest, cfg, be, {25.0}, Metric::wer, {{"g", text::join(words, " ")}});
  EXPECT_DOUBLE_EQ(res.table.rows[0].values[0], 0.0);
}

TEST(Grid, TalksWithoutReferencesAreExcluded) {
  auto cfg = base_config();
  const auto manifest = corpus::parse_manifest(kManifest);
  auto be = BackendSet::from_config(cfg);
  const auto res = grid_search_chunks(manifest, cfg, be, {10, 20}, Metric::chrf2, {{"t1", "some words"}});
  EXPECT_EQ(res.table.columns.size(), 1u);
  EXPECT_EQ(res.warnings.size(), 1u);
  EXPECT_THROW(grid_search_chunks(manifest, cfg, be, {10}, Metric::wer, {}), EvaluationError);
  EXPECT_THROW(grid_search_chunks(manifest, cfg, be, {}, Metric::wer, {{"t1", "x"}}), std::invalid_argument);
}

TEST(Evaluate, MicroAveragedWer) {
  const References refs = {{"a", "one two"}, {"b", "one two three four five six"}, {"c", "unused"}};
  const auto res = evaluate_outputs({{"a", "one too"}, {"b", "one two three four five"}, {"d", "x"}}, refs,
                                    {Metric::wer, Metric::chrf2});
  ASSERT_TRUE(res.corpus_wer.has_value());
  EXPECT_DOUBLE_EQ(*res.corpus_wer, 0.25);
  EXPECT_EQ(res.excluded, (std::vector<std::string>{"d"}));
  EXPECT_EQ(res.warnings.size(), 2u);
  ASSERT_EQ(res.talks.size(), 2u);
  EXPECT_TRUE(res.talks[0].chrf2.has_value());

  const auto rows = res.to_jsonl();
  EXPECT_EQ(std::count(rows.begin(), rows.end(), '\n'), 6);
  const auto corpus_row = json::parse(rows.substr(rows.rfind("{\"detail\"", rows.size() - 2)));
  EXPECT_EQ(corpus_row["talk_id"], "corpus");
}

TEST(Evaluate, NothingScorableIsAnError) {
  try {
    evaluate_outputs({{"x", "y"}}, {}, {Metric::wer});
    FAIL();
  } catch (const EvaluationError& e) {
    EXPECT_EQ(e.missing(), (std::vector<std::string>{"x"}));
  }
}
