#include "lfp/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include "lfp/document.hpp"
#include "lfp/refinement.hpp"

namespace lfp::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using corpus::ArtifactKey;
using corpus::Stage;
using segmentation::ChunkPlan;

// ---------------------------------------------------------------------------
// Backends

BackendSet BackendSet::from_config(const PipelineConfig& config) {
  BackendSet set(config.max_in_flight);
  for (const auto& spec : config.backends) set.add(spec);
  return set;
}

void BackendSet::add(backends::BackendSpec spec, std::shared_ptr<backends::Transport> transport) {
  if (!transport) transport = backends::make_transport(spec);
  const std::string id = spec.id;
  auto e = std::make_unique<Entry>();
  e->client = std::make_unique<backends::Client>(std::move(spec), std::move(transport));
  e->slots =
      std::make_unique<std::counting_semaphore<>>(static_cast<std::ptrdiff_t>(max_in_flight_));
  entries_[id] = std::move(e);
}

BackendSet::Entry& BackendSet::entry(const std::string& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw ConfigError("no backend configured with id " + id);
  return *it->second;
}

backends::Client& BackendSet::client(const std::string& id) const { return *entry(id).client; }

std::size_t BackendSet::total_calls() const {
  std::size_t n = 0;
  for (const auto& [id, e] : entries_) n += e->client->calls();
  return n;
}

// ---------------------------------------------------------------------------
// Reports

std::string_view to_string(Status status) {
  switch (status) {
    case Status::ok: return "ok";
    case Status::fallback: return "fallback";
    case Status::failed: return "failed";
    case Status::skipped: return "skipped";
  }
  return "ok";
}

Status parse_status(std::string_view name) {
  if (name == "ok") return Status::ok;
  if (name == "fallback") return Status::fallback;
  if (name == "failed") return Status::failed;
  if (name == "skipped") return Status::skipped;
  throw std::invalid_argument("unknown stage status: " + std::string(name));
}

namespace {

int severity(Status s) {
  switch (s) {
    case Status::fallback: return 1;
    case Status::failed: return 2;
    default: return 0;
  }
}

}  // namespace

Status RunReport::talk_status(const std::string& talk_id) const {
  Status worst = Status::ok;
  for (const auto& r : stages) {
    if (r.talk_id == talk_id && severity(r.status) > severity(worst)) worst = r.status;
  }
  return worst;
}

RunSummary RunReport::summary() const {
  RunSummary s;
  std::vector<std::string> seen;
  for (const auto& r : stages) {
    if (std::find(seen.begin(), seen.end(), r.talk_id) != seen.end()) continue;
    seen.push_back(r.talk_id);
    switch (talk_status(r.talk_id)) {
      case Status::fallback: ++s.fallback; break;
      case Status::failed: ++s.failed; break;
      default: ++s.ok; break;
    }
  }
  return s;
}

int RunReport::exit_code() const {
  const RunSummary s = summary();
  if (s.failed > 0) return 1;
  return s.fallback > 0 ? 2 : 0;
}

json RunReport::to_json(bool include_timing) const {
  json stage_list = json::array();
  for (const auto& r : stages) {
    json j = {{"stage", std::string(corpus::to_string(r.stage))},
              {"talk_id", r.talk_id},
              {"status", std::string(to_string(r.status))},
              {"artifact_key", r.artifact_key.empty() ? json(nullptr) : json(r.artifact_key)},
              {"detail", r.detail}};
    if (include_timing && r.timing_ms) j["timing_ms"] = *r.timing_ms;
    stage_list.push_back(std::move(j));
  }
  json output_list = json::array();
  for (const auto& o : outputs) {
    output_list.push_back({{"talk_id", o.talk_id},
                           {"lang", o.lang},
                           {"stage", std::string(corpus::to_string(o.key.stage))},
                           {"variant", o.key.variant}});
  }
  const RunSummary s = summary();
  return {{"run_id", run_id},
          {"complete", complete},
          {"stages", stage_list},
          {"outputs", output_list},
          {"summary", {{"ok", s.ok}, {"fallback", s.fallback}, {"failed", s.failed}}},
          {"warnings", warnings}};
}

RunReport RunReport::from_json(const json& j) {
  RunReport report;
  report.run_id = j.at("run_id").get<std::string>();
  report.complete = j.value("complete", true);
  for (const auto& s : j.at("stages")) {
    StageResult r;
    r.stage = corpus::parse_stage(s.at("stage").get<std::string>());
    r.talk_id = s.at("talk_id").get<std::string>();
    r.status = parse_status(s.at("status").get<std::string>());
    if (s.contains("artifact_key") && s["artifact_key"].is_string()) {
      r.artifact_key = s["artifact_key"].get<std::string>();
    }
    if (s.contains("timing_ms")) r.timing_ms = s["timing_ms"].get<double>();
    r.detail = s.value("detail", json::object());
    report.stages.push_back(std::move(r));
  }
  for (const auto& o : j.value("outputs", json::array())) {
    TalkOutput out;
    out.talk_id = o.at("talk_id").get<std::string>();
    out.lang = o.at("lang").get<std::string>();
    out.key = {report.run_id, corpus::parse_stage(o.at("stage").get<std::string>()), out.talk_id,
               o.at("variant").get<std::string>()};
    report.outputs.push_back(std::move(out));
  }
  report.warnings = j.value("warnings", std::vector<std::string>{});
  return report;
}

fs::path report_path(const fs::path& out_dir, const std::string& run_id) {
  return out_dir / run_id / std::string(kReportName);
}

std::string run_id_for(const corpus::RunManifest& manifest, const PipelineConfig& config) {
  std::string bytes = manifest.source_bytes;
  if (bytes.empty()) {
    for (const auto& t : manifest.talks) {
      bytes += json{{"talk_id", t.talk_id},
                    {"audio_path", t.audio_path},
                    {"duration_s", t.duration_s},
                    {"source_lang", t.source_lang},
                    {"target_langs", t.target_langs}}
                   .dump();
      bytes.push_back('\n');
    }
  }
  return corpus::derive_run_id(bytes, config_hash(config));
}

// ---------------------------------------------------------------------------
// Plans and tracks

namespace {

template <typename F>
void for_each_line(std::string_view text, F&& fn) {
  std::size_t n = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    ++n;
    const auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (text::trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw corpus::StorageError("JSONL line " + std::to_string(n) + " is not an object");
    }
    fn(j);
  }
}

json nullable(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

}  // namespace

std::string plan_to_jsonl(const ChunkPlan& plan) {
  std::string out;
  const std::string policy(segmentation::to_string(plan.policy));
  for (const auto& c : plan.chunks) {
    out += json{{"talk_id", plan.talk_id},
                {"start_s", c.start_s},
                {"end_s", c.end_s},
                {"min_conf", c.min_conf},
                {"policy", policy},
                {"truncated_at_s", plan.truncated_at_s ? json(*plan.truncated_at_s) : json(nullptr)},
                {"max_chunk_s", plan.max_chunk_s}}
               .dump();
    out.push_back('\n');
  }
  return out;
}

ChunkPlan plan_from_jsonl(std::string_view text) {
  ChunkPlan plan;
  bool first = true;
  for_each_line(text, [&](const json& j) {
    if (first) {
      plan.talk_id = j.at("talk_id").get<std::string>();
      plan.policy = segmentation::parse_policy(j.at("policy").get<std::string>());
      plan.max_chunk_s = j.value("max_chunk_s", 0.0);
      if (j.contains("truncated_at_s") && !j["truncated_at_s"].is_null()) {
        plan.truncated_at_s = j["truncated_at_s"].get<double>();
      }
      first = false;
    }
    plan.chunks.push_back({plan.talk_id, j.at("start_s").get<double>(), j.at("end_s").get<double>(),
                           j.at("min_conf").get<double>()});
  });
  return plan;
}

std::string records_to_jsonl(const std::vector<document::SentenceRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += json{{"talk_id", r.talk_id},
                {"index", r.index},
                {"source", r.source},
                {"mt", nullable(r.mt)},
                {"ape", nullable(r.ape)},
                {"lang", r.lang}}
               .dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<document::SentenceRecord> records_from_jsonl(std::string_view text) {
  std::vector<document::SentenceRecord> out;
  for_each_line(text, [&](const json& j) {
    document::SentenceRecord r;
    r.talk_id = j.at("talk_id").get<std::string>();
    r.index = j.at("index").get<std::size_t>();
    r.source = j.at("source").get<std::string>();
    r.lang = j.at("lang").get<std::string>();
    if (j.contains("mt") && !j["mt"].is_null()) r.mt = j["mt"].get<std::string>();
    if (j.contains("ape") && !j["ape"].is_null()) r.ape = j["ape"].get<std::string>();
    out.push_back(std::move(r));
  });
  return out;
}

namespace {

json track_to_json(const segmentation::SpeechFrameTrack& t) {
  return {{"talk_id", t.talk_id}, {"frame_rate_hz", t.frame_rate_hz}, {"probs", t.probs}};
}

segmentation::SpeechFrameTrack track_from_json(const json& j) {
  segmentation::SpeechFrameTrack t;
  t.talk_id = j.at("talk_id").get<std::string>();
  t.frame_rate_hz = j.at("frame_rate_hz").get<double>();
  t.probs = j.at("probs").get<std::vector<double>>();
  return t;
}

std::string render(const json& j) { return j.dump(2) + "\n"; }

std::string index_tag(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return buf;
}

// Runs fn(0..n-1) on up to `workers` threads. Every index runs; the first
// failure by index is rethrown afterwards.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < std::min(workers, n); ++w) threads.emplace_back(work);
  work();
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<std::string> target_langs(const corpus::TalkRef& talk, const PipelineConfig& cfg) {
  return talk.target_langs.empty() ? std::vector<std::string>{cfg.target_lang} : talk.target_langs;
}

// ---------------------------------------------------------------------------
// Per-talk execution

using Clock = std::chrono::steady_clock;

struct Ctx {
  const PipelineConfig& cfg;
  BackendSet& be;
  corpus::ArtifactStore& store;
  std::string run_id;
  std::optional<Stage> stop_after;

  ArtifactKey key(Stage stage, const std::string& talk_id, std::string variant) const {
    return {run_id, stage, talk_id, std::move(variant)};
  }
};

struct TalkRun {
  std::vector<StageResult> stages;
  std::vector<TalkOutput> outputs;
  std::vector<std::string> warnings;
  bool stopped = false;
};

// Variants of artifacts derived from a fallback carry ".degraded"; artifacts
// that are themselves fallbacks carry ".fallback" and are recomputed on the
// next run instead of being reused.
class TalkState {
public:
  TalkState(const Ctx& ctx, const corpus::TalkRef& talk) : ctx(ctx), talk(talk) {}

  const Ctx& ctx;
  const corpus::TalkRef& talk;
  TalkRun run;
  bool degraded = false;
  Stage current = Stage::vad;

  void begin(Stage stage) {
    current = stage;
    t0_ = Clock::now();
  }

  // Records the stage and reports whether the run should stop here.
  bool finish(Status status, const std::string& artifact_key, json detail = json::object()) {
    StageResult r;
    r.stage = current;
    r.talk_id = talk.talk_id;
    r.status = status;
    r.artifact_key = artifact_key;
    r.timing_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0_).count();
    r.detail = std::move(detail);
    run.stages.push_back(std::move(r));
    if (ctx.stop_after == current && status != Status::failed) {
      run.stopped = true;
      return true;
    }
    return status == Status::failed;
  }

  void warn(const std::string& message) { run.warnings.push_back(talk.talk_id + ": " + message); }

  std::string variant(const std::string& base, const std::string& ext, bool own_fallback = false) const {
    return base + (degraded ? ".degraded" : "") + (own_fallback ? ".fallback" : "") + ext;
  }

  ArtifactKey key(Stage stage, std::string variant) const {
    return ctx.key(stage, talk.talk_id, std::move(variant));
  }

  std::optional<std::string> cached(const ArtifactKey& key) const { return ctx.store.try_get(key); }

  std::string put(const ArtifactKey& key, const std::string& payload) const {
    const bool force = key.variant.find(".degraded") != std::string::npos ||
                       key.variant.find(".fallback") != std::string::npos;
    ctx.store.put(key, payload, force);
    return key.to_string();
  }

  // Cached payload for key, or produce() stored under it.
  template <typename F>
  std::string fetch(const ArtifactKey& key, F&& produce) const {
    if (auto hit = cached(key)) return *hit;
    std::string payload = produce();
    put(key, payload);
    return payload;
  }

private:
  Clock::time_point t0_;
};

std::optional<segmentation::SpeechFrameTrack> vad_step(TalkState& ts) {
  ts.begin(Stage::vad);
  const auto key = ts.key(Stage::vad, "track.json");
  try {
    const std::string payload = ts.fetch(key, [&] {
      auto track = ts.ctx.be.call(ts.ctx.cfg.roles.vad, [&](backends::Client& c) {
        return c.detect_speech(ts.talk.audio_path, ts.talk.duration_s);
      });
      track.talk_id = ts.talk.talk_id;
      return track_to_json(track).dump() + "\n";
    });
    auto track = track_from_json(json::parse(payload));
    if (ts.finish(Status::ok, key.to_string(),
                  {{"frames", track.probs.size()}, {"frame_rate_hz", track.frame_rate_hz}})) {
      return std::nullopt;
    }
    return track;
  } catch (const backends::BackendError& e) {
    ts.warn(std::string("speech detection failed: ") + e.what());
    ts.finish(Status::failed, "", {{"error", e.what()}});
    return std::nullopt;
  }
}

std::optional<ChunkPlan> segment_step(TalkState& ts, const ChunkPlan& plan) {
  ts.begin(Stage::segments);
  const auto key = ts.key(Stage::segments, "plan.jsonl");
  const std::string stored = ts.put(key, plan_to_jsonl(plan));
  json detail = {{"chunks", plan.chunks.size()},
                 {"policy", std::string(segmentation::to_string(plan.policy))},
                 {"max_chunk_s", plan.max_chunk_s},
                 {"truncated_at_s", plan.truncated_at_s ? json(*plan.truncated_at_s) : json(nullptr)}};
  if (ts.finish(Status::ok, stored, std::move(detail))) return std::nullopt;
  return plan;
}

struct AsrOutcome {
  std::vector<std::string> systems;  // systems that transcribed every chunk
  std::vector<document::HypothesisSet> chunks;
};

std::optional<AsrOutcome> asr_step(TalkState& ts, const ChunkPlan& plan,
                                   const std::vector<std::string>& systems, const std::string& lang,
                                   const backends::AsrOptions& options, const std::string& tag) {
  ts.begin(Stage::asr);
  const std::size_t n_chunks = plan.chunks.size();
  std::vector<std::string> texts(systems.size() * n_chunks);
  std::vector<std::string> errors(systems.size() * n_chunks);

  parallel_for(texts.size(), ts.ctx.cfg.max_in_flight * systems.size(), [&](std::size_t i) {
    const std::string& system = systems[i / n_chunks];
    const auto& chunk = plan.chunks[i % n_chunks];
    const auto key =
        ts.key(Stage::asr, system + (tag.empty() ? "" : "." + tag) + "-" + index_tag(i % n_chunks) + ".txt");
    try {
      texts[i] = ts.fetch(key, [&] {
        return ts.ctx.be.call(system, [&](backends::Client& c) {
          return c.transcribe(ts.talk.audio_path, chunk.start_s, chunk.end_s, lang, options).text;
        });
      });
    } catch (const backends::BackendError& e) {
      errors[i] = e.what();
    }
  });

  AsrOutcome out;
  json failed = json::array();
  for (std::size_t s = 0; s < systems.size(); ++s) {
    auto first_error = std::find_if(errors.begin() + static_cast<std::ptrdiff_t>(s * n_chunks),
                                    errors.begin() + static_cast<std::ptrdiff_t>((s + 1) * n_chunks),
                                    [](const std::string& e) { return !e.empty(); });
    if (first_error != errors.begin() + static_cast<std::ptrdiff_t>((s + 1) * n_chunks)) {
      failed.push_back(systems[s]);
      ts.warn("asr system " + systems[s] + " dropped: " + *first_error);
    } else {
      out.systems.push_back(systems[s]);
    }
  }
  for (std::size_t c = 0; c < n_chunks; ++c) {
    document::HypothesisSet set;
    set.talk_id = ts.talk.talk_id;
    set.chunk_index = c;
    for (std::size_t s = 0; s < systems.size(); ++s) {
      if (errors[s * n_chunks + c].empty()) set.texts[systems[s]] = texts[s * n_chunks + c];
    }
    out.chunks.push_back(std::move(set));
  }

  json detail = {{"chunks", n_chunks}, {"systems", out.systems}, {"failed_systems", failed}};
  if (out.systems.empty() && n_chunks > 0) {
    ts.finish(Status::failed, "", std::move(detail));
    return std::nullopt;
  }
  Status status = Status::ok;
  if (!failed.empty()) {
    status = Status::fallback;
    ts.degraded = true;
  }
  if (ts.finish(status, "", std::move(detail))) return std::nullopt;
  return out;
}

std::string system_text(const AsrOutcome& asr, std::size_t first, std::size_t last,
                        const std::string& system) {
  std::vector<std::pair<std::size_t, std::string>> parts;
  for (std::size_t c = first; c <= last; ++c) parts.emplace_back(c, asr.chunks[c].texts.at(system));
  return document::assemble_talk(parts).text;
}

std::optional<document::TalkDocument> fusion_step(TalkState& ts, const AsrOutcome& asr) {
  ts.begin(Stage::fusion);
  const auto& cfg = ts.ctx.cfg;
  const std::string& primary = asr.systems.front();
  std::vector<std::pair<std::size_t, std::string>> parts;
  json detail = json::object();
  Status status = Status::ok;

  std::vector<refinement::FusionBlock> blocks;
  std::string plan_error;
  try {
    blocks = refinement::plan_fusion_blocks(asr.chunks, asr.systems, cfg.fusion_token_budget);
  } catch (const refinement::BudgetExceeded& e) {
    plan_error = e.what();
  }

  if (!plan_error.empty()) {
    status = Status::fallback;
    ts.warn("fusion skipped, using " + primary + ": " + plan_error);
    if (!asr.chunks.empty()) parts.emplace_back(0, system_text(asr, 0, asr.chunks.size() - 1, primary));
    detail = {{"blocks", 0}, {"error", plan_error}};
  } else {
    std::vector<std::string> fused(blocks.size());
    std::vector<std::string> failures(blocks.size());
    parallel_for(blocks.size(), cfg.max_in_flight, [&](std::size_t b) {
      const auto clean = ts.key(Stage::fusion, ts.variant("block-" + index_tag(b), ".txt"));
      if (auto hit = ts.cached(clean)) {
        fused[b] = *hit;
        return;
      }
      const std::string stem = "block-" + index_tag(b);
      ts.put(ts.key(Stage::fusion, ts.variant(stem, ".prompt.txt")), blocks[b].rendered_prompt);
      try {
        const std::string raw = ts.ctx.be.call(cfg.roles.llm, [&](backends::Client& c) {
          return c.complete(blocks[b].rendered_prompt, cfg.max_tokens, cfg.temperature);
        });
        ts.put(ts.key(Stage::fusion, ts.variant(stem, ".response.txt")), raw);
        fused[b] = refinement::parse_fusion_response(raw);
      } catch (const backends::BackendError& e) {
        failures[b] = e.what();
      } catch (const refinement::EmptyOutput& e) {
        failures[b] = e.what();
      }
      if (failures[b].empty()) {
        ts.put(clean, fused[b]);
      } else {
        fused[b] = blocks[b].per_system_texts.front().second;
        ts.put(ts.key(Stage::fusion, ts.variant(stem, ".txt", true)), fused[b]);
      }
    });
    json fallback_blocks = json::array();
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      if (!failures[b].empty()) {
        fallback_blocks.push_back(b);
        ts.warn("fusion block " + std::to_string(b) + " fell back to " + primary + ": " + failures[b]);
      }
      parts.emplace_back(blocks[b].first, fused[b]);
    }
    if (!fallback_blocks.empty()) status = Status::fallback;
    detail = {{"blocks", blocks.size()}, {"fallback_blocks", fallback_blocks}};
  }
  if (ts.finish(status, "", std::move(detail))) return std::nullopt;
  if (status == Status::fallback) ts.degraded = true;

  ts.begin(Stage::document);
  auto doc = document::assemble_talk(parts, ts.talk.talk_id);
  json offsets = json::array();
  for (const auto& o : doc.chunk_offsets) offsets.push_back({o.chunk_index, o.char_start});
  const auto key = ts.key(Stage::document, ts.variant("transcript", ".json"));
  const std::string stored =
      ts.put(key, render({{"talk_id", doc.talk_id}, {"text", doc.text}, {"chunk_offsets", offsets}}));
  if (ts.finish(Status::ok, stored, {{"chars", doc.text.size()}})) return std::nullopt;
  return doc;
}

std::optional<std::vector<document::SentenceRecord>> sentences_step(
    TalkState& ts, const document::TalkDocument& doc, const std::string& lang,
    const std::string& base) {
  ts.begin(Stage::sentences);
  auto records = document::split_sentences(doc, lang);
  const auto key = ts.key(Stage::sentences, ts.variant(base, ".jsonl"));
  const std::string stored = ts.put(key, records_to_jsonl(records));
  if (ts.finish(Status::ok, stored, {{"sentences", records.size()}})) return std::nullopt;
  return records;
}

// Translates every record into lang; a failed sentence keeps its source.
std::optional<std::vector<document::SentenceRecord>> mt_step(
    TalkState& ts, std::vector<document::SentenceRecord> records, const std::string& lang) {
  ts.begin(Stage::mt);
  const auto& cfg = ts.ctx.cfg;
  const auto clean = ts.key(Stage::mt, ts.variant(lang, ".jsonl"));
  std::vector<std::size_t> fallbacks;
  std::string stored;
  if (auto hit = ts.cached(clean)) {
    records = records_from_jsonl(*hit);
    stored = clean.to_string();
  } else {
    std::vector<std::string> errors(records.size());
    parallel_for(records.size(), cfg.max_in_flight, [&](std::size_t i) {
      try {
        records[i].mt = ts.ctx.be.call(cfg.roles.mt, [&](backends::Client& c) {
          return c.translate(records[i].source, ts.talk.source_lang, lang);
        });
      } catch (const backends::BackendError& e) {
        errors[i] = e.what();
        records[i].mt = records[i].source;
      }
      records[i].lang = lang;
    });
    for (std::size_t i = 0; i < errors.size(); ++i) {
      if (errors[i].empty()) continue;
      fallbacks.push_back(i);
      ts.warn("translation of sentence " + std::to_string(i) + " kept the source: " + errors[i]);
    }
    const auto key = fallbacks.empty() ? clean : ts.key(Stage::mt, ts.variant(lang, ".jsonl", true));
    stored = ts.put(key, records_to_jsonl(records));
  }
  const Status status = fallbacks.empty() ? Status::ok : Status::fallback;
  if (ts.finish(status, stored, {{"lang", lang}, {"fallbacks", fallbacks}})) return std::nullopt;
  if (status == Status::fallback) ts.degraded = true;
  return records;
}

std::string final_text(const std::vector<document::SentenceRecord>& records) {
  std::string out;
  for (const auto& r : records) out += r.ape.value_or(r.mt.value_or(r.source)) + "\n";
  return out;
}

refinement::Completion llm_completion(const TalkState& ts) {
  return [&ts](const std::string& prompt) {
    const auto& cfg = ts.ctx.cfg;
    return ts.ctx.be.call(cfg.roles.llm, [&](backends::Client& c) {
      return c.complete(prompt, cfg.max_tokens, cfg.temperature, {"<|im_end|>"});
    });
  };
}

std::string lines_jsonl(const std::vector<std::string>& items, const char* field) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    out += json{{"index", i}, {field, items[i]}}.dump();
    out.push_back('\n');
  }
  return out;
}

// Post-edits the records and stores the final text for lang.
bool ape_step(TalkState& ts, const std::vector<document::SentenceRecord>& records,
              const std::string& lang, const refinement::PostEditOptions& options) {
  ts.begin(Stage::ape);
  const auto clean = ts.key(Stage::ape, ts.variant(lang, ".jsonl"));
  std::vector<document::SentenceRecord> edited;
  Status status = Status::ok;
  std::string stored;
  json fallbacks = json::array();

  if (auto hit = ts.cached(clean)) {
    edited = records_from_jsonl(*hit);
    const bool zh = std::any_of(edited.begin(), edited.end(),
                                [](const auto& r) { return refinement::is_zh(r.lang); });
    if (zh && !options.edit_zh) status = Status::skipped;
    stored = clean.to_string();
  } else {
    auto result = refinement::postedit_document(records, options, llm_completion(ts));
    for (const auto& w : result.warnings) ts.warn("post-edit " + lang + " " + w);
    for (auto i : result.fallbacks) fallbacks.push_back(i);
    if (result.skipped) status = Status::skipped;
    if (!result.fallbacks.empty()) status = Status::fallback;
    const bool own_fallback = status == Status::fallback;
    if (!result.prompts.empty()) {
      ts.put(ts.key(Stage::ape, ts.variant(lang, ".prompts.jsonl", own_fallback)),
             lines_jsonl(result.prompts, "prompt"));
      ts.put(ts.key(Stage::ape, ts.variant(lang, ".responses.jsonl", own_fallback)),
             lines_jsonl(result.responses, "response"));
    }
    edited = std::move(result.sentences);
    stored = ts.put(ts.key(Stage::ape, ts.variant(lang, ".jsonl", own_fallback)),
                    records_to_jsonl(edited));
  }

  const auto text_key =
      ts.key(Stage::ape, ts.variant(lang, ".txt", status == Status::fallback));
  ts.put(text_key, final_text(edited));
  ts.run.outputs.push_back({ts.talk.talk_id, lang, text_key});
  json detail = {{"lang", lang}, {"fallbacks", fallbacks}, {"final", text_key.to_string()}};
  if (status == Status::skipped) detail["reason"] = "post-editing disabled for " + lang;
  return !ts.finish(status, stored, std::move(detail));
}

// Runs body and turns an unexpected error into a failed record for the
// stage in progress.
TalkRun guarded(TalkState& ts, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    ts.warn(std::string(corpus::to_string(ts.current)) + " failed: " + e.what());
    ts.finish(Status::failed, "", {{"error", e.what()}});
  }
  return std::move(ts.run);
}

ChunkPlan vad_plan(const TalkState& ts, const segmentation::SpeechFrameTrack& track,
                   double chunk_size_s, segmentation::Policy policy) {
  const auto& cfg = ts.ctx.cfg;
  auto segments = segmentation::frames_to_segments(track, cfg.vad);
  auto plan = segmentation::constrain_segments(segments, track, chunk_size_s, cfg.min_split_part_s,
                                               policy);
  plan.talk_id = ts.talk.talk_id;
  return plan;
}

TalkRun offline_talk(const Ctx& ctx, const corpus::TalkRef& talk) {
  TalkState ts(ctx, talk);
  return guarded(ts, [&] {
    const auto& cfg = ctx.cfg;
    auto track = vad_step(ts);
    if (!track) return;
    auto plan = segment_step(
        ts, vad_plan(ts, *track, cfg.chunk_size_s.offline, segmentation::Policy::offline25));
    if (!plan) return;
    auto asr = asr_step(ts, *plan, cfg.asr_system_ids, talk.source_lang, {}, "");
    if (!asr) return;
    auto doc = fusion_step(ts, *asr);
    if (!doc) return;
    auto sentences = sentences_step(ts, *doc, talk.source_lang, "sentences");
    if (!sentences) return;
    const bool degraded = ts.degraded;
    for (const auto& lang : target_langs(talk, cfg)) {
      ts.degraded = degraded;
      auto translated = mt_step(ts, *sentences, lang);
      if (!translated) return;
      refinement::PostEditOptions options;
      options.context_size = cfg.context_sizes.ape;
      options.mode = refinement::PostEditMode::ape_offline;
      options.edit_zh = cfg.context_sizes.edit_zh;
      if (!ape_step(ts, *translated, lang, options)) return;
    }
  });
}

std::string if_model(const PipelineConfig& cfg) {
  return cfg.roles.if_model.empty() ? cfg.asr_system_ids.front() : cfg.roles.if_model;
}

std::string instruction_for(IfTask task, const std::string& lang,
                            const std::optional<std::string>& question) {
  const std::string name = refinement::language_name(lang);
  switch (task) {
    case IfTask::asr: return "Transcribe the audio.";
    case IfTask::st: return "Translate the audio into " + name + ".";
    case IfTask::sqa: return "Answer the question in " + name + ": " + question.value_or("");
    case IfTask::ssum: return "Summarize the talk in " + name + ".";
  }
  return {};
}

TalkRun segmented_if_talk(const Ctx& ctx, const corpus::TalkRef& talk, IfTask task) {
  TalkState ts(ctx, talk);
  return guarded(ts, [&] {
    const auto& cfg = ctx.cfg;
    auto track = vad_step(ts);
    if (!track) return;
    const bool asr_task = task == IfTask::asr;
    auto plan = segment_step(
        ts, asr_task ? vad_plan(ts, *track, cfg.chunk_size_s.if_asr, segmentation::Policy::if_asr20)
                     : vad_plan(ts, *track, cfg.chunk_size_s.if_st, segmentation::Policy::if_st25));
    if (!plan) return;
    const std::vector<std::string> langs =
        asr_task ? std::vector<std::string>{talk.source_lang} : target_langs(talk, cfg);
    const std::string model = if_model(cfg);

    for (const auto& lang : langs) {
      ts.degraded = false;
      backends::AsrOptions options;
      options.instruction = instruction_for(task, lang, std::nullopt);
      auto asr = asr_step(ts, *plan, {model}, lang, options, asr_task ? "" : lang);
      if (!asr) return;

      ts.begin(Stage::document);
      std::vector<std::pair<std::size_t, std::string>> parts;
      for (const auto& c : asr->chunks) parts.emplace_back(c.chunk_index, c.texts.at(model));
      auto doc = document::assemble_talk(parts, talk.talk_id);
      const std::string base = asr_task ? "transcript" : lang;
      const std::string stored = ts.put(ts.key(Stage::document, ts.variant(base, ".json")),
                                        render({{"talk_id", doc.talk_id}, {"text", doc.text}}));
      if (ts.finish(Status::ok, stored, {{"chars", doc.text.size()}})) return;

      auto sentences = sentences_step(ts, doc, lang, base);
      if (!sentences) return;
      refinement::PostEditOptions options_pe;
      options_pe.mode = asr_task ? refinement::PostEditMode::if_asr : refinement::PostEditMode::if_st;
      options_pe.context_size = asr_task ? cfg.context_sizes.if_asr : cfg.context_sizes.if_st;
      options_pe.edit_zh = cfg.context_sizes.edit_zh;
      if (!ape_step(ts, *sentences, lang, options_pe)) return;
    }
  });
}

TalkRun long_audio_if_talk(const Ctx& ctx, const corpus::TalkRef& talk, IfTask task,
                           const std::optional<std::string>& question) {
  TalkState ts(ctx, talk);
  return guarded(ts, [&] {
    const auto& cfg = ctx.cfg;
    auto long_plan =
        segmentation::plan_long_audio_chunks(talk.duration_s, cfg.chunk_size_s.qa, cfg.truncation_cap_s);
    long_plan.talk_id = talk.talk_id;
    long_plan.policy = segmentation::Policy::if_qa60;
    auto plan = segment_step(ts, long_plan);
    if (!plan) return;
    const std::string model = if_model(cfg);
    const Stage stage = task == IfTask::sqa ? Stage::qa : Stage::summary;
    const std::string qtag = question ? "." + sha256_hex(*question).substr(0, 8) : "";

    for (const auto& lang : target_langs(talk, cfg)) {
      ts.degraded = false;
      ts.begin(stage);
      backends::AsrOptions options;
      options.instruction = instruction_for(task, lang, question);
      for (const auto& c : plan->chunks) options.chunks.emplace_back(c.start_s, c.end_s);
      const auto key = ts.key(stage, lang + qtag + ".txt");
      std::string output;
      try {
        output = ts.fetch(key, [&] {
          return ctx.be.call(model, [&](backends::Client& c) {
            return c.transcribe(talk.audio_path, plan->chunks.front().start_s,
                                plan->chunks.back().end_s, lang, options)
                .text;
          });
        });
      } catch (const backends::BackendError& e) {
        ts.warn(std::string(corpus::to_string(stage)) + " failed: " + e.what());
        ts.finish(Status::failed, "", {{"lang", lang}, {"error", e.what()}});
        return;
      }
      if (task == IfTask::sqa) {
        ts.run.outputs.push_back({talk.talk_id, lang, key});
        if (ts.finish(Status::ok, key.to_string(), {{"lang", lang}})) return;
        continue;
      }
      if (ts.finish(Status::ok, key.to_string(), {{"lang", lang}})) return;

      document::SentenceRecord summary;
      summary.talk_id = talk.talk_id;
      summary.source = std::string(text::trim(output));
      summary.lang = lang;
      refinement::PostEditOptions options_pe;
      options_pe.mode = refinement::PostEditMode::if_ssum;
      options_pe.edit_zh = cfg.context_sizes.edit_zh;
      std::vector<document::SentenceRecord> records;
      if (!summary.source.empty()) records.push_back(std::move(summary));
      if (!ape_step(ts, records, lang, options_pe)) return;
    }
  });
}

void require_backends(const BackendSet& be, const std::vector<std::string>& ids) {
  for (const auto& id : ids) {
    if (!be.has(id)) throw ConfigError("no backend configured with id " + id);
  }
}

void write_report(const fs::path& path, const RunReport& report, bool include_timing) {
  fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << render(report.to_json(include_timing));
    if (!out) throw corpus::StorageError("cannot write report " + tmp.string());
  }
  fs::rename(tmp, path);
}

RunReport execute(const corpus::RunManifest& manifest, const PipelineConfig& config,
                  BackendSet& backends, const RunOptions& options,
                  const std::function<TalkRun(const Ctx&, const corpus::TalkRef&)>& per_talk) {
  config.validate();
  const std::string run_id = run_id_for(manifest, config);
  const fs::path report_file = report_path(options.out_dir, run_id);
  if (fs::exists(options.out_dir / run_id) && !fs::exists(report_file) && !options.resume) {
    throw IncompleteRunError("run directory " + (options.out_dir / run_id).string() +
                             " has no report (interrupted run); pass --resume to continue it");
  }
  corpus::ArtifactStore store(options.out_dir);
  const Ctx ctx{config, backends, store, run_id, options.stop_after};

  std::vector<TalkRun> runs(manifest.talks.size());
  parallel_for(runs.size(), config.talk_workers,
               [&](std::size_t i) { runs[i] = per_talk(ctx, manifest.talks[i]); });

  RunReport report;
  report.run_id = run_id;
  report.complete = !options.stop_after.has_value();
  for (auto& r : runs) {
    std::move(r.stages.begin(), r.stages.end(), std::back_inserter(report.stages));
    std::move(r.outputs.begin(), r.outputs.end(), std::back_inserter(report.outputs));
    std::move(r.warnings.begin(), r.warnings.end(), std::back_inserter(report.warnings));
  }
  if (report.complete) write_report(report_file, report, options.include_timing);
  return report;
}

}  // namespace

RunReport run_offline(const corpus::RunManifest& manifest, const PipelineConfig& config,
                      BackendSet& backends, const RunOptions& options) {
  std::vector<std::string> needed = config.asr_system_ids;
  needed.insert(needed.end(), {config.roles.vad, config.roles.llm, config.roles.mt});
  require_backends(backends, needed);
  return execute(manifest, config, backends, options, offline_talk);
}

std::string_view to_string(IfTask task) {
  switch (task) {
    case IfTask::asr: return "asr";
    case IfTask::st: return "st";
    case IfTask::sqa: return "sqa";
    case IfTask::ssum: return "ssum";
  }
  return "asr";
}

IfTask parse_if_task(std::string_view name) {
  if (name == "asr") return IfTask::asr;
  if (name == "st") return IfTask::st;
  if (name == "sqa") return IfTask::sqa;
  if (name == "ssum") return IfTask::ssum;
  throw std::invalid_argument("unknown task: " + std::string(name));
}

RunReport run_if(const corpus::RunManifest& manifest, const PipelineConfig& config,
                 BackendSet& backends, IfTask task, const std::optional<std::string>& question,
                 const RunOptions& options) {
  if (task == IfTask::sqa && (!question || text::trim(*question).empty())) {
    throw std::invalid_argument("run_if: the sqa task needs a question");
  }
  std::vector<std::string> needed = {if_model(config)};
  if (task == IfTask::asr || task == IfTask::st) needed.push_back(config.roles.vad);
  if (task != IfTask::sqa) needed.push_back(config.roles.llm);
  require_backends(backends, needed);

  if (task == IfTask::asr || task == IfTask::st) {
    return execute(manifest, config, backends, options,
                   [task](const Ctx& ctx, const corpus::TalkRef& talk) {
                     return segmented_if_talk(ctx, talk, task);
                   });
  }
  return execute(manifest, config, backends, options,
                 [task, &question](const Ctx& ctx, const corpus::TalkRef& talk) {
                   return long_audio_if_talk(ctx, talk, task, question);
                 });
}

// ---------------------------------------------------------------------------
// Grid search and evaluation

References load_references(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw corpus::StorageError("cannot open references: " + path.string());
  References refs;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("talk_id") || !j.contains("text")) {
      throw corpus::ManifestError("references line " + std::to_string(n) +
                                      ": expected {\"talk_id\", \"text\"}",
                                  {n});
    }
    refs[j["talk_id"].get<std::string>()] = j["text"].get<std::string>();
  }
  return refs;
}

std::string_view to_string(Metric metric) { return metric == Metric::wer ? "wer" : "chrf2"; }

Metric parse_metric(std::string_view name) {
  if (name == "wer") return Metric::wer;
  if (name == "chrf2" || name == "chrf") return Metric::chrf2;
  throw std::invalid_argument("unknown metric: " + std::string(name));
}

namespace {

std::string size_label(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", s);
  return buf;
}

std::vector<std::string> text_lines(const std::string& s) {
  std::vector<std::string> lines;
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  while (!lines.empty() && text::trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

metrics::ChrfStats pooled_chrf_stats(const std::string& ref, const std::string& hyp) {
  const auto ref_lines = text_lines(ref);
  const auto hyp_lines = text_lines(hyp);
  if (ref_lines.size() != hyp_lines.size() || ref_lines.size() < 2) {
    return metrics::chrf_stats(ref, hyp);
  }
  metrics::ChrfStats total;
  for (std::size_t i = 0; i < ref_lines.size(); ++i) total += metrics::chrf_stats(ref_lines[i], hyp_lines[i]);
  return total;
}

}  // namespace

GridResult grid_search_chunks(const corpus::RunManifest& manifest, const PipelineConfig& config,
                              BackendSet& backends, const std::vector<double>& sizes,
                              Metric metric, const References& refs) {
  if (sizes.empty()) throw std::invalid_argument("grid_search_chunks: no chunk sizes");
  for (double s : sizes) {
    if (!(s > 0.0)) throw std::invalid_argument("grid_search_chunks: chunk sizes must be positive");
  }
  const std::string system = config.asr_system_ids.front();
  require_backends(backends, {system, config.roles.vad});
  const auto profile = metrics::parse_profile(config.wer_profile);

  GridResult result;
  std::vector<const corpus::TalkRef*> talks;
  std::vector<std::string> missing;
  for (const auto& t : manifest.talks) {
    if (refs.contains(t.talk_id)) {
      talks.push_back(&t);
    } else {
      missing.push_back(t.talk_id);
      result.warnings.push_back(t.talk_id + ": no reference, excluded");
    }
  }
  if (talks.empty()) throw EvaluationError("grid search: no talk has a reference", missing);

  std::vector<segmentation::SpeechFrameTrack> tracks(talks.size());
  parallel_for(talks.size(), config.talk_workers, [&](std::size_t i) {
    tracks[i] = backends.call(config.roles.vad, [&](backends::Client& c) {
      return c.detect_speech(talks[i]->audio_path, talks[i]->duration_s);
    });
    tracks[i].talk_id = talks[i]->talk_id;
  });

  auto& table = result.table;
  table.label_header = "chunk_size_s";
  const auto better = metric == Metric::wer ? metrics::Better::lower : metrics::Better::higher;
  for (const auto* t : talks) table.columns.push_back({t->talk_id, better});
  if (talks.size() > 1) table.columns.push_back({"all", better});

  for (double size : sizes) {
    metrics::ScoreRow row;
    row.label = size_label(size);
    std::size_t errors = 0;
    std::size_t ref_words = 0;
    metrics::ChrfStats pooled;
    for (std::size_t i = 0; i < talks.size(); ++i) {
      const auto segments = segmentation::frames_to_segments(tracks[i], config.vad);
      const auto plan = segmentation::constrain_segments(segments, tracks[i], size,
                                                         config.min_split_part_s,
                                                         segmentation::Policy::offline25);
      std::vector<std::string> texts(plan.chunks.size());
      parallel_for(plan.chunks.size(), config.max_in_flight, [&](std::size_t c) {
        texts[c] = backends.call(system, [&](backends::Client& client) {
          return client.transcribe(talks[i]->audio_path, plan.chunks[c].start_s,
                                   plan.chunks[c].end_s, talks[i]->source_lang)
              .text;
        });
      });
      std::vector<std::pair<std::size_t, std::string>> parts;
      for (std::size_t c = 0; c < texts.size(); ++c) parts.emplace_back(c, texts[c]);
      const std::string hyp = document::assemble_talk(parts).text;
      const std::string& ref = refs.at(talks[i]->talk_id);
      if (metric == Metric::wer) {
        const auto w = metrics::wer(ref, hyp, profile);
        errors += w.errors();
        ref_words += w.ref_words;
        row.values.push_back(100.0 * w.wer());
      } else {
        const auto stats = metrics::chrf_stats(ref, hyp);
        pooled += stats;
        row.values.push_back(metrics::chrf_from_stats(stats).score);
      }
    }
    if (talks.size() > 1) {
      row.values.push_back(metric == Metric::wer
                               ? 100.0 * static_cast<double>(errors) / static_cast<double>(ref_words)
                               : metrics::chrf_from_stats(pooled).score);
    }
    table.rows.push_back(std::move(row));
  }
  return result;
}

std::string EvalResult::to_jsonl() const {
  std::string out;
  auto line = [&](const std::string& talk_id, std::string_view metric, double value, json detail) {
    out += json{{"talk_id", talk_id}, {"metric", metric}, {"value", value}, {"detail", std::move(detail)}}
               .dump();
    out.push_back('\n');
  };
  for (const auto& t : talks) {
    if (t.wer) {
      line(t.talk_id, "wer", t.wer->wer(),
           {{"substitutions", t.wer->substitutions},
            {"deletions", t.wer->deletions},
            {"insertions", t.wer->insertions},
            {"ref_words", t.wer->ref_words}});
    }
    if (t.chrf2) line(t.talk_id, "chrf2", *t.chrf2, json::object());
  }
  json scope = {{"talks", talks.size()}, {"excluded", excluded}};
  if (corpus_wer) line("corpus", "wer", *corpus_wer, scope);
  if (corpus_chrf2) line("corpus", "chrf2", *corpus_chrf2, scope);
  return out;
}

EvalResult evaluate_outputs(const std::vector<std::pair<std::string, std::string>>& hypotheses,
                            const References& refs, const std::vector<Metric>& metric_list,
                            metrics::NormProfile profile) {
  const bool want_wer =
      std::find(metric_list.begin(), metric_list.end(), Metric::wer) != metric_list.end();
  const bool want_chrf =
      std::find(metric_list.begin(), metric_list.end(), Metric::chrf2) != metric_list.end();
  EvalResult result;
  std::size_t errors = 0;
  std::size_t ref_words = 0;
  metrics::ChrfStats pooled;
  std::vector<std::string> scored_ids;

  for (const auto& [talk_id, hyp] : hypotheses) {
    auto ref = refs.find(talk_id);
    if (ref == refs.end()) {
      result.excluded.push_back(talk_id);
      result.warnings.push_back(talk_id + ": no reference, excluded");
      continue;
    }
    scored_ids.push_back(talk_id);
    TalkScore score;
    score.talk_id = talk_id;
    if (want_wer) {
      try {
        score.wer = metrics::wer(ref->second, hyp, profile);
        errors += score.wer->errors();
        ref_words += score.wer->ref_words;
      } catch (const metrics::EmptyReferenceError&) {
        result.warnings.push_back(talk_id + ": empty reference, no WER");
      }
    }
    if (want_chrf) {
      const auto stats = pooled_chrf_stats(ref->second, hyp);
      pooled += stats;
      score.chrf2 = metrics::chrf_from_stats(stats).score;
    }
    result.talks.push_back(std::move(score));
  }
  if (result.talks.empty()) {
    throw EvaluationError("evaluation: no output has a reference (missing: " +
                              text::join(result.excluded, ", ") + ")",
                          result.excluded);
  }
  for (const auto& [talk_id, text] : refs) {
    if (std::find(scored_ids.begin(), scored_ids.end(), talk_id) == scored_ids.end()) {
      result.warnings.push_back(talk_id + ": reference without output");
    }
  }
  if (want_wer && ref_words > 0) {
    result.corpus_wer = static_cast<double>(errors) / static_cast<double>(ref_words);
  }
  if (want_chrf) result.corpus_chrf2 = metrics::chrf_from_stats(pooled).score;
  return result;
}

EvalResult evaluate_run(const RunReport& report, const corpus::ArtifactStore& store,
                        const References& refs, const std::vector<Metric>& metric_list,
                        const std::optional<std::string>& lang, metrics::NormProfile profile) {
  std::vector<std::pair<std::string, std::string>> hyps;
  for (const auto& out : report.outputs) {
    if (lang && out.lang != *lang) continue;
    const bool seen = std::any_of(hyps.begin(), hyps.end(),
                                  [&](const auto& h) { return h.first == out.talk_id; });
    if (!seen) hyps.emplace_back(out.talk_id, store.get(out.key));
  }
  return evaluate_outputs(hyps, refs, metric_list, profile);
}

}  // namespace lfp::pipeline
