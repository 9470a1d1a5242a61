#pragma once

// Stage graphs for the offline cascade and the instruction-following tasks,
// plus the chunk-size grid search and run evaluation.

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfp/backends.hpp"
#include "lfp/config.hpp"
#include "lfp/corpus.hpp"
#include "lfp/document.hpp"
#include "lfp/metrics.hpp"
#include "lfp/segmentation.hpp"

namespace lfp::pipeline {

// Configured backend clients, each behind its own in-flight cap.
class BackendSet {
public:
  explicit BackendSet(std::size_t max_in_flight = 4) : max_in_flight_(max_in_flight) {}

  static BackendSet from_config(const PipelineConfig& config);

  // A null transport picks one from the endpoint.
  void add(backends::BackendSpec spec, std::shared_ptr<backends::Transport> transport = nullptr);
  bool has(const std::string& id) const { return entries_.contains(id); }
  backends::Client& client(const std::string& id) const;

  // Runs fn(client) while holding one of the backend's in-flight slots.
  template <typename F>
  auto call(const std::string& id, F&& fn) -> decltype(fn(std::declval<backends::Client&>())) {
    Entry& e = entry(id);
    e.slots->acquire();
    struct Release {
      std::counting_semaphore<>* s;
      ~Release() { s->release(); }
    } release{e.slots.get()};
    return fn(*e.client);
  }

  // Exchanges attempted across all backends, retries included.
  std::size_t total_calls() const;

private:
  struct Entry {
    std::unique_ptr<backends::Client> client;
    std::unique_ptr<std::counting_semaphore<>> slots;
  };
  Entry& entry(const std::string& id) const;

  std::size_t max_in_flight_;
  std::map<std::string, std::unique_ptr<Entry>> entries_;
};

enum class Status { ok, fallback, failed, skipped };

std::string_view to_string(Status status);
Status parse_status(std::string_view name);

struct StageResult {
  corpus::Stage stage = corpus::Stage::vad;
  std::string talk_id;
  Status status = Status::ok;
  std::string artifact_key;  // empty for stages that store several artifacts
  std::optional<double> timing_ms;
  nlohmann::json detail = nlohmann::json::object();
};

// The artifact holding a talk's final text for one language.
struct TalkOutput {
  std::string talk_id;
  std::string lang;
  corpus::ArtifactKey key;
};

struct RunSummary {
  std::size_t ok = 0;
  std::size_t fallback = 0;
  std::size_t failed = 0;
};

struct RunReport {
  std::string run_id;
  std::vector<StageResult> stages;
  std::vector<TalkOutput> outputs;
  std::vector<std::string> warnings;
  // False when the run stopped early on request.
  bool complete = true;

  // Worst status over a talk's stages; skipped counts as ok.
  Status talk_status(const std::string& talk_id) const;
  // Counts talks, not stages.
  RunSummary summary() const;
  // 0 all ok, 2 completed with fallbacks, 1 any talk failed.
  int exit_code() const;

  // timing_ms is only rendered on request so reports stay byte-identical
  // across runs.
  nlohmann::json to_json(bool include_timing = false) const;
  static RunReport from_json(const nlohmann::json& j);
};

class IncompleteRunError : public Error {
public:
  using Error::Error;
};

struct RunOptions {
  std::filesystem::path out_dir;
  // Continue a run directory that has artifacts but no report.
  bool resume = false;
  // Stop once every talk has finished this stage; no report is written.
  std::optional<corpus::Stage> stop_after;
  bool include_timing = false;
};

inline constexpr std::string_view kReportName = "report.json";

std::filesystem::path report_path(const std::filesystem::path& out_dir, const std::string& run_id);

// Run id for a manifest under a config: manifest bytes plus config hash.
std::string run_id_for(const corpus::RunManifest& manifest, const PipelineConfig& config);

// VAD -> constrained chunks -> ASR on every system -> LLM fusion -> document
// -> sentences -> MT -> APE, per talk. Every stage output goes to the
// artifact store under out_dir; cached artifacts are reused. Writes the
// report next to the artifacts when the run completes.
RunReport run_offline(const corpus::RunManifest& manifest, const PipelineConfig& config,
                      BackendSet& backends, const RunOptions& options);

enum class IfTask { asr, st, sqa, ssum };

std::string_view to_string(IfTask task);
IfTask parse_if_task(std::string_view name);

// asr/st: VAD chunks (20 s / 25 s), per-chunk inference, assembly and
// context post-editing (5 / 15 sentences). sqa/ssum: the capped 60 s plan
// sent as one request per talk; summaries are post-edited as one record.
RunReport run_if(const corpus::RunManifest& manifest, const PipelineConfig& config,
                 BackendSet& backends, IfTask task, const std::optional<std::string>& question,
                 const RunOptions& options);

// One line per chunk: {"talk_id", "start_s", "end_s", "min_conf", "policy",
// "truncated_at_s", "max_chunk_s"}. An empty plan renders as no lines.
std::string plan_to_jsonl(const segmentation::ChunkPlan& plan);
segmentation::ChunkPlan plan_from_jsonl(std::string_view text);

// One line per sentence: {"talk_id", "index", "source", "mt", "ape", "lang"}
// with null for missing mt/ape.
std::string records_to_jsonl(const std::vector<document::SentenceRecord>& records);
std::vector<document::SentenceRecord> records_from_jsonl(std::string_view text);

// talk_id -> reference text.
using References = std::map<std::string, std::string>;

// JSONL lines {"talk_id": ..., "text": ...}.
References load_references(const std::filesystem::path& path);

enum class Metric { wer, chrf2 };

std::string_view to_string(Metric metric);
Metric parse_metric(std::string_view name);

struct GridResult {
  metrics::ScoreTable table;
  std::vector<std::string> warnings;
};

// One row per chunk size; one column per talk plus a corpus column when
// there are several talks. Talks without a reference are left out.
GridResult grid_search_chunks(const corpus::RunManifest& manifest, const PipelineConfig& config,
                              BackendSet& backends, const std::vector<double>& sizes,
                              Metric metric, const References& refs);

class EvaluationError : public Error {
public:
  EvaluationError(std::string message, std::vector<std::string> missing)
      : Error(std::move(message)), missing_(std::move(missing)) {}
  const std::vector<std::string>& missing() const { return missing_; }

private:
  std::vector<std::string> missing_;
};

struct TalkScore {
  std::string talk_id;
  std::optional<metrics::WerBreakdown> wer;
  std::optional<double> chrf2;
};

struct EvalResult {
  std::vector<TalkScore> talks;
  std::optional<double> corpus_wer;    // errors / reference words over all talks
  std::optional<double> corpus_chrf2;  // pooled n-gram statistics
  std::vector<std::string> excluded;
  std::vector<std::string> warnings;

  // Scores artifact: one line per talk and metric, then the corpus rows
  // under talk_id "corpus". {"talk_id", "metric", "value", "detail"}; WER
  // values are fractions.
  std::string to_jsonl() const;
};

// Hypotheses are (talk_id, text) in output order. Lines pair up as
// sentences for chrF when both sides have the same number of lines.
EvalResult evaluate_outputs(const std::vector<std::pair<std::string, std::string>>& hypotheses,
                            const References& refs, const std::vector<Metric>& metrics,
                            metrics::NormProfile profile = metrics::NormProfile::jiwer_like);

// Scores the final outputs of a run, optionally for one language only.
EvalResult evaluate_run(const RunReport& report, const corpus::ArtifactStore& store,
                        const References& refs, const std::vector<Metric>& metrics,
                        const std::optional<std::string>& lang = {},
                        metrics::NormProfile profile = metrics::NormProfile::jiwer_like);

}  // namespace lfp::pipeline
