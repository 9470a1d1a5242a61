// lfp: command-line front end for the long-form speech pipeline.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lfp/backends.hpp"
#include "lfp/config.hpp"
#include "lfp/corpus.hpp"
#include "lfp/curation.hpp"
#include "lfp/document.hpp"
#include "lfp/metrics.hpp"
#include "lfp/pipeline.hpp"
#include "lfp/refinement.hpp"
#include "lfp/segmentation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lfp;

namespace {

struct Common {
  std::string config;
  std::string manifest;
  std::string out;
  bool resume = false;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Pipeline config (JSON)");
  app->add_option("--manifest", c.manifest, "Talk manifest (JSONL)");
  app->add_option("--out", c.out, "Output directory");
  app->add_flag("--resume", c.resume, "Continue an interrupted run");
  app->add_option("--seed", c.seed, "Seed for sampling");
}

pipeline::PipelineConfig load(const Common& c) {
  std::optional<fs::path> path;
  if (!c.config.empty()) path = c.config;
  auto cfg = pipeline::load_config(path);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

corpus::RunManifest manifest(const Common& c) {
  if (c.manifest.empty()) throw std::invalid_argument("--manifest is required");
  return corpus::load_manifest(c.manifest);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw corpus::StorageError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string> read_lines(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

template <typename F>
void for_each_jsonl(const std::string& path, F&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw corpus::StorageError("cannot read " + path);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) {
    ++n;
    if (text::trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(path + ":" + std::to_string(n) + ": invalid JSON");
    fn(j);
  }
}

// Writes to <out>/<name> when --out is set, otherwise to stdout.
class Sink {
public:
  Sink(const Common& c, const std::string& name) {
    if (c.out.empty()) return;
    fs::create_directories(c.out);
    file_.open(fs::path(c.out) / name, std::ios::binary | std::ios::trunc);
    if (!file_) throw corpus::StorageError("cannot write " + (fs::path(c.out) / name).string());
  }
  std::ostream& os() { return file_.is_open() ? file_ : std::cout; }

private:
  std::ofstream file_;
};

segmentation::ChunkPlan plan_talk(const corpus::TalkRef& talk, const pipeline::PipelineConfig& cfg,
                                  pipeline::BackendSet& be, segmentation::Policy policy,
                                  double chunk_size) {
  if (policy == segmentation::Policy::if_qa60) {
    auto plan = segmentation::plan_long_audio_chunks(talk.duration_s, chunk_size, cfg.truncation_cap_s);
    plan.talk_id = talk.talk_id;
    return plan;
  }
  auto track = be.call(cfg.roles.vad, [&](backends::Client& c) {
    return c.detect_speech(talk.audio_path, talk.duration_s);
  });
  track.talk_id = talk.talk_id;
  auto plan = segmentation::constrain_segments(segmentation::frames_to_segments(track, cfg.vad),
                                               track, chunk_size, cfg.min_split_part_s, policy);
  plan.talk_id = talk.talk_id;
  return plan;
}

double policy_size(const pipeline::PipelineConfig& cfg, segmentation::Policy policy) {
  switch (policy) {
    case segmentation::Policy::if_asr20: return cfg.chunk_size_s.if_asr;
    case segmentation::Policy::if_st25: return cfg.chunk_size_s.if_st;
    case segmentation::Policy::if_qa60: return cfg.chunk_size_s.qa;
    default: return cfg.chunk_size_s.offline;
  }
}

std::vector<pipeline::Metric> parse_metrics(const std::vector<std::string>& names) {
  std::vector<pipeline::Metric> out;
  for (const auto& n : names) out.push_back(pipeline::parse_metric(n));
  return out;
}

json pair_to_json(const curation::ScoredPair& p) {
  return {{"source", p.source}, {"target", p.target}, {"qe_score", p.qe_score}, {"origin", p.origin}};
}

curation::ScoredPair pair_from_json(const json& j) {
  curation::ScoredPair p;
  p.source = j.at("source").get<std::string>();
  p.target = j.at("target").get<std::string>();
  p.qe_score = j.value("qe_score", 0.0);
  p.origin = j.value("origin", std::string());
  return p;
}

json qa_to_json(const curation::QaExample& q) {
  return {{"segment_id", q.segment_id},
          {"question", q.question},
          {"answer", q.answer},
          {"answerable", q.answerable},
          {"lang", q.lang}};
}

curation::QaExample qa_from_json(const json& j) {
  curation::QaExample q;
  q.segment_id = j.value("segment_id", std::string());
  q.question = j.at("question").get<std::string>();
  q.answer = j.at("answer").get<std::string>();
  q.answerable = j.value("answerable", text::trim(q.answer) != curation::kNotAnswerable);
  q.lang = j.value("lang", std::string());
  return q;
}

int report_and_exit(const pipeline::RunReport& report, const Common& c) {
  const auto s = report.summary();
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  std::cerr << report.run_id << ": ok " << s.ok << ", fallback " << s.fallback << ", failed "
            << s.failed << (report.complete ? "" : " (stopped early)") << "\n";
  if (report.complete) {
    std::cout << pipeline::report_path(c.out, report.run_id).string() << "\n";
    return report.exit_code();
  }
  return report.summary().failed > 0 ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Long-form speech translation and instruction-following pipeline"};
  app.require_subcommand(1);
  Common c;

  // segment
  auto* segment = app.add_subcommand("segment", "Plan chunks for every talk");
  add_common(segment, c);
  std::string policy_name = "offline25";
  std::optional<double> chunk_size;
  segment->add_option("--policy", policy_name, "offline25, if_asr20, if_st25 or if_qa60");
  segment->add_option("--chunk-size", chunk_size, "Override the policy chunk size (s)");

  // transcribe
  auto* transcribe = app.add_subcommand("transcribe", "Segment and transcribe every talk");
  add_common(transcribe, c);
  std::vector<std::string> systems;
  transcribe->add_option("--policy", policy_name, "Segmentation policy");
  transcribe->add_option("--chunk-size", chunk_size, "Override the policy chunk size (s)");
  transcribe->add_option("--system", systems, "ASR system ids (default: all configured)");

  // fuse
  auto* fuse = app.add_subcommand("fuse", "Fuse per-chunk hypotheses with the LLM");
  add_common(fuse, c);
  std::string input;
  bool prompts_only = false;
  fuse->add_option("--input", input, "Hypotheses JSONL from transcribe")->required();
  fuse->add_flag("--prompts-only", prompts_only, "Print the fusion prompts without calling the LLM");

  // translate
  auto* translate = app.add_subcommand("translate", "Translate one sentence per line");
  add_common(translate, c);
  std::string src_lang = "en";
  std::string tgt_lang = "de";
  translate->add_option("--input", input, "Source sentences, one per line")->required();
  translate->add_option("--src", src_lang, "Source language");
  translate->add_option("--tgt", tgt_lang, "Target language");

  // postedit
  auto* postedit = app.add_subcommand("postedit", "Post-edit a document sentence by sentence");
  add_common(postedit, c);
  std::string mt_input;
  std::string mode_name = "ape_offline";
  std::optional<std::size_t> context_size;
  postedit->add_option("--input", input, "Source sentences, one per line")->required();
  postedit->add_option("--mt", mt_input, "Draft translations, one per line");
  postedit->add_option("--mode", mode_name, "ape_offline, if_asr, if_st or if_ssum");
  postedit->add_option("--context", context_size, "Prior sentence pairs per prompt");
  postedit->add_option("--lang", tgt_lang, "Language of the edited text");

  // run-offline
  auto* run_offline = app.add_subcommand("run-offline", "Run the offline cascade");
  add_common(run_offline, c);
  std::optional<std::string> stop_after;
  bool timing = false;
  run_offline->add_option("--stop-after", stop_after, "Stop after this stage (no report)");
  run_offline->add_flag("--timing", timing, "Include stage timings in the report");

  // run-if
  auto* run_if = app.add_subcommand("run-if", "Run an instruction-following task");
  add_common(run_if, c);
  std::string task_name;
  std::optional<std::string> question;
  run_if->add_option("--task", task_name, "asr, st, sqa or ssum")->required();
  run_if->add_option("--question", question, "Question for sqa");
  run_if->add_option("--stop-after", stop_after, "Stop after this stage (no report)");
  run_if->add_flag("--timing", timing, "Include stage timings in the report");

  // grid-chunks
  auto* grid = app.add_subcommand("grid-chunks", "Score ASR across chunk sizes");
  add_common(grid, c);
  std::string refs_path;
  std::vector<double> sizes;
  std::string metric_name = "wer";
  std::string format_name = "tsv";
  grid->add_option("--refs", refs_path, "References JSONL {talk_id, text}")->required();
  grid->add_option("--sizes", sizes, "Chunk sizes in seconds")->delimiter(',');
  grid->add_option("--metric", metric_name, "wer or chrf2");
  grid->add_option("--format", format_name, "tsv or markdown");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score a finished run against references");
  add_common(evaluate, c);
  std::string report_file;
  std::vector<std::string> metric_names = {"wer", "chrf2"};
  std::optional<std::string> eval_lang;
  evaluate->add_option("--report", report_file, "report.json of the run")->required();
  evaluate->add_option("--refs", refs_path, "References JSONL {talk_id, text}")->required();
  evaluate->add_option("--metrics", metric_names, "wer, chrf2")->delimiter(',');
  evaluate->add_option("--lang", eval_lang, "Only score outputs in this language");

  // curate
  auto* curate = app.add_subcommand("curate", "Training-data curation");
  curate->require_subcommand(1);
  add_common(curate, c);

  auto* filter = curate->add_subcommand("filter", "Keep the k best pairs by QE score");
  add_common(filter, c);
  std::optional<std::size_t> k;
  filter->add_option("--input", input, "Scored pairs JSONL")->required();
  filter->add_option("--k", k, "Pairs to keep (default: config top_k)");

  auto* qe_score = curate->add_subcommand("qe-score", "Score pairs with the QE backend");
  add_common(qe_score, c);
  qe_score->add_option("--input", input, "Pairs JSONL {source, target}")->required();

  auto* triplets = curate->add_subcommand("ape-triplets", "Sample pairs and add MT hypotheses");
  add_common(triplets, c);
  std::optional<std::size_t> sample_n;
  triplets->add_option("--input", input, "Pairs JSONL")->required();
  triplets->add_option("--n", sample_n, "Sample size (default: config ape_sample_n)");
  triplets->add_option("--src", src_lang, "Source language");
  triplets->add_option("--tgt", tgt_lang, "Target language");

  auto* balance = curate->add_subcommand("balance", "Cap the unanswerable share of QA data");
  add_common(balance, c);
  std::optional<double> fraction;
  balance->add_option("--input", input, "QA JSONL")->required();
  balance->add_option("--fraction", fraction, "Unanswerable share (default: config)");

  auto* prompt = curate->add_subcommand("prompt", "Render a data-augmentation prompt");
  add_common(prompt, c);
  std::string kind_name;
  std::vector<std::string> prompt_args;
  std::vector<std::string> prompt_arg_files;
  prompt->add_option("--kind", kind_name, "sqa, ssum_translate or st_translate")->required();
  prompt->add_option("--arg", prompt_args, "key=value");
  prompt->add_option("--arg-file", prompt_arg_files, "key=path (value read from the file)");

  auto* parse_sqa = curate->add_subcommand("parse-sqa", "Parse a generated SQA response");
  add_common(parse_sqa, c);
  std::string segment_id;
  std::string qa_lang;
  parse_sqa->add_option("--input", input, "Raw model response")->required();
  parse_sqa->add_option("--segment-id", segment_id, "Segment id for the examples");
  parse_sqa->add_option("--lang", qa_lang, "Language tag for the examples");

  auto* tts = curate->add_subcommand("tts-manifest", "Split abstracts into TTS jobs");
  add_common(tts, c);
  tts->add_option("--input", input, "Abstracts JSONL {id, text}")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (segment->parsed() || transcribe->parsed()) {
      const auto cfg = load(c);
      auto be = pipeline::BackendSet::from_config(cfg);
      const auto m = manifest(c);
      const auto policy = segmentation::parse_policy(policy_name);
      const double size = chunk_size.value_or(policy_size(cfg, policy));
      if (segment->parsed()) {
        Sink sink(c, "segments.jsonl");
        for (const auto& talk : m.talks) {
          sink.os() << pipeline::plan_to_jsonl(plan_talk(talk, cfg, be, policy, size));
        }
        return 0;
      }
      if (systems.empty()) systems = cfg.asr_system_ids;
      Sink sink(c, "hypotheses.jsonl");
      for (const auto& talk : m.talks) {
        const auto plan = plan_talk(talk, cfg, be, policy, size);
        for (std::size_t i = 0; i < plan.chunks.size(); ++i) {
          json texts = json::object();
          for (const auto& s : systems) {
            texts[s] = be.call(s, [&](backends::Client& client) {
              return client.transcribe(talk.audio_path, plan.chunks[i].start_s,
                                       plan.chunks[i].end_s, talk.source_lang)
                  .text;
            });
          }
          sink.os() << json{{"talk_id", talk.talk_id},
                            {"chunk_index", i},
                            {"start_s", plan.chunks[i].start_s},
                            {"end_s", plan.chunks[i].end_s},
                            {"texts", texts}}
                           .dump()
                    << "\n";
        }
      }
      return 0;
    }

    if (fuse->parsed()) {
      const auto cfg = load(c);
      std::vector<std::string> talk_order;
      std::map<std::string, std::vector<document::HypothesisSet>> by_talk;
      for_each_jsonl(input, [&](const json& j) {
        document::HypothesisSet set;
        set.talk_id = j.at("talk_id").get<std::string>();
        set.chunk_index = j.at("chunk_index").get<std::size_t>();
        set.texts = j.at("texts").get<std::map<std::string, std::string>>();
        if (!by_talk.contains(set.talk_id)) talk_order.push_back(set.talk_id);
        by_talk[set.talk_id].push_back(std::move(set));
      });
      std::optional<pipeline::BackendSet> be;
      if (!prompts_only) be = pipeline::BackendSet::from_config(cfg);
      Sink sink(c, prompts_only ? "fusion_prompts.jsonl" : "fused.jsonl");
      int code = 0;
      for (const auto& talk_id : talk_order) {
        const auto& chunks = by_talk[talk_id];
        std::vector<std::string> ids;
        for (const auto& id : cfg.asr_system_ids) {
          if (chunks.front().texts.contains(id)) ids.push_back(id);
        }
        if (ids.empty()) {
          for (const auto& [id, text] : chunks.front().texts) ids.push_back(id);
        }
        const auto blocks = refinement::plan_fusion_blocks(chunks, ids, cfg.fusion_token_budget);
        std::vector<std::pair<std::size_t, std::string>> parts;
        for (std::size_t b = 0; b < blocks.size(); ++b) {
          if (prompts_only) {
            sink.os() << json{{"talk_id", talk_id}, {"block", b}, {"prompt", blocks[b].rendered_prompt}}
                             .dump()
                      << "\n";
            continue;
          }
          std::string fused;
          try {
            fused = refinement::parse_fusion_response(be->call(cfg.roles.llm, [&](backends::Client& cl) {
              return cl.complete(blocks[b].rendered_prompt, cfg.max_tokens, cfg.temperature);
            }));
          } catch (const Error& e) {
            std::cerr << "warning: " << talk_id << " block " << b << ": " << e.what() << "\n";
            fused = blocks[b].per_system_texts.front().second;
            code = 2;
          }
          parts.emplace_back(blocks[b].first, fused);
        }
        if (!prompts_only) {
          sink.os() << json{{"talk_id", talk_id}, {"text", document::assemble_talk(parts).text}}.dump()
                    << "\n";
        }
      }
      return code;
    }

    if (translate->parsed()) {
      const auto cfg = load(c);
      auto be = pipeline::BackendSet::from_config(cfg);
      Sink sink(c, "translations.txt");
      for (const auto& line : read_lines(input)) {
        sink.os() << be.call(cfg.roles.mt, [&](backends::Client& cl) {
          return cl.translate(line, src_lang, tgt_lang);
        }) << "\n";
      }
      return 0;
    }

    if (postedit->parsed()) {
      const auto cfg = load(c);
      auto be = pipeline::BackendSet::from_config(cfg);
      const auto sources = read_lines(input);
      std::vector<std::string> drafts;
      if (!mt_input.empty()) {
        drafts = read_lines(mt_input);
        if (drafts.size() != sources.size()) {
          throw std::invalid_argument("--input and --mt have different line counts");
        }
      }
      std::vector<document::SentenceRecord> records;
      for (std::size_t i = 0; i < sources.size(); ++i) {
        document::SentenceRecord r;
        r.index = i;
        r.source = sources[i];
        if (!drafts.empty()) r.mt = drafts[i];
        r.lang = tgt_lang;
        records.push_back(std::move(r));
      }
      refinement::PostEditOptions options;
      options.mode = refinement::parse_mode(mode_name);
      options.edit_zh = cfg.context_sizes.edit_zh;
      switch (options.mode) {
        case refinement::PostEditMode::if_asr: options.context_size = cfg.context_sizes.if_asr; break;
        case refinement::PostEditMode::if_st: options.context_size = cfg.context_sizes.if_st; break;
        default: options.context_size = cfg.context_sizes.ape; break;
      }
      if (context_size) options.context_size = *context_size;
      const auto result = refinement::postedit_document(records, options, [&](const std::string& p) {
        return be.call(cfg.roles.llm, [&](backends::Client& cl) {
          return cl.complete(p, cfg.max_tokens, cfg.temperature, {"<|im_end|>"});
        });
      });
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
      Sink sink(c, "postedited.txt");
      for (const auto& r : result.sentences) sink.os() << r.ape.value_or(r.source) << "\n";
      return result.fallbacks.empty() ? 0 : 2;
    }

    if (run_offline->parsed() || run_if->parsed()) {
      const auto cfg = load(c);
      auto be = pipeline::BackendSet::from_config(cfg);
      pipeline::RunOptions options;
      options.out_dir = c.out.empty() ? fs::path("lfp-runs") : fs::path(c.out);
      c.out = options.out_dir.string();
      options.resume = c.resume;
      options.include_timing = timing;
      if (stop_after) options.stop_after = corpus::parse_stage(*stop_after);
      const auto m = manifest(c);
      const auto report =
          run_offline->parsed()
              ? pipeline::run_offline(m, cfg, be, options)
              : pipeline::run_if(m, cfg, be, pipeline::parse_if_task(task_name), question, options);
      return report_and_exit(report, c);
    }

    if (grid->parsed()) {
      const auto cfg = load(c);
      auto be = pipeline::BackendSet::from_config(cfg);
      const auto result =
          pipeline::grid_search_chunks(manifest(c), cfg, be, sizes.empty() ? cfg.grid_sizes : sizes,
                                       pipeline::parse_metric(metric_name),
                                       pipeline::load_references(refs_path));
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
      const auto format = metrics::parse_table_format(format_name);
      Sink sink(c, format == metrics::TableFormat::tsv ? "grid.tsv" : "grid.md");
      sink.os() << metrics::emit_score_table(result.table, format);
      return 0;
    }

    if (evaluate->parsed()) {
      const auto cfg = load(c);
      const fs::path report_path(report_file);
      const auto report = pipeline::RunReport::from_json(json::parse(read_file(report_file)));
      corpus::ArtifactStore store(report_path.parent_path().parent_path());
      const auto result = pipeline::evaluate_run(report, store, pipeline::load_references(refs_path),
                                                 parse_metrics(metric_names), eval_lang,
                                                 metrics::parse_profile(cfg.wer_profile));
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
      const std::string payload = result.to_jsonl();
      store.put({report.run_id, corpus::Stage::scores, "corpus", eval_lang.value_or("all") + ".jsonl"},
                payload, true);
      Sink sink(c, "scores.jsonl");
      sink.os() << payload;
      return 0;
    }

    if (filter->parsed()) {
      const auto cfg = load(c);
      curation::TopKSelector selector(k.value_or(cfg.top_k));
      for_each_jsonl(input, [&](const json& j) { selector.push(pair_from_json(j)); });
      const std::size_t seen = selector.seen();
      const std::size_t wanted = k.value_or(cfg.top_k);
      Sink sink(c, "filtered.jsonl");
      for (const auto& p : selector.finish()) sink.os() << pair_to_json(p).dump() << "\n";
      if (seen < wanted) std::cerr << "warning: only " << seen << " pairs for k = " << wanted << "\n";
      return 0;
    }

    if (qe_score->parsed()) {
      const auto cfg = load(c);
      auto be = pipeline::BackendSet::from_config(cfg);
      Sink sink(c, "scored.jsonl");
      for_each_jsonl(input, [&](const json& j) {
        auto p = pair_from_json(j);
        p.qe_score = be.call(cfg.roles.qe, [&](backends::Client& cl) {
          return cl.estimate_quality(p.source, p.target);
        });
        sink.os() << pair_to_json(p).dump() << "\n";
      });
      return 0;
    }

    if (triplets->parsed()) {
      const auto cfg = load(c);
      auto be = pipeline::BackendSet::from_config(cfg);
      std::vector<curation::ScoredPair> pairs;
      for_each_jsonl(input, [&](const json& j) { pairs.push_back(pair_from_json(j)); });
      const auto result = curation::make_ape_triplets(
          pairs, sample_n.value_or(cfg.ape_sample_n),
          [&](const std::string& s) {
            return be.call(cfg.roles.mt, [&](backends::Client& cl) { return cl.translate(s, src_lang, tgt_lang); });
          },
          cfg.seed);
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
      Sink sink(c, "triplets.jsonl");
      for (const auto& t : result.triplets) {
        sink.os() << json{{"source", t.source}, {"hypothesis", t.hypothesis}, {"reference", t.reference}}.dump()
                  << "\n";
      }
      return result.shortfall == 0 ? 0 : 2;
    }

    if (balance->parsed()) {
      const auto cfg = load(c);
      std::vector<curation::QaExample> examples;
      for_each_jsonl(input, [&](const json& j) { examples.push_back(qa_from_json(j)); });
      const auto result = curation::balance_unanswerable(
          examples, fraction.value_or(cfg.unanswerable_fraction), cfg.seed);
      std::cerr << "unanswerable kept " << result.unanswerable_kept << " of target "
                << result.unanswerable_target << (result.shortfall ? " (shortfall)" : "") << "\n";
      Sink sink(c, "balanced.jsonl");
      for (const auto& q : result.examples) sink.os() << qa_to_json(q).dump() << "\n";
      return 0;
    }

    if (prompt->parsed()) {
      std::map<std::string, std::string> args;
      for (const auto& a : prompt_args) {
        const auto eq = a.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--arg expects key=value: " + a);
        args[a.substr(0, eq)] = a.substr(eq + 1);
      }
      for (const auto& a : prompt_arg_files) {
        const auto eq = a.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--arg-file expects key=path: " + a);
        args[a.substr(0, eq)] = read_file(a.substr(eq + 1));
      }
      const auto rendered =
          curation::build_augmentation_prompt(curation::parse_prompt_kind(kind_name), args);
      Sink sink(c, "prompt.json");
      sink.os() << json{{"system", rendered.system}, {"user", rendered.user}}.dump(2) << "\n";
      return 0;
    }

    if (parse_sqa->parsed()) {
      Sink sink(c, "qa.jsonl");
      for (const auto& q : curation::parse_sqa_json(read_file(input), segment_id, qa_lang)) {
        sink.os() << qa_to_json(q).dump() << "\n";
      }
      return 0;
    }

    if (tts->parsed()) {
      std::vector<std::pair<std::string, std::string>> abstracts;
      for_each_jsonl(input, [&](const json& j) {
        abstracts.emplace_back(j.at("id").get<std::string>(), j.at("text").get<std::string>());
      });
      Sink sink(c, "tts_jobs.jsonl");
      for (const auto& job : curation::abstracts_to_tts_manifest(abstracts)) {
        sink.os() << json{{"abstract_id", job.abstract_id},
                          {"sentence_index", job.sentence_index},
                          {"text", job.text}}
                         .dump()
                  << "\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
