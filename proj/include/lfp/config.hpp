#pragma once

// Declarative pipeline configuration: a JSON file mirroring PipelineConfig,
// with LFP_-prefixed environment overrides.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfp/backends.hpp"
#include "lfp/common.hpp"
#include "lfp/segmentation.hpp"

namespace lfp::pipeline {

class ConfigError : public Error {
public:
  using Error::Error;
};

struct ChunkSizes {
  double offline = 25.0;
  double if_asr = 20.0;
  double if_st = 25.0;
  double qa = 60.0;
};

struct ContextSizes {
  std::size_t ape = 0;
  std::size_t if_asr = 5;
  std::size_t if_st = 15;
  bool edit_zh = false;
};

// Backend ids for each single-backend role.
struct Roles {
  std::string vad = "vad";
  std::string llm = "llm";
  std::string mt = "mt";
  std::string qe = "qe";
  std::string tts = "tts";
  // Speech LLM for the instruction-following tasks; the first ASR system
  // when empty.
  std::string if_model;
};

struct PipelineConfig {
  ChunkSizes chunk_size_s;
  double truncation_cap_s = segmentation::kLongAudioCapS;
  double min_split_part_s = 1.0;
  segmentation::HysteresisParams vad;
  ContextSizes context_sizes;
  std::size_t fusion_token_budget = 4096;
  std::vector<std::string> asr_system_ids;
  Roles roles;
  std::vector<backends::BackendSpec> backends;
  std::size_t top_k = 500000;
  std::size_t ape_sample_n = 100000;
  double unanswerable_fraction = 0.05;
  std::uint64_t seed = 0;
  std::vector<double> grid_sizes = {5.0, 10.0, 15.0, 20.0, 25.0};
  std::size_t max_in_flight = 4;
  std::size_t talk_workers = 2;
  int max_tokens = 1024;
  double temperature = 0.0;
  std::string target_lang = "de";  // used when a talk lists no target
  std::string wer_profile = "jiwer_like";

  // Throws ConfigError naming the offending field.
  void validate() const;
  const backends::BackendSpec* find_backend(const std::string& id) const;
};

using json = nlohmann::json;

json config_to_json(const PipelineConfig& config);
// Unknown keys are rejected. Missing keys keep their defaults.
PipelineConfig config_from_json(const json& j);

using EnvLookup = std::function<std::map<std::string, std::string>()>;

// Every LFP_<KEY> variable overrides the field <key> (lowercased); "__"
// descends into nested objects, e.g. LFP_CHUNK_SIZE_S__OFFLINE=20. Values are
// parsed as JSON when possible and used as strings otherwise.
json apply_env_overrides(json config, const std::map<std::string, std::string>& env);
std::map<std::string, std::string> lfp_environment();

// Reads the file (or starts from defaults when path is empty), applies
// overrides and validates.
PipelineConfig load_config(const std::optional<std::filesystem::path>& path,
                           const std::map<std::string, std::string>& env = lfp_environment());

// SHA-256 of the canonical JSON rendering.
std::string config_hash(const PipelineConfig& config);

}  // namespace lfp::pipeline
