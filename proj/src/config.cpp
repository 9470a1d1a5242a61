#include "lfp/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

extern char** environ;

namespace lfp::pipeline {

namespace {

// Reads fields of one JSON object and rejects keys nobody asked for.
class ObjectReader {
public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path(key) + ": " + e.what());
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const {
    return where_.empty() ? key : where_ + "." + key;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError("unknown config key: " + path(key));
    }
  }

private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void require_positive(double v, const std::string& field) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(field + " must be positive");
}

}  // namespace

const backends::BackendSpec* PipelineConfig::find_backend(const std::string& id) const {
  auto it = std::find_if(backends.begin(), backends.end(),
                         [&](const auto& b) { return b.id == id; });
  return it == backends.end() ? nullptr : &*it;
}

void PipelineConfig::validate() const {
  require_positive(chunk_size_s.offline, "chunk_size_s.offline");
  require_positive(chunk_size_s.if_asr, "chunk_size_s.if_asr");
  require_positive(chunk_size_s.if_st, "chunk_size_s.if_st");
  require_positive(chunk_size_s.qa, "chunk_size_s.qa");
  require_positive(truncation_cap_s, "truncation_cap_s");
  require_positive(min_split_part_s, "min_split_part_s");
  if (fusion_token_budget == 0) throw ConfigError("fusion_token_budget must be positive");
  if (top_k == 0) throw ConfigError("top_k must be positive");
  if (ape_sample_n == 0) throw ConfigError("ape_sample_n must be positive");
  if (!(unanswerable_fraction > 0.0 && unanswerable_fraction < 1.0)) {
    throw ConfigError("unanswerable_fraction must be in (0, 1)");
  }
  if (grid_sizes.empty()) throw ConfigError("grid_sizes must not be empty");
  for (double s : grid_sizes) require_positive(s, "grid_sizes");
  if (max_in_flight == 0) throw ConfigError("max_in_flight must be positive");
  if (talk_workers == 0) throw ConfigError("talk_workers must be positive");
  if (max_tokens <= 0) throw ConfigError("max_tokens must be positive");
  if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  if (asr_system_ids.empty()) throw ConfigError("asr_system_ids must not be empty");
  if (target_lang.empty()) throw ConfigError("target_lang must not be empty");

  std::set<std::string> ids;
  for (const auto& b : backends) {
    try {
      b.validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("backends: ") + e.what());
    }
    if (!ids.insert(b.id).second) throw ConfigError("backends: duplicate id " + b.id);
  }
  std::set<std::string> systems;
  for (const auto& id : asr_system_ids) {
    if (!systems.insert(id).second) throw ConfigError("asr_system_ids: duplicate id " + id);
    const auto* spec = find_backend(id);
    if (spec == nullptr) throw ConfigError("asr_system_ids: no backend named " + id);
    if (spec->kind != backends::Kind::asr) throw ConfigError("asr_system_ids: " + id + " is not asr");
  }
}

json config_to_json(const PipelineConfig& c) {
  json backends = json::array();
  for (const auto& b : c.backends) backends.push_back(backends::spec_to_json(b));
  return {
      {"chunk_size_s",
       {{"offline", c.chunk_size_s.offline},
        {"if_asr", c.chunk_size_s.if_asr},
        {"if_st", c.chunk_size_s.if_st},
        {"qa", c.chunk_size_s.qa}}},
      {"truncation_cap_s", c.truncation_cap_s},
      {"min_split_part_s", c.min_split_part_s},
      {"vad",
       {{"on_threshold", c.vad.on_threshold},
        {"off_threshold", c.vad.off_threshold},
        {"min_speech_s", c.vad.min_speech_s},
        {"min_gap_s", c.vad.min_gap_s}}},
      {"context_sizes",
       {{"ape", c.context_sizes.ape},
        {"if_asr", c.context_sizes.if_asr},
        {"if_st", c.context_sizes.if_st},
        {"edit_zh", c.context_sizes.edit_zh}}},
      {"fusion_token_budget", c.fusion_token_budget},
      {"asr_system_ids", c.asr_system_ids},
      {"roles",
       {{"vad", c.roles.vad},
        {"llm", c.roles.llm},
        {"mt", c.roles.mt},
        {"qe", c.roles.qe},
        {"tts", c.roles.tts},
        {"if_model", c.roles.if_model}}},
      {"backends", backends},
      {"top_k", c.top_k},
      {"ape_sample_n", c.ape_sample_n},
      {"unanswerable_fraction", c.unanswerable_fraction},
      {"seed", c.seed},
      {"grid_sizes", c.grid_sizes},
      {"max_in_flight", c.max_in_flight},
      {"talk_workers", c.talk_workers},
      {"max_tokens", c.max_tokens},
      {"temperature", c.temperature},
      {"target_lang", c.target_lang},
      {"wer_profile", c.wer_profile},
  };
}

PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  ObjectReader top(j, "");
  if (const json* sub = top.sub("chunk_size_s")) {
    ObjectReader r(*sub, "chunk_size_s");
    r.read("offline", c.chunk_size_s.offline);
    r.read("if_asr", c.chunk_size_s.if_asr);
    r.read("if_st", c.chunk_size_s.if_st);
    r.read("qa", c.chunk_size_s.qa);
    r.finish();
  }
  top.read("truncation_cap_s", c.truncation_cap_s);
  top.read("min_split_part_s", c.min_split_part_s);
  if (const json* sub = top.sub("vad")) {
    ObjectReader r(*sub, "vad");
    r.read("on_threshold", c.vad.on_threshold);
    r.read("off_threshold", c.vad.off_threshold);
    r.read("min_speech_s", c.vad.min_speech_s);
    r.read("min_gap_s", c.vad.min_gap_s);
    r.finish();
  }
  if (const json* sub = top.sub("context_sizes")) {
    ObjectReader r(*sub, "context_sizes");
    r.read("ape", c.context_sizes.ape);
    r.read("if_asr", c.context_sizes.if_asr);
    r.read("if_st", c.context_sizes.if_st);
    r.read("edit_zh", c.context_sizes.edit_zh);
    r.finish();
  }
  top.read("fusion_token_budget", c.fusion_token_budget);
  top.read("asr_system_ids", c.asr_system_ids);
  if (const json* sub = top.sub("roles")) {
    ObjectReader r(*sub, "roles");
    r.read("vad", c.roles.vad);
    r.read("llm", c.roles.llm);
    r.read("mt", c.roles.mt);
    r.read("qe", c.roles.qe);
    r.read("tts", c.roles.tts);
    r.read("if_model", c.roles.if_model);
    r.finish();
  }
  if (const json* sub = top.sub("backends")) {
    if (!sub->is_array()) throw ConfigError("backends: expected an array");
    for (const auto& b : *sub) {
      try {
        c.backends.push_back(backends::spec_from_json(b));
      } catch (const std::exception& e) {
        throw ConfigError(std::string("backends: ") + e.what());
      }
    }
  }
  top.read("top_k", c.top_k);
  top.read("ape_sample_n", c.ape_sample_n);
  top.read("unanswerable_fraction", c.unanswerable_fraction);
  top.read("seed", c.seed);
  top.read("grid_sizes", c.grid_sizes);
  top.read("max_in_flight", c.max_in_flight);
  top.read("talk_workers", c.talk_workers);
  top.read("max_tokens", c.max_tokens);
  top.read("temperature", c.temperature);
  top.read("target_lang", c.target_lang);
  top.read("wer_profile", c.wer_profile);
  top.finish();
  return c;
}

json apply_env_overrides(json config, const std::map<std::string, std::string>& env) {
  for (const auto& [name, value] : env) {
    if (!name.starts_with("LFP_") || name.size() == 4) continue;
    std::string key = text::to_lower_ascii(std::string_view(name).substr(4));
    std::vector<std::string> path;
    std::size_t pos = 0;
    for (;;) {
      const auto sep = key.find("__", pos);
      path.push_back(key.substr(pos, sep == std::string::npos ? std::string::npos : sep - pos));
      if (sep == std::string::npos) break;
      pos = sep + 2;
    }
    json parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded()) parsed = value;

    json* node = &config;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      if (!node->is_object()) throw ConfigError(name + ": cannot descend into a non-object");
      node = &(*node)[path[i]];
      if (node->is_null()) *node = json::object();
    }
    if (!node->is_object()) throw ConfigError(name + ": cannot descend into a non-object");
    (*node)[path.back()] = std::move(parsed);
  }
  return config;
}

std::map<std::string, std::string> lfp_environment() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    std::string_view entry(*e);
    if (!entry.starts_with("LFP_")) continue;
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    out.emplace(entry.substr(0, eq), entry.substr(eq + 1));
  }
  return out;
}

PipelineConfig load_config(const std::optional<std::filesystem::path>& path,
                           const std::map<std::string, std::string>& env) {
  json j = config_to_json(PipelineConfig{});
  if (path) {
    std::ifstream in(*path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config " + path->string());
    std::ostringstream buf;
    buf << in.rdbuf();
    json file = json::parse(buf.str(), nullptr, false);
    if (file.is_discarded()) throw ConfigError("config " + path->string() + " is not valid JSON");
    if (!file.is_object()) throw ConfigError("config " + path->string() + " must be an object");
    j.merge_patch(file);
  }
  PipelineConfig c = config_from_json(apply_env_overrides(std::move(j), env));
  c.validate();
  return c;
}

std::string config_hash(const PipelineConfig& config) {
  return sha256_hex(config_to_json(config).dump());
}

}  // namespace lfp::pipeline
