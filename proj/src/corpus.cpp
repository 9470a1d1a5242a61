#include "lfp/corpus.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace lfp::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

MissingFieldError::MissingFieldError(std::size_t line, std::string field)
    : ManifestError("manifest line " + std::to_string(line) + ": missing field \"" + field + "\"",
                    {line}),
      field_(std::move(field)) {}

DuplicateTalkError::DuplicateTalkError(std::string talk_id, std::size_t first_line,
                                       std::size_t second_line)
    : ManifestError("manifest: duplicate talk_id \"" + talk_id + "\" on lines " +
                        std::to_string(first_line) + " and " + std::to_string(second_line),
                    {first_line, second_line}),
      talk_id_(std::move(talk_id)) {}

namespace {

const json& require(const json& obj, const char* field, std::size_t line) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) throw MissingFieldError(line, field);
  return *it;
}

std::string require_string(const json& obj, const char* field, std::size_t line) {
  const json& v = require(obj, field, line);
  if (!v.is_string()) {
    throw ManifestError("manifest line " + std::to_string(line) + ": field \"" + field +
                            "\" must be a string",
                        {line});
  }
  return v.get<std::string>();
}

}  // namespace

RunManifest parse_manifest(std::string_view jsonl, std::string run_id) {
  RunManifest manifest;
  manifest.source_bytes = std::string(jsonl);
  std::map<std::string, std::size_t> seen;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= jsonl.size()) {
    const std::size_t nl = jsonl.find('\n', pos);
    const std::string_view line =
        jsonl.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line_no;
    pos = nl == std::string_view::npos ? jsonl.size() + 1 : nl + 1;
    if (text::trim(line).empty()) continue;

    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ManifestError("manifest line " + std::to_string(line_no) + ": parse error: " + e.what(),
                          {line_no});
    }
    if (!obj.is_object()) {
      throw ManifestError("manifest line " + std::to_string(line_no) + ": expected a JSON object",
                          {line_no});
    }

    TalkRef talk;
    talk.talk_id = require_string(obj, "talk_id", line_no);
    talk.audio_path = require_string(obj, "audio_path", line_no);
    const json& duration = require(obj, "duration_s", line_no);
    if (!duration.is_number()) {
      throw ManifestError("manifest line " + std::to_string(line_no) +
                              ": field \"duration_s\" must be a number",
                          {line_no});
    }
    talk.duration_s = duration.get<double>();
    talk.source_lang = require_string(obj, "source_lang", line_no);
    const json& targets = require(obj, "target_langs", line_no);
    if (!targets.is_array()) {
      throw ManifestError("manifest line " + std::to_string(line_no) +
                              ": field \"target_langs\" must be an array",
                          {line_no});
    }
    for (const auto& t : targets) talk.target_langs.push_back(t.get<std::string>());

    if (talk.talk_id.empty()) {
      throw ManifestError("manifest line " + std::to_string(line_no) + ": empty talk_id",
                          {line_no});
    }
    if (!(talk.duration_s > 0.0)) {
      throw ManifestError("manifest line " + std::to_string(line_no) +
                              ": duration_s must be positive",
                          {line_no});
    }
    if (auto [it, inserted] = seen.emplace(talk.talk_id, line_no); !inserted) {
      throw DuplicateTalkError(talk.talk_id, it->second, line_no);
    }
    manifest.talks.push_back(std::move(talk));
  }

  if (manifest.talks.empty()) throw ManifestError("manifest contains no talks", {});
  manifest.run_id = run_id.empty() ? derive_run_id(jsonl, "") : std::move(run_id);
  manifest.created_at = utc_timestamp_now();
  return manifest;
}

RunManifest load_manifest(const fs::path& path, std::string run_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot open manifest: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str(), std::move(run_id));
}

std::string derive_run_id(std::string_view manifest_bytes, std::string_view config_hash) {
  std::string material(manifest_bytes);
  material.push_back('\0');
  material.append(config_hash);
  return "run-" + sha256_hex(material).substr(0, 12);
}

namespace {
constexpr std::array<std::string_view, 11> kStageNames = {
    "vad", "segments", "asr", "fusion", "document", "sentences",
    "mt",  "ape",      "qa",  "summary", "scores"};
}

std::string_view to_string(Stage stage) { return kStageNames[static_cast<std::size_t>(stage)]; }

Stage parse_stage(std::string_view name) {
  for (std::size_t i = 0; i < kStageNames.size(); ++i) {
    if (kStageNames[i] == name) return static_cast<Stage>(i);
  }
  throw std::invalid_argument("unknown stage: " + std::string(name));
}

namespace {

void check_component(std::string_view what, std::string_view value) {
  if (value.empty()) throw std::invalid_argument("artifact key: empty " + std::string(what));
  if (value == "." || value == ".." || value.front() == '.' ||
      value.find_first_of("/\\") != std::string_view::npos ||
      value.find('\0') != std::string_view::npos) {
    throw std::invalid_argument("artifact key: unsafe " + std::string(what) + " \"" +
                                std::string(value) + "\"");
  }
}

constexpr std::string_view kSidecarSuffix = ".meta.json";

}  // namespace

void ArtifactKey::validate() const {
  check_component("run_id", run_id);
  check_component("talk_id", talk_id);
  check_component("variant", variant);
  if (variant.size() >= kSidecarSuffix.size() &&
      variant.compare(variant.size() - kSidecarSuffix.size(), kSidecarSuffix.size(),
                      kSidecarSuffix) == 0) {
    throw std::invalid_argument("artifact key: variant may not end in " +
                                std::string(kSidecarSuffix));
  }
}

std::string ArtifactKey::to_string() const {
  return run_id + "/" + std::string(corpus::to_string(stage)) + "/" + talk_id + "/" + variant;
}

ArtifactStore::ArtifactStore(fs::path root) : root_(std::move(root)) {}

fs::path ArtifactStore::payload_path(const ArtifactKey& key) const {
  return root_ / key.run_id / std::string(to_string(key.stage)) / key.talk_id / key.variant;
}

fs::path ArtifactStore::sidecar_path(const ArtifactKey& key) const {
  auto p = payload_path(key);
  p += std::string(kSidecarSuffix);
  return p;
}

std::mutex& ArtifactStore::lock_for(const ArtifactKey& key) {
  return locks_[std::hash<std::string>{}(key.to_string()) % locks_.size()];
}

namespace {

std::optional<std::string> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw StorageError("read failed: " + path.string());
  return buf.str();
}

void write_atomic(const fs::path& path, std::string_view bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("cannot open for write: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw StorageError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw StorageError("rename failed: " + path.string() + ": " + ec.message());
}

std::string sidecar_hash(const ArtifactKey& key, const std::string& raw) {
  json meta;
  try {
    meta = json::parse(raw);
  } catch (const json::parse_error&) {
    throw IntegrityError("unreadable sidecar for " + key.to_string());
  }
  if (!meta.is_object() || !meta.contains("hash") || !meta["hash"].is_string()) {
    throw IntegrityError("sidecar without hash for " + key.to_string());
  }
  return meta["hash"].get<std::string>();
}

}  // namespace

StoredReceipt ArtifactStore::put(const ArtifactKey& key, std::string_view payload, bool force) {
  key.validate();
  const std::string hash = sha256_hex(payload);
  const fs::path path = payload_path(key);
  std::lock_guard guard(lock_for(key));

  if (!force) {
    if (auto meta = read_file(sidecar_path(key))) {
      std::string existing;
      try {
        existing = sidecar_hash(key, *meta);
      } catch (const IntegrityError&) {
        existing.clear();
      }
      if (existing == hash && fs::exists(path)) return {hash, path};
      if (!existing.empty() || fs::exists(path)) throw ArtifactConflict(key);
    }
  }

  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw StorageError("cannot create " + path.parent_path().string() + ": " + ec.message());

  json meta = {{"hash", hash},
               {"algorithm", "sha256"},
               {"stage", std::string(to_string(key.stage))},
               {"created_at", utc_timestamp_now()}};
  write_atomic(path, payload);
  write_atomic(sidecar_path(key), meta.dump() + "\n");
  return {hash, path};
}

std::optional<std::string> ArtifactStore::try_get(const ArtifactKey& key) const {
  key.validate();
  auto payload = read_file(payload_path(key));
  if (!payload) return std::nullopt;
  auto meta = read_file(sidecar_path(key));
  if (!meta) throw IntegrityError("missing sidecar for " + key.to_string());
  if (sidecar_hash(key, *meta) != sha256_hex(*payload)) {
    throw IntegrityError("hash mismatch for " + key.to_string());
  }
  return payload;
}

std::string ArtifactStore::get(const ArtifactKey& key) const {
  auto payload = try_get(key);
  if (!payload) throw ArtifactNotFound(key);
  return std::move(*payload);
}

bool ArtifactStore::contains(const ArtifactKey& key) const {
  key.validate();
  return fs::exists(payload_path(key)) && fs::exists(sidecar_path(key));
}

}  // namespace lfp::corpus
