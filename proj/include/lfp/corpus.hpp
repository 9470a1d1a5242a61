#pragma once

// Talk manifests and the content-addressed artifact store that persists
// every pipeline stage's output.

#include <array>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lfp/common.hpp"

namespace lfp::corpus {

struct TalkRef {
  std::string talk_id;
  std::string audio_path;
  double duration_s = 0.0;
  std::string source_lang;
  std::vector<std::string> target_langs;
};

struct RunManifest {
  std::string run_id;
  std::vector<TalkRef> talks;
  std::string config_hash;
  std::string created_at;
  // Raw manifest bytes, kept so run ids can be derived from them.
  std::string source_bytes;
};

class ManifestError : public Error {
public:
  ManifestError(std::string message, std::vector<std::size_t> lines)
      : Error(std::move(message)), lines_(std::move(lines)) {}
  // 1-based line numbers the error refers to.
  const std::vector<std::size_t>& lines() const { return lines_; }

private:
  std::vector<std::size_t> lines_;
};

class MissingFieldError : public ManifestError {
public:
  MissingFieldError(std::size_t line, std::string field);
  const std::string& field() const { return field_; }

private:
  std::string field_;
};

class DuplicateTalkError : public ManifestError {
public:
  DuplicateTalkError(std::string talk_id, std::size_t first_line, std::size_t second_line);
  const std::string& talk_id() const { return talk_id_; }

private:
  std::string talk_id_;
};

// Reads a JSONL manifest, one talk object per line (blank lines skipped).
// Talks keep file order. When run_id is empty it is derived from the file
// contents so a re-run on the same manifest maps to the same run.
RunManifest load_manifest(const std::filesystem::path& path, std::string run_id = {});
RunManifest parse_manifest(std::string_view jsonl, std::string run_id = {});

// Deterministic "run-xxxxxxxxxxxx" id from manifest bytes and config hash.
std::string derive_run_id(std::string_view manifest_bytes, std::string_view config_hash);

enum class Stage { vad, segments, asr, fusion, document, sentences, mt, ape, qa, summary, scores };

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view name);

struct ArtifactKey {
  std::string run_id;
  Stage stage = Stage::vad;
  std::string talk_id;
  std::string variant;

  // Throws std::invalid_argument when a component is empty or is not a
  // safe single path component.
  void validate() const;
  std::string to_string() const;
  friend bool operator==(const ArtifactKey&, const ArtifactKey&) = default;
};

struct StoredReceipt {
  std::string hash;
  std::filesystem::path path;
};

class StorageError : public Error {
public:
  using Error::Error;
};

class ArtifactNotFound : public Error {
public:
  explicit ArtifactNotFound(const ArtifactKey& key)
      : Error("artifact not found: " + key.to_string()) {}
};

class ArtifactConflict : public Error {
public:
  explicit ArtifactConflict(const ArtifactKey& key)
      : Error("artifact already stored with different content: " + key.to_string()) {}
};

class IntegrityError : public Error {
public:
  using Error::Error;
};

// One file per artifact at <root>/<run_id>/<stage>/<talk_id>/<variant>, with a
// JSON sidecar <variant>.meta.json carrying the SHA-256 of the payload.
//
// Concurrent reads are safe. Writes to the same key serialize on a striped
// lock; files are written to a temporary name and renamed into place.
class ArtifactStore {
public:
  explicit ArtifactStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  StoredReceipt put(const ArtifactKey& key, std::string_view payload, bool force = false);
  std::string get(const ArtifactKey& key) const;
  std::optional<std::string> try_get(const ArtifactKey& key) const;
  bool contains(const ArtifactKey& key) const;

  std::filesystem::path payload_path(const ArtifactKey& key) const;
  std::filesystem::path sidecar_path(const ArtifactKey& key) const;

private:
  std::mutex& lock_for(const ArtifactKey& key);

  std::filesystem::path root_;
  std::array<std::mutex, 64> locks_;
};

}  // namespace lfp::corpus
