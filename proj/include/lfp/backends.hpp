#pragma once

// Clients for external model services (ASR, MT, completion LLM, QE, TTS, VAD).
//
// Every backend speaks JSON over HTTP POST to its endpoint URL:
//   asr  {"audio_path","start_s","end_s","lang"[,"instruction"][,"chunks"]}
//                                                                 -> {"text"[,"confidences"]}
//   mt   {"source","src_lang","tgt_lang"}                        -> {"text"}
//   llm  {"prompt","max_tokens","temperature","stop"}            -> {"text"}
//   qe   {"source","target"}                                     -> {"score"}
//   vad  {"audio_path"[,"duration_s"]}                           -> {"frame_rate_hz","probs"}
//   tts  {"text","voice"}                                        -> {"audio_path"}
//
// Endpoints with the "mock:" scheme are served in-process by deterministic
// mocks (see MockTransport) over the same request/response schemas.

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfp/common.hpp"
#include "lfp/segmentation.hpp"

namespace lfp::backends {

using nlohmann::json;

enum class Kind { asr, mt, llm, qe, tts, vad };

std::string_view to_string(Kind kind);
Kind parse_kind(std::string_view name);

struct BackendSpec {
  std::string id;
  Kind kind = Kind::asr;
  std::string endpoint;
  double timeout_s = 60.0;
  int max_retries = 2;
  std::map<std::string, std::string> headers;

  void validate() const;
};

BackendSpec spec_from_json(const json& j);
json spec_to_json(const BackendSpec& spec);

enum class ErrorCategory { timeout, protocol, remote, integrity };

std::string_view to_string(ErrorCategory category);

class BackendError : public Error {
public:
  BackendError(std::string backend_id, ErrorCategory category, int attempt, std::string message);

  const std::string& backend_id() const { return backend_id_; }
  ErrorCategory category() const { return category_; }
  int attempt() const { return attempt_; }

private:
  std::string backend_id_;
  ErrorCategory category_;
  int attempt_;
};

// A single failed exchange, raised by transports.
class TransportError : public Error {
public:
  TransportError(ErrorCategory category, std::string message)
      : Error(std::move(message)), category_(category) {}
  ErrorCategory category() const { return category_; }

private:
  ErrorCategory category_;
};

class Transport {
public:
  virtual ~Transport() = default;
  // One request/response exchange. Throws TransportError.
  virtual json post(const json& request) = 0;
};

class HttpTransport : public Transport {
public:
  explicit HttpTransport(const BackendSpec& spec);
  json post(const json& request) override;

private:
  std::string base_;
  std::string path_;
  double timeout_s_;
  std::map<std::string, std::string> headers_;
};

// Adapts a callable; used for scripted fakes.
class FunctionTransport : public Transport {
public:
  explicit FunctionTransport(std::function<json(const json&)> fn) : fn_(std::move(fn)) {}
  json post(const json& request) override { return fn_(request); }

private:
  std::function<json(const json&)> fn_;
};

// Deterministic in-process backends, selected by "mock:<name>[?k=v&...]".
//
//   asr  hash      words drawn from a SHA-256 of (backend id, span, lang,
//                  instruction); two sentences per span
//        fragment  time-aligned words (see fragment_reference), with the
//                  first word of every request replaced by "uh"
//   mt   identity | reverse-words
//   llm  echo      last data line of the prompt, label prefix removed,
//                  truncated at the first stop sequence;
//                  ?max_prompt_chars=N rejects longer prompts remotely
//   qe   length-ratio  min(|s|/|t|, |t|/|s|) over code points
//        nan       reports a non-finite score
//   vad  sine      0.5 + 0.5 sin(2 pi t / period_s + phase(audio_path)) at
//                  rate_hz (default period 8 s, 100 Hz, duration from the
//                  request or 60 s)
//        constant  ?p=<prob> everywhere
//   tts  stub      writes <dir>/<sha256(text|voice)>.stub whose bytes are
//                  the SHA-256 of the text
//   any  fail      every request fails with a remote error
class MockTransport : public Transport {
public:
  MockTransport(std::string backend_id, Kind kind, std::string_view endpoint);
  json post(const json& request) override;

private:
  std::string backend_id_;
  Kind kind_;
  std::string name_;
  std::map<std::string, std::string> params_;
};

// Reference transcript for the fragment ASR mock: word k is centred at
// (k + 0.5) * 0.5 s, so a talk of d seconds has floor(2 d) words.
std::string fragment_reference(double duration_s);

struct AsrResult {
  std::string text;
  std::optional<std::vector<double>> confidences;
};

struct AsrOptions {
  // Free-form task instruction for instruction-following speech models.
  std::string instruction;
  // Consecutive sub-spans sent as one request (long-audio tasks).
  std::vector<std::pair<double, double>> chunks;
};

// Client for one configured backend. Retries timeout and remote failures with
// jitterless exponential backoff (0.5 s, 1 s, 2 s, ...) up to max_retries.
// Safe for concurrent use.
class Client {
public:
  explicit Client(BackendSpec spec, std::shared_ptr<Transport> transport = nullptr);

  const BackendSpec& spec() const { return spec_; }

  AsrResult transcribe(const std::string& audio_path, double start_s, double end_s,
                       const std::string& lang, const AsrOptions& options = {});
  std::string translate(const std::string& source, const std::string& src_lang,
                        const std::string& tgt_lang);
  std::string complete(const std::string& prompt, int max_tokens, double temperature,
                       const std::vector<std::string>& stop = {});
  double estimate_quality(const std::string& source, const std::string& target);
  segmentation::SpeechFrameTrack detect_speech(const std::string& audio_path,
                                               std::optional<double> duration_hint = {});
  std::string synthesize(const std::string& text, const std::string& voice);

  // Number of exchanges attempted, retries included.
  std::size_t calls() const { return calls_.load(); }

  // Replaces the sleep used between retries (tests record instead of wait).
  void set_sleeper(std::function<void(double)> sleeper) { sleeper_ = std::move(sleeper); }

  static constexpr double kBackoffBaseS = 0.5;
  static constexpr double kBackoffFactor = 2.0;

private:
  struct Reply {
    json body;
    int attempt = 1;
  };

  Reply call(const json& request);
  void require_kind(Kind kind) const;
  [[noreturn]] void fail(ErrorCategory category, int attempt, const std::string& message) const;
  std::string require_text(const Reply& reply) const;

  BackendSpec spec_;
  std::shared_ptr<Transport> transport_;
  std::function<void(double)> sleeper_;
  std::atomic<std::size_t> calls_{0};
};

// Picks MockTransport for "mock:" endpoints and HttpTransport otherwise.
std::shared_ptr<Transport> make_transport(const BackendSpec& spec);

}  // namespace lfp::backends
