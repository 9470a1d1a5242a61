#include "lfp/backends.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <regex>
#include <thread>

#include "httplib.h"

namespace lfp::backends {

namespace {
constexpr std::array<std::string_view, 6> kKindNames = {"asr", "mt", "llm", "qe", "tts", "vad"};
constexpr std::array<std::string_view, 4> kCategoryNames = {"timeout", "protocol", "remote",
                                                            "integrity"};
}  // namespace

std::string_view to_string(Kind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

Kind parse_kind(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<Kind>(i);
  }
  throw std::invalid_argument("unknown backend kind: " + std::string(name));
}

std::string_view to_string(ErrorCategory category) {
  return kCategoryNames[static_cast<std::size_t>(category)];
}

void BackendSpec::validate() const {
  if (id.empty()) throw std::invalid_argument("backend spec: empty id");
  if (endpoint.empty()) throw std::invalid_argument("backend " + id + ": empty endpoint");
  if (!(timeout_s > 0.0)) throw std::invalid_argument("backend " + id + ": timeout_s must be > 0");
  if (max_retries < 0) throw std::invalid_argument("backend " + id + ": max_retries must be >= 0");
}

BackendSpec spec_from_json(const json& j) {
  BackendSpec spec;
  spec.id = j.at("id").get<std::string>();
  spec.kind = parse_kind(j.at("kind").get<std::string>());
  spec.endpoint = j.at("endpoint").get<std::string>();
  spec.timeout_s = j.value("timeout_s", spec.timeout_s);
  spec.max_retries = j.value("max_retries", spec.max_retries);
  if (j.contains("headers")) spec.headers = j["headers"].get<std::map<std::string, std::string>>();
  spec.validate();
  return spec;
}

json spec_to_json(const BackendSpec& spec) {
  return {{"id", spec.id},
          {"kind", std::string(to_string(spec.kind))},
          {"endpoint", spec.endpoint},
          {"timeout_s", spec.timeout_s},
          {"max_retries", spec.max_retries},
          {"headers", spec.headers}};
}

BackendError::BackendError(std::string backend_id, ErrorCategory category, int attempt,
                           std::string message)
    : Error("backend " + backend_id + " (" + std::string(to_string(category)) + ", attempt " +
            std::to_string(attempt) + "): " + message),
      backend_id_(std::move(backend_id)),
      category_(category),
      attempt_(attempt) {}

// ---------------------------------------------------------------------------
// HTTP

HttpTransport::HttpTransport(const BackendSpec& spec)
    : timeout_s_(spec.timeout_s), headers_(spec.headers) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(spec.endpoint, m, kUrl)) {
    throw std::invalid_argument("backend " + spec.id + ": unsupported endpoint " + spec.endpoint);
  }
  base_ = m[1].str();
  path_ = m[2].matched ? m[2].str() : "/";
}

json HttpTransport::post(const json& request) {
  httplib::Client cli(base_);
  const auto secs = static_cast<time_t>(timeout_s_);
  const auto usecs = static_cast<time_t>((timeout_s_ - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  httplib::Headers headers(headers_.begin(), headers_.end());

  auto res = cli.Post(path_, headers, request.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    const auto category = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                           err == httplib::Error::Write)
                              ? ErrorCategory::timeout
                              : ErrorCategory::protocol;
    throw TransportError(category, "http: " + httplib::to_string(err));
  }
  if (res->status >= 400) {
    throw TransportError(ErrorCategory::remote,
                         "http status " + std::to_string(res->status) + ": " + res->body);
  }
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw TransportError(ErrorCategory::protocol, std::string("malformed response: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Mocks

namespace {

constexpr std::array<std::string_view, 40> kVocab = {
    "the",    "model",   "speech",  "signal", "we",       "present", "a",       "method",
    "for",    "long",    "audio",   "talks",  "results",  "show",    "strong",  "gains",
    "on",     "noisy",   "data",    "this",   "system",   "uses",    "context", "from",
    "many",   "sources", "and",     "every",  "segment",  "is",      "scored",  "with",
    "simple", "rules",   "across",  "domains", "our",     "team",    "built",   "it"};

std::uint32_t hex_byte(const std::string& hex, std::size_t i) {
  return static_cast<std::uint32_t>(std::stoul(hex.substr((2 * i) % hex.size(), 2), nullptr, 16));
}

std::string fmt_seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", s);
  return buf;
}

std::string capitalize(std::string w) {
  if (!w.empty() && w[0] >= 'a' && w[0] <= 'z') w[0] = static_cast<char>(w[0] - 'a' + 'A');
  return w;
}

std::string hash_sentences(const std::string& seed) {
  const std::string h = sha256_hex(seed);
  std::string out;
  std::size_t cursor = 2;
  for (int sentence = 0; sentence < 2; ++sentence) {
    const std::size_t words = 4 + hex_byte(h, static_cast<std::size_t>(sentence)) % 5;
    for (std::size_t w = 0; w < words; ++w) {
      std::string word(kVocab[hex_byte(h, cursor++) % kVocab.size()]);
      if (w == 0) word = capitalize(word);
      if (!out.empty()) out.push_back(' ');
      out += word;
    }
    out.push_back('.');
  }
  return out;
}

std::string fragment_word(std::size_t k) { return std::string(kVocab[(k * 7 + 3) % kVocab.size()]); }

std::string fragment_text(double start_s, double end_s) {
  std::vector<std::string> words;
  // Word k is centred at (k + 0.5) * 0.5 s.
  const auto first = static_cast<std::size_t>(std::max(0.0, std::ceil(start_s * 2.0 - 0.5)));
  for (std::size_t k = first; (static_cast<double>(k) + 0.5) * 0.5 < end_s; ++k) {
    words.push_back(fragment_word(k));
  }
  if (!words.empty()) words.front() = "uh";
  return text::join(words, " ");
}

std::string echo_response(const std::string& prompt) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos <= prompt.size()) {
    const std::size_t nl = prompt.find('\n', pos);
    lines.push_back(prompt.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos));
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }
  static const std::regex kLabel(R"(^\S+: )");
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    const std::string_view line = text::trim(*it);
    if (line.empty() || line.starts_with("<|") || line.ends_with(':')) continue;
    std::string out(line);
    std::smatch m;
    if (std::regex_search(out, m, kLabel)) out = out.substr(m.length(0));
    return out;
  }
  return {};
}

}  // namespace

std::string fragment_reference(double duration_s) {
  std::vector<std::string> words;
  for (std::size_t k = 0; (static_cast<double>(k) + 0.5) * 0.5 < duration_s; ++k) {
    words.push_back(fragment_word(k));
  }
  return text::join(words, " ");
}

MockTransport::MockTransport(std::string backend_id, Kind kind, std::string_view endpoint)
    : backend_id_(std::move(backend_id)), kind_(kind) {
  std::string_view rest = endpoint.substr(endpoint.find(':') + 1);
  const auto q = rest.find('?');
  name_ = std::string(rest.substr(0, q));
  if (q != std::string_view::npos) {
    std::string_view query = rest.substr(q + 1);
    while (!query.empty()) {
      const auto amp = query.find('&');
      const std::string_view item = query.substr(0, amp);
      const auto eq = item.find('=');
      params_[std::string(item.substr(0, eq))] =
          eq == std::string_view::npos ? std::string() : std::string(item.substr(eq + 1));
      if (amp == std::string_view::npos) break;
      query = query.substr(amp + 1);
    }
  }
}

json MockTransport::post(const json& req) {
  auto param = [&](const std::string& key, double fallback) {
    auto it = params_.find(key);
    return it == params_.end() ? fallback : std::stod(it->second);
  };
  if (name_ == "fail") throw TransportError(ErrorCategory::remote, "mock backend failure");

  switch (kind_) {
    case Kind::asr: {
      const double start = req.at("start_s").get<double>();
      const double end = req.at("end_s").get<double>();
      if (name_ == "hash") {
        const std::string seed = backend_id_ + "|" + req.at("audio_path").get<std::string>() +
                                 "|" + fmt_seconds(start) + "|" + fmt_seconds(end) + "|" +
                                 req.at("lang").get<std::string>() + "|" +
                                 req.value("instruction", std::string());
        return {{"text", hash_sentences(seed)}};
      }
      if (name_ == "fragment") return {{"text", fragment_text(start, end)}};
      break;
    }
    case Kind::mt: {
      const std::string source = req.at("source").get<std::string>();
      if (name_ == "identity") return {{"text", source}};
      if (name_ == "reverse-words") {
        auto words = text::split_ws(source);
        std::reverse(words.begin(), words.end());
        return {{"text", text::join(words, " ")}};
      }
      break;
    }
    case Kind::llm: {
      const std::string prompt = req.at("prompt").get<std::string>();
      if (name_ == "echo") {
        if (auto it = params_.find("max_prompt_chars");
            it != params_.end() && prompt.size() > std::stoul(it->second)) {
          throw TransportError(ErrorCategory::remote, "prompt exceeds context window");
        }
        std::string out = echo_response(prompt);
        for (const auto& stop : req.value("stop", std::vector<std::string>{})) {
          if (auto at = out.find(stop); !stop.empty() && at != std::string::npos) out.resize(at);
        }
        return {{"text", out}};
      }
      break;
    }
    case Kind::qe: {
      if (name_ == "length-ratio") {
        const double s = static_cast<double>(text::decode_utf8(req.at("source").get<std::string>()).size());
        const double t = static_cast<double>(text::decode_utf8(req.at("target").get<std::string>()).size());
        if (s == 0.0 || t == 0.0) return {{"score", s == t ? 1.0 : 0.0}};
        return {{"score", std::min(s / t, t / s)}};
      }
      if (name_ == "nan") return {{"score", "NaN"}};
      break;
    }
    case Kind::vad: {
      const double rate = param("rate_hz", 100.0);
      const double duration = req.contains("duration_s") && req["duration_s"].is_number()
                                  ? req["duration_s"].get<double>()
                                  : param("duration_s", 60.0);
      const auto frames = static_cast<std::size_t>(std::llround(duration * rate));
      std::vector<double> probs(frames);
      if (name_ == "sine") {
        const double period = param("period_s", 8.0);
        const std::string h = sha256_hex(req.at("audio_path").get<std::string>());
        const double phase = static_cast<double>(std::stoul(h.substr(0, 8), nullptr, 16)) /
                             4294967296.0 * 2.0 * std::numbers::pi;
        for (std::size_t i = 0; i < frames; ++i) {
          const double t = static_cast<double>(i) / rate;
          probs[i] = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * t / period + phase);
        }
        return {{"frame_rate_hz", rate}, {"probs", probs}};
      }
      if (name_ == "constant") {
        std::fill(probs.begin(), probs.end(), param("p", 1.0));
        return {{"frame_rate_hz", rate}, {"probs", probs}};
      }
      break;
    }
    case Kind::tts: {
      if (name_ == "stub") {
        const std::string text = req.at("text").get<std::string>();
        const std::string voice = req.value("voice", std::string());
        auto dir_it = params_.find("dir");
        const std::filesystem::path dir =
            dir_it != params_.end() ? std::filesystem::path(dir_it->second)
                                    : std::filesystem::temp_directory_path() / "lfp-tts-stub";
        std::filesystem::create_directories(dir);
        const auto path = dir / (sha256_hex(text + "|" + voice).substr(0, 16) + ".stub");
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << sha256_hex(text) << "\n";
        if (!out) throw TransportError(ErrorCategory::remote, "tts stub: cannot write " + path.string());
        return {{"audio_path", path.string()}};
      }
      break;
    }
  }
  throw TransportError(ErrorCategory::protocol, "unknown mock \"" + name_ + "\" for kind " +
                                                    std::string(to_string(kind_)));
}

std::shared_ptr<Transport> make_transport(const BackendSpec& spec) {
  if (spec.endpoint.starts_with("mock:")) {
    return std::make_shared<MockTransport>(spec.id, spec.kind, spec.endpoint);
  }
  return std::make_shared<HttpTransport>(spec);
}

// ---------------------------------------------------------------------------
// Client

Client::Client(BackendSpec spec, std::shared_ptr<Transport> transport)
    : spec_(std::move(spec)), transport_(std::move(transport)) {
  spec_.validate();
  if (!transport_) transport_ = make_transport(spec_);
  sleeper_ = [](double s) {
    std::this_thread::sleep_for(std::chrono::duration<double>(s));
  };
}

Client::Reply Client::call(const json& request) {
  const int attempts = spec_.max_retries + 1;
  double delay = kBackoffBaseS;
  for (int attempt = 1;; ++attempt) {
    ++calls_;
    try {
      json response = transport_->post(request);
      if (!response.is_object()) {
        throw BackendError(spec_.id, ErrorCategory::protocol, attempt, "response is not an object");
      }
      return {std::move(response), attempt};
    } catch (const TransportError& e) {
      const bool retryable =
          e.category() == ErrorCategory::timeout || e.category() == ErrorCategory::remote;
      if (!retryable || attempt >= attempts) {
        throw BackendError(spec_.id, e.category(), attempt, e.what());
      }
    } catch (const json::exception& e) {
      throw BackendError(spec_.id, ErrorCategory::protocol, attempt, e.what());
    }
    sleeper_(delay);
    delay *= kBackoffFactor;
  }
}

void Client::require_kind(Kind kind) const {
  if (spec_.kind != kind) {
    throw std::invalid_argument("backend " + spec_.id + " is " + std::string(to_string(spec_.kind)) +
                                ", not " + std::string(to_string(kind)));
  }
}

void Client::fail(ErrorCategory category, int attempt, const std::string& message) const {
  throw BackendError(spec_.id, category, attempt, message);
}

std::string Client::require_text(const Reply& reply) const {
  auto it = reply.body.find("text");
  if (it == reply.body.end() || !it->is_string()) {
    fail(ErrorCategory::protocol, reply.attempt, "response lacks string field \"text\"");
  }
  return it->get<std::string>();
}

AsrResult Client::transcribe(const std::string& audio_path, double start_s, double end_s,
                             const std::string& lang, const AsrOptions& options) {
  require_kind(Kind::asr);
  if (!(start_s < end_s)) throw std::invalid_argument("transcribe: start_s must be < end_s");
  json req = {{"audio_path", audio_path}, {"start_s", start_s}, {"end_s", end_s}, {"lang", lang}};
  if (!options.instruction.empty()) req["instruction"] = options.instruction;
  if (!options.chunks.empty()) {
    req["chunks"] = json::array();
    for (const auto& [s, e] : options.chunks) req["chunks"].push_back({s, e});
  }
  const Reply reply = call(req);
  AsrResult out;
  out.text = require_text(reply);
  if (auto it = reply.body.find("confidences"); it != reply.body.end() && !it->is_null()) {
    if (!it->is_array() || !std::all_of(it->begin(), it->end(), [](const json& v) {
          return v.is_number();
        })) {
      fail(ErrorCategory::integrity, reply.attempt, "confidences must be an array of numbers");
    }
    out.confidences = it->get<std::vector<double>>();
  }
  return out;
}

std::string Client::translate(const std::string& source, const std::string& src_lang,
                              const std::string& tgt_lang) {
  require_kind(Kind::mt);
  return require_text(call({{"source", source}, {"src_lang", src_lang}, {"tgt_lang", tgt_lang}}));
}

std::string Client::complete(const std::string& prompt, int max_tokens, double temperature,
                             const std::vector<std::string>& stop) {
  require_kind(Kind::llm);
  if (!(temperature >= 0.0)) throw std::invalid_argument("complete: temperature must be >= 0");
  return require_text(call({{"prompt", prompt},
                                      {"max_tokens", max_tokens},
                                      {"temperature", temperature},
                                      {"stop", stop}}));
}

double Client::estimate_quality(const std::string& source, const std::string& target) {
  require_kind(Kind::qe);
  const Reply reply = call({{"source", source}, {"target", target}});
  auto it = reply.body.find("score");
  if (it == reply.body.end()) {
    fail(ErrorCategory::protocol, reply.attempt, "response lacks field \"score\"");
  }
  // Non-numeric scores ("NaN", null) are how servers leak NaN through JSON.
  if (!it->is_number() || !std::isfinite(it->get<double>())) {
    fail(ErrorCategory::integrity, reply.attempt, "score is not a finite number");
  }
  return it->get<double>();
}

segmentation::SpeechFrameTrack Client::detect_speech(const std::string& audio_path,
                                                     std::optional<double> duration_hint) {
  require_kind(Kind::vad);
  json req = {{"audio_path", audio_path}};
  if (duration_hint) req["duration_s"] = *duration_hint;
  const Reply reply = call(req);
  const json& res = reply.body;
  const int attempt = reply.attempt;
  auto integrity = [&](const std::string& message) {
    fail(ErrorCategory::integrity, attempt, message);
  };
  if (!res.contains("frame_rate_hz") || !res["frame_rate_hz"].is_number() ||
      !res.contains("probs") || !res["probs"].is_array()) {
    fail(ErrorCategory::protocol, attempt, "vad response needs numeric frame_rate_hz and array probs");
  }
  segmentation::SpeechFrameTrack track;
  track.frame_rate_hz = res["frame_rate_hz"].get<double>();
  if (!(track.frame_rate_hz > 0.0)) integrity("frame_rate_hz must be positive");
  const auto& probs = res["probs"];
  if (probs.empty()) integrity("empty probs");
  track.probs.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!probs[i].is_number()) integrity("prob " + std::to_string(i) + " is not a number");
    const double p = probs[i].get<double>();
    if (!(p >= 0.0 && p <= 1.0)) integrity("prob " + std::to_string(i) + " outside [0,1]");
    track.probs.push_back(p);
  }
  return track;
}

std::string Client::synthesize(const std::string& text, const std::string& voice) {
  require_kind(Kind::tts);
  if (text.empty()) throw std::invalid_argument("synthesize: empty text");
  const Reply reply = call({{"text", text}, {"voice", voice}});
  auto it = reply.body.find("audio_path");
  if (it == reply.body.end() || !it->is_string() || it->get<std::string>().empty()) {
    fail(ErrorCategory::protocol, reply.attempt, "response lacks \"audio_path\"");
  }
  return it->get<std::string>();
}

}  // namespace lfp::backends
