#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include <httplib.h>

#include "lfp/backends.hpp"
#include "test_support.hpp"

using namespace lfp;
using namespace lfp::backends;
using lfp::testing::TempDir;

namespace {

BackendSpec spec(Kind kind, std::string endpoint, int retries = 2, double timeout = 5.0) {
  BackendSpec s;
  s.id = "b1";
  s.kind = kind;
  s.endpoint = std::move(endpoint);
  s.max_retries = retries;
  s.timeout_s = timeout;
  return s;
}

// No retries, so no sleeps.
Client mock(Kind kind, const std::string& endpoint) { return Client(spec(kind, endpoint, 0)); }

// Local HTTP server on an ephemeral port, stopped on destruction.
class LocalServer {
public:
  LocalServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  std::string url(const std::string& path) const {
    return "http://127.0.0.1:" + std::to_string(port_) + path;
  }

private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST(Spec, ValidationAndJson) {
  EXPECT_THROW(spec(Kind::asr, "").validate(), std::invalid_argument);
  auto bad = spec(Kind::asr, "mock:hash");
  bad.timeout_s = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = spec(Kind::asr, "mock:hash", -1);
  EXPECT_THROW(bad.validate(), std::invalid_argument);

  auto s = spec(Kind::qe, "http://x/qe");
  s.headers["Authorization"] = "k";
  const auto back = spec_from_json(spec_to_json(s));
  EXPECT_EQ(back.id, s.id);
  EXPECT_EQ(back.kind, Kind::qe);
  EXPECT_EQ(back.headers, s.headers);
  EXPECT_EQ(parse_kind("tts"), Kind::tts);
  EXPECT_THROW(parse_kind("gpu"), std::invalid_argument);
}

TEST(Mocks, AsrHashIsDeterministic) {
  auto a = mock(Kind::asr, "mock:hash");
  auto b = mock(Kind::asr, "mock:hash");
  const auto t1 = a.transcribe("talk.wav", 0.0, 12.5, "en").text;
  EXPECT_EQ(t1, b.transcribe("talk.wav", 0.0, 12.5, "en").text);
  EXPECT_NE(t1, a.transcribe("talk.wav", 12.5, 20.0, "en").text);
  EXPECT_FALSE(t1.empty());
  EXPECT_EQ(t1.back(), '.');
  EXPECT_THROW(a.transcribe("talk.wav", 3.0, 3.0, "en"), std::invalid_argument);
}

TEST(Mocks, FragmentWordsAreTimeAligned) {
  auto c = mock(Kind::asr, "mock:fragment");
  const auto ref = text::split_ws(fragment_reference(10.0));
  EXPECT_EQ(ref.size(), 20u);
  const auto words = text::split_ws(c.transcribe("a", 2.0, 4.0, "en").text);
  ASSERT_EQ(words.size(), 4u);
  EXPECT_EQ(words[0], "uh");
  EXPECT_EQ(words[1], ref[5]);
  EXPECT_EQ(words[3], ref[7]);
}

TEST(Mocks, MtIdentityAndReverse) {
  auto id = mock(Kind::mt, "mock:identity");
  EXPECT_EQ(id.translate("a b c", "en", "de"), "a b c");
  auto rev = mock(Kind::mt, "mock:reverse-words");
  EXPECT_EQ(rev.translate("a b c", "en", "de"), "c b a");
}

TEST(Mocks, LlmEchoStopAndOversize) {
  auto echo = mock(Kind::llm, "mock:echo");
  EXPECT_EQ(echo.complete("Header:\nSystem1: fused words\n\nPost-Edited Transcript: \n", 64, 0.0),
            "fused words");
  EXPECT_EQ(echo.complete("x\nkeep this<|im_end|>drop", 64, 0.0, {"<|im_end|>"}), "keep this");
  auto small = mock(Kind::llm, "mock:echo?max_prompt_chars=10");
  try {
    small.complete("this prompt is far too long", 64, 0.0);
    FAIL() << "expected BackendError";
  } catch (const BackendError& e) {
    EXPECT_EQ(e.category(), ErrorCategory::remote);
  }
  EXPECT_THROW(echo.complete("x", 1, -0.5), std::invalid_argument);
}

TEST(Mocks, QeLengthRatioAndNan) {
  auto qe = mock(Kind::qe, "mock:length-ratio");
  EXPECT_DOUBLE_EQ(qe.estimate_quality("same", "same"), 1.0);
  EXPECT_DOUBLE_EQ(qe.estimate_quality("abcd", "ab"), 0.5);
  EXPECT_DOUBLE_EQ(qe.estimate_quality("ab", "abcd"), 0.5);
  auto nan = mock(Kind::qe, "mock:nan");
  try {
    nan.estimate_quality("a", "b");
    FAIL() << "expected BackendError";
  } catch (const BackendError& e) {
    EXPECT_EQ(e.category(), ErrorCategory::integrity);
  }
}

TEST(Mocks, VadSineIsDeterministicAndValid) {
  auto vad = mock(Kind::vad, "mock:sine?period_s=4");
  const auto a = vad.detect_speech("talk.wav", 30.0);
  const auto b = vad.detect_speech("talk.wav", 30.0);
  EXPECT_EQ(a.probs, b.probs);
  EXPECT_EQ(a.probs.size(), 3000u);
  EXPECT_DOUBLE_EQ(a.frame_rate_hz, 100.0);
  EXPECT_NO_THROW(a.validate());
  auto constant = mock(Kind::vad, "mock:constant?p=0.25");
  const auto c = constant.detect_speech("x", 2.0);
  EXPECT_EQ(c.probs, std::vector<double>(200, 0.25));
}

TEST(Mocks, TtsStubHashesTheText) {
  TempDir dir;
  auto tts = mock(Kind::tts, "mock:stub?dir=" + dir.path().string());
  const auto path = tts.synthesize("hello", "v1");
  EXPECT_EQ(path, tts.synthesize("hello", "v1"));
  EXPECT_EQ(lfp::testing::read_file(path), sha256_hex("hello") + "\n");
  EXPECT_THROW(tts.synthesize("", "v1"), std::invalid_argument);
  auto down = mock(Kind::tts, "mock:fail");
  EXPECT_THROW(down.synthesize("hello", "v1"), BackendError);
}

TEST(Mocks, UnknownMockIsAProtocolError) {
  auto c = mock(Kind::mt, "mock:nonsense");
  try {
    c.translate("a", "en", "de");
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_EQ(e.category(), ErrorCategory::protocol);
  }
}

TEST(Client, WrongKindIsAPrecondition) {
  auto c = mock(Kind::mt, "mock:identity");
  EXPECT_THROW(c.complete("x", 1, 0.0), std::invalid_argument);
}

TEST(Retry, TwoFailuresThenSuccess) {
  int calls = 0;
  auto transport = std::make_shared<FunctionTransport>([&](const json&) -> json {
    if (++calls <= 2) throw TransportError(ErrorCategory::remote, "500");
    return {{"text", "ok"}};
  });
  Client c(spec(Kind::mt, "http://unused", 2), transport);
  std::vector<double> delays;
  c.set_sleeper([&](double s) { delays.push_back(s); });
  EXPECT_EQ(c.translate("x", "en", "de"), "ok");
  EXPECT_EQ(calls, 3);
  EXPECT_EQ(c.calls(), 3u);
  EXPECT_EQ(delays, (std::vector<double>{0.5, 1.0}));
}

TEST(Retry, AttemptLawAndBackoff) {
  for (int retries = 0; retries <= 4; ++retries) {
    for (int succeed_on = 1; succeed_on <= 6; ++succeed_on) {
      int calls = 0;
      auto transport = std::make_shared<FunctionTransport>([&](const json&) -> json {
        if (++calls < succeed_on) throw TransportError(ErrorCategory::timeout, "slow");
        return {{"text", "ok"}};
      });
      Client c(spec(Kind::mt, "http://unused", retries), transport);
      std::vector<double> delays;
      c.set_sleeper([&](double s) { delays.push_back(s); });
      if (succeed_on <= retries + 1) {
        EXPECT_EQ(c.translate("x", "en", "de"), "ok");
      } else {
        try {
          c.translate("x", "en", "de");
          FAIL();
        } catch (const BackendError& e) {
          EXPECT_EQ(e.category(), ErrorCategory::timeout);
          EXPECT_EQ(e.attempt(), retries + 1);
        }
      }
      EXPECT_EQ(calls, std::min(succeed_on, retries + 1));
      EXPECT_TRUE(std::is_sorted(delays.begin(), delays.end()));
    }
  }
}

TEST(Retry, ProtocolErrorsAreNotRetried) {
  int calls = 0;
  auto transport = std::make_shared<FunctionTransport>([&](const json&) -> json {
    ++calls;
    throw TransportError(ErrorCategory::protocol, "bad");
  });
  Client c(spec(Kind::mt, "http://unused", 3), transport);
  EXPECT_THROW(c.translate("x", "en", "de"), BackendError);
  EXPECT_EQ(calls, 1);
}

TEST(Validation, VadPayloads) {
  auto respond = [](json body) {
    return std::make_shared<FunctionTransport>([body](const json&) { return body; });
  };
  auto check = [&](json body, ErrorCategory want) {
    Client c(spec(Kind::vad, "http://unused", 0), respond(std::move(body)));
    try {
      c.detect_speech("x");
      FAIL();
    } catch (const BackendError& e) {
      EXPECT_EQ(e.category(), want);
    }
  };
  check({{"frame_rate_hz", 100}, {"probs", {0.1, 1.2}}}, ErrorCategory::integrity);
  check({{"frame_rate_hz", 100}, {"probs", json::array()}}, ErrorCategory::integrity);
  check({{"frame_rate_hz", 0}, {"probs", {0.5}}}, ErrorCategory::integrity);
  check({{"probs", {0.5}}}, ErrorCategory::protocol);
}

TEST(Validation, MissingTextIsAProtocolError) {
  Client c(spec(Kind::mt, "http://unused", 0),
           std::make_shared<FunctionTransport>([](const json&) { return json{{"txt", "x"}}; }));
  try {
    c.translate("a", "en", "de");
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_EQ(e.category(), ErrorCategory::protocol);
  }
}

TEST(Http, RoundTripWithHeaders) {
  LocalServer srv;
  std::string seen_auth;
  srv.server().Post("/mt", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    const auto body = json::parse(req.body);
    res.set_content(json{{"text", body["source"].get<std::string>() + "!"}}.dump(), "application/json");
  });
  auto s = spec(Kind::mt, srv.url("/mt"), 0);
  s.headers["Authorization"] = "Bearer t";
  Client c(s);
  EXPECT_EQ(c.translate("hi", "en", "de"), "hi!");
  EXPECT_EQ(seen_auth, "Bearer t");
}

TEST(Http, ServerErrorsThenSuccess) {
  LocalServer srv;
  std::atomic<int> hits{0};
  srv.server().Post("/asr", [&](const httplib::Request&, httplib::Response& res) {
    if (++hits <= 2) {
      res.status = 500;
      res.set_content("busy", "text/plain");
      return;
    }
    res.set_content(R"({"text":"done","confidences":[0.5,0.9]})", "application/json");
  });
  Client c(spec(Kind::asr, srv.url("/asr"), 2));
  c.set_sleeper([](double) {});
  const auto r = c.transcribe("a.wav", 0, 1, "en");
  EXPECT_EQ(r.text, "done");
  ASSERT_TRUE(r.confidences.has_value());
  EXPECT_EQ(r.confidences->size(), 2u);
  EXPECT_EQ(hits.load(), 3);
}

TEST(Http, TimeoutOnEveryAttempt) {
  LocalServer srv;
  srv.server().Post("/llm", [&](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    res.set_content(R"({"text":"late"})", "application/json");
  });
  Client c(spec(Kind::llm, srv.url("/llm"), 1, 0.2));
  c.set_sleeper([](double) {});
  try {
    c.complete("p", 8, 0.0);
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_EQ(e.category(), ErrorCategory::timeout);
    EXPECT_EQ(e.attempt(), 2);
    EXPECT_EQ(e.backend_id(), "b1");
  }
}

TEST(Http, MalformedJsonIsAProtocolError) {
  LocalServer srv;
  srv.server().Post("/mt", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"text\": \"trunc", "application/json");
  });
  Client c(spec(Kind::mt, srv.url("/mt"), 2));
  try {
    c.translate("a", "en", "de");
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_EQ(e.category(), ErrorCategory::protocol);
    EXPECT_EQ(e.attempt(), 1);
  }
}

TEST(Http, UnreachableEndpointIsAProtocolError) {
  Client c(spec(Kind::mt, "http://127.0.0.1:1/mt", 2, 1.0));
  try {
    c.translate("a", "en", "de");
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_EQ(e.category(), ErrorCategory::protocol);
  }
  EXPECT_THROW(Client(spec(Kind::mt, "ftp://x")), std::invalid_argument);
}
