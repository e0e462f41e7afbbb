#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "chartmark/cot.hpp"
#include "chartmark/error.hpp"
#include "chartmark/llm_client.hpp"
#include "chartmark/prompts.hpp"
#include "httplib.h"

using namespace chartmark;
using nlohmann::json;

namespace {

// Local chat-completions server on an ephemeral port.
class MockServer {
 public:
  explicit MockServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockServer() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::string completion(const std::string& content) {
  return json{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}}.dump();
}

ClientConfig http_config(const std::string& endpoint) {
  ClientConfig c;
  c.mode = ClientMode::http;
  c.endpoint = endpoint;
  c.model = "test-model";
  c.backoff_initial_s = 0.01;
  c.timeout_s = 5;
  return c;
}

ChatRequest hello() { return {{{"user", "hello"}}, "cot", "c01", 0}; }

}  // namespace

TEST(Stub, BundledFixtureForExampleChart) {
  StubClient stub;
  const std::string reply = stub.chat({{{"user", "anything"}}, "cot", "c01", 0});
  const CotSample s = validate_cot(reply);
  EXPECT_EQ(s.steps.size(), 4u);
  EXPECT_EQ(s.answer, numeric_answer(412.5));
  EXPECT_EQ(stub.calls(), 1u);
}

TEST(Stub, RuleBasedReplyIsDeterministic) {
  const ChartSpec spec = generate_spec(3, 0, ChartType::line);
  const std::string prompt = prompts::chain_of_thought(prompts::cot_example(), serialize_spec(spec));
  StubClient a, b;
  const ChatRequest req{{{"user", prompt}}, "cot", spec.id, 9};
  EXPECT_EQ(a.chat(req), b.chat(req));
  EXPECT_EQ(validate_cot(a.chat(req)).chart_id, spec.id);
}

TEST(Stub, UnknownTemplateIsClientError) {
  StubClient stub;
  EXPECT_THROW(stub.chat({{{"user", "x"}}, "nope", "c9", 0}), ClientError);
}

TEST(Config, StrictKeysAndValidation) {
  ClientConfig c = client_config_from_json({{"mode", "stub"}});
  EXPECT_EQ(c.mode, ClientMode::stub);
  EXPECT_THROW(client_config_from_json({{"api_key", "secret"}}), ConfigError);
  EXPECT_THROW(client_config_from_json({{"colour", 1}}), ConfigError);
  EXPECT_THROW(client_config_from_json({{"mode", "http"}}), ConfigError);
  c.max_concurrency = 0;
  EXPECT_THROW(validate(c), ConfigError);
  const ClientConfig h = http_config("http://localhost:1/v1/chat/completions");
  EXPECT_EQ(to_json(client_config_from_json(to_json(h))), to_json(h));
  EXPECT_THROW(HttpClient(http_config("ftp://x")), ConfigError);
}

TEST(Http, RetriesRateLimitThenSucceeds) {
  std::atomic<int> hits{0};
  std::string auth;
  MockServer server([&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    const json body = json::parse(req.body);
    EXPECT_EQ(body["model"], "test-model");
    EXPECT_EQ(body["messages"][0]["content"], "hello");
    if (++hits <= 2) {
      res.status = 429;
      return;
    }
    res.set_content(completion("fine"), "application/json");
  });
  ::setenv(kApiKeyEnv, "k-test", 1);
  HttpClient client(http_config(server.endpoint()));
  ::unsetenv(kApiKeyEnv);
  EXPECT_EQ(client.chat(hello()), "fine");
  EXPECT_EQ(hits.load(), 3);
  EXPECT_EQ(auth, "Bearer k-test");
}

TEST(Http, PersistentServerErrorExhaustsRetries) {
  std::atomic<int> hits{0};
  MockServer server([&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 500;
  });
  ClientConfig c = http_config(server.endpoint());
  c.max_retries = 2;
  HttpClient client(c);
  EXPECT_THROW(client.chat(hello()), ClientError);
  EXPECT_EQ(hits.load(), 3);
}

TEST(Http, ClientErrorStatusNotRetried) {
  std::atomic<int> hits{0};
  MockServer server([&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 400;
  });
  HttpClient client(http_config(server.endpoint()));
  EXPECT_THROW(client.chat(hello()), ClientError);
  EXPECT_EQ(hits.load(), 1);
}

TEST(Http, MalformedBodyIsClientError) {
  MockServer server([](const httplib::Request&, httplib::Response& res) { res.set_content("{}", "application/json"); });
  HttpClient client(http_config(server.endpoint()));
  EXPECT_THROW(client.chat(hello()), ClientError);
}

TEST(Http, TransportErrorRetriedThenReported) {
  ClientConfig c = http_config("http://127.0.0.1:1/v1/chat/completions");
  c.max_retries = 1;
  HttpClient client(c);
  EXPECT_THROW(client.chat(hello()), ClientError);
}

TEST(Http, ConcurrencyBounded) {
  std::atomic<int> live{0}, peak{0};
  MockServer server([&](const httplib::Request&, httplib::Response& res) {
    const int now = ++live;
    for (int p = peak.load(); now > p && !peak.compare_exchange_weak(p, now);) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(60));
    --live;
    res.set_content(completion("ok"), "application/json");
  });
  ClientConfig c = http_config(server.endpoint());
  c.max_concurrency = 2;
  HttpClient client(c);
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) threads.emplace_back([&] { EXPECT_EQ(client.chat(hello()), "ok"); });
  for (auto& t : threads) t.join();
  EXPECT_LE(peak.load(), 2);
  EXPECT_LE(client.peak_in_flight(), 2);
  EXPECT_GE(client.peak_in_flight(), 1);
}

TEST(Faults, StickyAndSeeded) {
  StubClient stub;
  FaultInjectingClient always(stub, "cot", 1.0, 1);
  const std::string bad = always.chat({{{"user", "x"}}, "cot", "c01", 0});
  EXPECT_THROW(validate_cot(bad), FormatError);
  FaultInjectingClient never(stub, "cot", 0.0, 1);
  EXPECT_NO_THROW(validate_cot(never.chat({{{"user", "x"}}, "cot", "c01", 0})));

  FaultInjectingClient half(stub, "cot", 0.5, 42);
  FaultInjectingClient half_again(stub, "cot", 0.5, 42);
  int faulted = 0;
  for (int i = 0; i < 2000; ++i) {
    const std::string id = "x" + std::to_string(i);
    ASSERT_EQ(half.faulted(id), half_again.faulted(id));
    faulted += half.faulted(id);
  }
  EXPECT_NEAR(faulted / 2000.0, 0.5, 0.04);
}

TEST(Review, AcceptsCorrectRejectsTenPercentOff) {
  StubClient stub;
  for (const auto& spec : generate_corpus(8, 60, reference_type_mix())) {
    CotSample s = generate_cot_rule_based(spec, 1);
    EXPECT_TRUE(review_qa(s, spec, stub)) << spec.id;
    const double v = s.answer.number();
    if (v == 0) continue;
    s.answer = numeric_answer(v * 1.1, s.answer.percent);
    EXPECT_FALSE(review_qa(s, spec, stub)) << spec.id;
    s.answer = numeric_answer(v * 0.9, s.answer.percent);
    EXPECT_FALSE(review_qa(s, spec, stub)) << spec.id;
  }
}

TEST(MakeClient, Modes) {
  EXPECT_EQ(make_client(ClientConfig{})->mode(), ClientMode::stub);
  EXPECT_EQ(make_client(http_config("http://127.0.0.1:9/v1/chat/completions"))->mode(), ClientMode::http);
}
