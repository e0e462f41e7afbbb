#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <utility>
#include <vector>

#include "chartmark/chart_spec.hpp"
#include "json.hpp"

namespace chartmark {

struct CotSample;

enum class ClientMode { stub, http };

// API key for http mode is read from this environment variable only.
inline constexpr const char* kApiKeyEnv = "CHARTMARK_API_KEY";

struct ClientConfig {
  ClientMode mode = ClientMode::stub;
  std::string endpoint;  // full chat-completions URL, http:// or https://
  std::string model = "stub-teacher";
  double temperature = 0.0;
  int max_retries = 3;
  int max_concurrency = 4;
  double timeout_s = 60.0;
  double backoff_initial_s = 0.5;
  double rate_per_s = 0.0;  // 0 disables the token bucket
};

// Throws ConfigError.
void validate(const ClientConfig& c);
ClientConfig client_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ClientConfig& c);

struct ChatMessage {
  std::string role;
  std::string content;
};

// Messages plus routing metadata. The metadata never goes on the wire; the
// stub uses it to key deterministic replies.
struct ChatRequest {
  std::vector<ChatMessage> messages;
  std::string template_id;
  std::string chart_id;
  std::uint64_t seed = 0;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  // Returns the reply text. Throws ClientError.
  virtual std::string chat(const ChatRequest& request) = 0;
  virtual ClientMode mode() const = 0;
};

// Deterministic offline teacher. Replies are a pure function of the request:
// a bundled fixture when one exists for (template, chart_id), otherwise a
// rule-based answer computed from the document embedded in the prompt.
class StubClient : public LlmClient {
 public:
  using FixtureKey = std::pair<std::string, std::string>;  // (template id, chart id)

  StubClient();
  explicit StubClient(std::map<FixtureKey, std::string> fixtures);

  std::string chat(const ChatRequest& request) override;
  ClientMode mode() const override { return ClientMode::stub; }

  std::size_t calls() const { return calls_.load(); }

  static std::map<FixtureKey, std::string> bundled_fixtures();

 private:
  std::map<FixtureKey, std::string> fixtures_;
  std::atomic<std::size_t> calls_{0};
};

// OpenAI-compatible chat-completions over HTTP(S) with exponential backoff on
// 408/429/5xx and transport errors, a concurrency cap, and an optional
// token-bucket rate limit.
class HttpClient : public LlmClient {
 public:
  explicit HttpClient(ClientConfig config);
  ~HttpClient() override;

  std::string chat(const ChatRequest& request) override;
  ClientMode mode() const override { return ClientMode::http; }

  // Highest number of simultaneously in-flight requests seen so far.
  int peak_in_flight() const { return peak_in_flight_.load(); }

 private:
  void acquire_rate_token();

  ClientConfig config_;
  std::string scheme_host_port_;
  std::string path_;
  std::string api_key_;
  std::counting_semaphore<1024> slots_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_in_flight_{0};
  std::mutex bucket_mutex_;
  std::chrono::steady_clock::time_point next_token_{};
};

// Wraps a client and replaces replies for one template with malformed JSON
// for a seeded fraction of charts. The decision is keyed by (seed, template,
// chart_id) so a retry sees the same fault.
class FaultInjectingClient : public LlmClient {
 public:
  FaultInjectingClient(LlmClient& inner, std::string template_id, double probability, std::uint64_t seed);

  std::string chat(const ChatRequest& request) override;
  ClientMode mode() const override { return inner_.mode(); }

  bool faulted(const std::string& chart_id) const;

 private:
  LlmClient& inner_;
  std::string template_id_;
  double probability_;
  std::uint64_t seed_;
};

std::unique_ptr<LlmClient> make_client(const ClientConfig& config);

// Relative tolerance of the stub reviewer; tighter than the smallest
// evaluation margin.
inline constexpr double kStubReviewTolerance = 0.02;

// Asks the client whether the sample's Q&A matches the spec data. The stub
// passes iff the answer is within 2% of the value recomputed from the data.
bool review_qa(const CotSample& sample, const ChartSpec& spec, LlmClient& client, std::uint64_t seed = 0);

}  // namespace chartmark
