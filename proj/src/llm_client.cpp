#include "chartmark/llm_client.hpp"

#include <cmath>
#include <cstdlib>
#include <regex>
#include <thread>

#include "httplib.h"

#include "chartmark/cot.hpp"
#include "chartmark/error.hpp"
#include "chartmark/marker.hpp"
#include "chartmark/prompts.hpp"
#include "chartmark/util.hpp"

namespace chartmark {

using nlohmann::json;

void validate(const ClientConfig& c) {
  if (c.mode == ClientMode::http && c.endpoint.empty()) throw ConfigError("http client mode requires an endpoint");
  if (c.max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (c.max_concurrency < 1 || c.max_concurrency > 1024) throw ConfigError("max_concurrency must be in [1, 1024]");
  if (!(c.timeout_s > 0)) throw ConfigError("timeout must be positive");
  if (c.backoff_initial_s < 0 || c.rate_per_s < 0) throw ConfigError("backoff and rate must be non-negative");
}

ClientConfig client_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("client config must be an object");
  ClientConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "mode") {
        const auto mode = value.get<std::string>();
        if (mode == "stub") {
          c.mode = ClientMode::stub;
        } else if (mode == "http") {
          c.mode = ClientMode::http;
        } else {
          throw ConfigError("client mode must be stub or http");
        }
      } else if (key == "endpoint") {
        c.endpoint = value.get<std::string>();
      } else if (key == "model") {
        c.model = value.get<std::string>();
      } else if (key == "temperature") {
        c.temperature = value.get<double>();
      } else if (key == "max_retries") {
        c.max_retries = value.get<int>();
      } else if (key == "max_concurrency") {
        c.max_concurrency = value.get<int>();
      } else if (key == "timeout" || key == "timeout_s") {
        c.timeout_s = value.get<double>();
      } else if (key == "backoff_initial_s") {
        c.backoff_initial_s = value.get<double>();
      } else if (key == "rate_per_s") {
        c.rate_per_s = value.get<double>();
      } else if (key == "api_key") {
        throw ConfigError(std::string("API keys are read from ") + kApiKeyEnv + ", not from config files");
      } else {
        throw ConfigError("unknown client key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad client config value: ") + e.what());
  }
  validate(c);
  return c;
}

json to_json(const ClientConfig& c) {
  return {{"mode", c.mode == ClientMode::stub ? "stub" : "http"},
          {"endpoint", c.endpoint},
          {"model", c.model},
          {"temperature", c.temperature},
          {"max_retries", c.max_retries},
          {"max_concurrency", c.max_concurrency},
          {"timeout_s", c.timeout_s},
          {"backoff_initial_s", c.backoff_initial_s},
          {"rate_per_s", c.rate_per_s}};
}

// --- stub --------------------------------------------------------------------

namespace {

constexpr std::string_view kFixtureC01 = R"({
  "chart_id": "c01",
  "question": "What is the value of Online in 2019?",
  "answer": 412.5,
  "steps": [
    {"index": 0, "kind": "Grounding", "text": "Locate the legend entry for Online to find its color.",
     "target": {"role": "legend_entry", "series": "Online"}},
    {"index": 1, "kind": "Grounding", "text": "Find 2019 on the x-axis.",
     "target": {"role": "x_tick", "category": "2019"}},
    {"index": 2, "kind": "Grounding", "text": "Locate the top of the Online bar above 2019.",
     "target": {"role": "datapoint", "series": "Online", "category": "2019"}},
    {"index": 3, "kind": "Reasoning", "text": "Reading the bar top against the y-axis gives 412.5."}
  ]
})";

std::string prompt_text(const ChatRequest& r) {
  std::string all;
  for (const auto& m : r.messages) all += m.content + "\n";
  return all;
}

std::string stub_cot(const ChatRequest& r) {
  const ChartSpec spec = parse_spec(prompts::last_fenced_block(prompt_text(r)));
  return serialize_cot(generate_cot_rule_based(spec, r.seed));
}

std::string stub_code_edit(const ChatRequest& r) {
  const std::string text = prompt_text(r);
  const ChartSpec spec = parse_spec(prompts::last_fenced_block(text));
  const auto line_start = text.rfind("\nInstruction: ");
  const auto tag = text.find("[target: ", line_start);
  const auto line_end = text.find('\n', line_start + 1);
  if (line_start == std::string::npos || tag == std::string::npos || tag > line_end) {
    return "I could not find the element to edit.";
  }
  const auto close = text.rfind(']', line_end);
  const json target = json::parse(text.substr(tag + 9, close - tag - 9));
  Step step{0, StepKind::Grounding, "edit", element_ref_from_json(target)};
  try {
    return serialize_edited_spec(apply_marker(spec, step));
  } catch (const Error& e) {
    return std::string("Unable to edit the chart: ") + e.what();
  }
}

std::string stub_review(const ChatRequest& r) {
  const json payload = json::parse(prompts::last_fenced_block(prompt_text(r)));
  const ChartSpec spec = spec_from_json(payload.at("chart"));
  const CotSample sample = validate_cot(payload.at("qa").dump());
  const auto truth = recompute_answer(sample, spec);
  if (!truth || !sample.answer.is_numeric()) return "no";
  const double got = sample.answer.number();
  const bool ok = *truth == 0.0 ? got == 0.0 : std::fabs(got - *truth) / std::fabs(*truth) <= kStubReviewTolerance;
  return ok ? "yes" : "no";
}

}  // namespace

StubClient::StubClient() : StubClient(bundled_fixtures()) {}

StubClient::StubClient(std::map<FixtureKey, std::string> fixtures) : fixtures_(std::move(fixtures)) {}

std::map<StubClient::FixtureKey, std::string> StubClient::bundled_fixtures() {
  return {{{std::string(prompts::kCotTemplateId), "c01"}, std::string(kFixtureC01)}};
}

std::string StubClient::chat(const ChatRequest& request) {
  ++calls_;
  if (request.messages.empty()) throw ClientError("chat request has no messages");
  if (auto it = fixtures_.find({request.template_id, request.chart_id}); it != fixtures_.end()) return it->second;
  try {
    if (request.template_id == prompts::kCotTemplateId) return stub_cot(request);
    if (request.template_id == prompts::kCodeEditTemplateId) return stub_code_edit(request);
    if (request.template_id == prompts::kReviewTemplateId) return stub_review(request);
  } catch (const Error& e) {
    throw ClientError(std::string("stub could not read the prompt: ") + e.what());
  } catch (const json::exception& e) {
    throw ClientError(std::string("stub could not read the prompt: ") + e.what());
  }
  throw ClientError("stub has no reply for template '" + request.template_id + "'");
}

// --- fault injection -----------------------------------------------------------

FaultInjectingClient::FaultInjectingClient(LlmClient& inner, std::string template_id, double probability,
                                           std::uint64_t seed)
    : inner_(inner), template_id_(std::move(template_id)), probability_(probability), seed_(seed) {}

bool FaultInjectingClient::faulted(const std::string& chart_id) const {
  Rng rng(derive_seed(seed_, template_id_ + "/" + chart_id, 0xFA017));
  return rng.uniform() < probability_;
}

std::string FaultInjectingClient::chat(const ChatRequest& request) {
  if (request.template_id == template_id_ && faulted(request.chart_id)) {
    return "{\"chart_id\": \"" + request.chart_id + "\", \"question\": \"truncated";
  }
  return inner_.chat(request);
}

// --- http ----------------------------------------------------------------------

HttpClient::HttpClient(ClientConfig config) : config_(std::move(config)), slots_(config_.max_concurrency) {
  validate(config_);
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.endpoint, m, url)) throw ConfigError("endpoint must be an http(s) URL");
  scheme_host_port_ = m[1].str();
  path_ = m[2].matched ? m[2].str() : "/v1/chat/completions";
  if (const char* key = std::getenv(kApiKeyEnv)) api_key_ = key;
}

HttpClient::~HttpClient() = default;

void HttpClient::acquire_rate_token() {
  if (config_.rate_per_s <= 0) return;
  std::chrono::steady_clock::time_point wait_until;
  {
    std::lock_guard lock(bucket_mutex_);
    const auto now = std::chrono::steady_clock::now();
    if (next_token_ < now) next_token_ = now;
    wait_until = next_token_;
    next_token_ += std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / config_.rate_per_s));
  }
  std::this_thread::sleep_until(wait_until);
}

std::string HttpClient::chat(const ChatRequest& request) {
  if (request.messages.empty()) throw ClientError("chat request has no messages");
  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  const std::string body =
      json{{"model", config_.model}, {"messages", messages}, {"temperature", config_.temperature}}.dump();

  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      const double delay = std::min(30.0, config_.backoff_initial_s * std::pow(2.0, attempt - 1));
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
    acquire_rate_token();
    slots_.acquire();
    const int now = ++in_flight_;
    for (int peak = peak_in_flight_.load(); now > peak && !peak_in_flight_.compare_exchange_weak(peak, now);) {
    }
    httplib::Result res;
    {
      httplib::Client cli(scheme_host_port_);
      const auto secs = static_cast<time_t>(config_.timeout_s);
      const auto usecs = static_cast<time_t>((config_.timeout_s - static_cast<double>(secs)) * 1e6);
      cli.set_connection_timeout(secs, usecs);
      cli.set_read_timeout(secs, usecs);
      cli.set_write_timeout(secs, usecs);
      res = cli.Post(path_, headers, body, "application/json");
    }
    --in_flight_;
    slots_.release();

    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    const int status = res->status;
    if (status == 200) {
      try {
        const json reply = json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const json::exception& e) {
        throw ClientError(std::string("malformed chat-completion response: ") + e.what());
      }
    }
    last_error = "HTTP " + std::to_string(status);
    const bool retryable = status == 408 || status == 429 || status >= 500;
    if (!retryable) throw ClientError("non-retryable status " + last_error);
  }
  throw ClientError("retries exhausted after " + std::to_string(config_.max_retries) + " retries: " + last_error);
}

std::unique_ptr<LlmClient> make_client(const ClientConfig& config) {
  validate(config);
  if (config.mode == ClientMode::http) return std::make_unique<HttpClient>(config);
  return std::make_unique<StubClient>();
}

// --- review --------------------------------------------------------------------

bool review_qa(const CotSample& sample, const ChartSpec& spec, LlmClient& client, std::uint64_t seed) {
  const json payload = {{"chart", to_json(spec)}, {"qa", to_json(sample)}};
  ChatRequest request;
  request.template_id = std::string(prompts::kReviewTemplateId);
  request.chart_id = spec.id;
  request.seed = seed;
  request.messages.push_back({"user", prompts::review(payload.dump(2))});
  const std::string verdict = to_lower(trim(client.chat(request)));
  return verdict.starts_with("yes");
}

}  // namespace chartmark
