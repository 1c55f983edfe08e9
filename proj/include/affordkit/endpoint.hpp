#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "affordkit/rng.hpp"

namespace affordkit {

/// Body of POST /v1/generate.
struct GenerateRequest {
  std::string model;
  std::string prompt;
  std::optional<std::string> image_base64;  // PNG bytes, base64
  double temperature = 0.7;
  std::int64_t seed = 0;
};

nlohmann::json to_json(const GenerateRequest& r);
GenerateRequest request_from_json(const nlohmann::json& j);

enum class EndpointStatus {
  Ok,
  RateLimited,  // 429; honour retry_after
  Transient,    // 5xx or timeout; retry with backoff
  Unreachable,  // connection failure
  Rejected,     // non-retryable 4xx
};

struct GenerateResponse {
  EndpointStatus status = EndpointStatus::Ok;
  std::string text;
  std::optional<std::chrono::milliseconds> retry_after;
  int http_status = 200;
  std::string error;
};

/// A generative-text endpoint. Implementations must be safe to call from
/// several threads at once.
class Endpoint {
 public:
  virtual ~Endpoint() = default;
  virtual GenerateResponse generate(const GenerateRequest& request) = 0;
};

/// JSON-over-HTTP client for `<base_url>/v1/generate`. Sends
/// "Authorization: Bearer <key>" when a credential is given.
class HttpEndpoint : public Endpoint {
 public:
  explicit HttpEndpoint(std::string base_url, std::string api_key = {},
                        std::chrono::milliseconds timeout = std::chrono::seconds(60));
  GenerateResponse generate(const GenerateRequest& request) override;

 private:
  std::string base_url_;
  std::string api_key_;
  std::chrono::milliseconds timeout_;
};

/// Parses a Retry-After value: delta-seconds, integer or fractional.
std::optional<std::chrono::milliseconds> parse_retry_after(const std::string& value);

std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = 0);

struct MockOptions {
  double malformed_rate = 0.0;   // fraction of responses cut before the point list
  double rate_limit_rate = 0.0;  // fraction of calls answered with 429
  double transient_rate = 0.0;   // fraction of calls answered with 503
  bool unreachable = false;
  std::chrono::milliseconds latency{0};
  std::chrono::milliseconds retry_after{1};
  std::uint64_t seed = 0;
};

/// In-process deterministic endpoint. The default responder reads the
/// ground-truth block of a rationale prompt and answers with a canonical CoR
/// response; every fault decision is a pure function of (prompt, seed,
/// per-request call count) so runs are reproducible. Tracks peak in-flight
/// calls.
class MockEndpoint : public Endpoint {
 public:
  using Responder = std::function<std::string(const GenerateRequest&)>;

  explicit MockEndpoint(MockOptions options = {}, Responder responder = {});
  GenerateResponse generate(const GenerateRequest& request) override;

  std::size_t max_in_flight() const noexcept { return max_in_flight_.load(); }
  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  MockOptions options_;
  Responder responder_;
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> max_in_flight_{0};
  std::atomic<std::size_t> calls_{0};
  std::mutex fault_mu_;
  std::map<std::uint64_t, int> fault_attempts_;
};

/// Canonical CoR answer for a prompt built by compose_prompt.
std::string canonical_mock_response(const GenerateRequest& request);

struct RetryPolicy {
  int max_attempts = 6;  // transport attempts per request, including the first
  std::chrono::milliseconds initial_backoff{100};
  std::chrono::milliseconds max_backoff{10000};
  double multiplier = 2.0;
};

struct CallOutcome {
  GenerateResponse response;
  int attempts = 0;
  int retries = 0;
};

/// Retries RateLimited/Transient/Unreachable with jittered exponential
/// backoff (at least Retry-After when given). Returns the last response.
CallOutcome call_with_retries(Endpoint& endpoint, const GenerateRequest& request, const RetryPolicy& policy);

/// Blocking HTTP server exposing `endpoint` at POST /v1/generate. Runs until
/// stop() from another thread.
class MockServer {
 public:
  explicit MockServer(Endpoint& endpoint);
  ~MockServer();
  /// Binds and serves; returns when stopped. Port 0 picks a free port.
  bool listen(const std::string& host, int port);
  /// Binds to a free port and serves on a background thread.
  int start_background(const std::string& host = "127.0.0.1");
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace affordkit
