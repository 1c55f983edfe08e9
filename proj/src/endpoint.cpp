#include "affordkit/endpoint.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <thread>

#include "affordkit/cor_schema.hpp"
#include "affordkit/error.hpp"

namespace affordkit {

using nlohmann::json;

json to_json(const GenerateRequest& r) {
  json j = {{"model", r.model}, {"prompt", r.prompt}, {"temperature", r.temperature}, {"seed", r.seed}};
  if (r.image_base64) j["image"] = *r.image_base64;
  return j;
}

GenerateRequest request_from_json(const json& j) {
  GenerateRequest r;
  r.model = j.at("model").get<std::string>();
  r.prompt = j.at("prompt").get<std::string>();
  if (j.contains("image") && j["image"].is_string()) r.image_base64 = j["image"].get<std::string>();
  r.temperature = j.value("temperature", 0.7);
  r.seed = j.value("seed", std::int64_t{0});
  return r;
}

std::optional<std::chrono::milliseconds> parse_retry_after(const std::string& value) {
  if (value.empty()) return std::nullopt;
  char* end = nullptr;
  const double seconds = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || !(seconds >= 0.0) || !std::isfinite(seconds)) return std::nullopt;
  return std::chrono::milliseconds(static_cast<std::int64_t>(std::ceil(seconds * 1000.0)));
}

std::uint64_t fnv1a(std::string_view data, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ mix_seed(seed, 0);
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---- HTTP client -------------------------------------------------------------

HttpEndpoint::HttpEndpoint(std::string base_url, std::string api_key, std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), api_key_(std::move(api_key)), timeout_(timeout) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

GenerateResponse HttpEndpoint::generate(const GenerateRequest& request) {
  // One client per call: httplib::Client is not safe for concurrent use.
  httplib::Client client(base_url_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  GenerateResponse out;
  auto res = client.Post("/v1/generate", headers, to_json(request).dump(), "application/json");
  if (!res) {
    out.status = EndpointStatus::Unreachable;
    out.http_status = 0;
    out.error = httplib::to_string(res.error());
    return out;
  }
  out.http_status = res->status;
  if (res->status >= 200 && res->status < 300) {
    try {
      out.text = json::parse(res->body).at("text").get<std::string>();
      out.status = EndpointStatus::Ok;
    } catch (const json::exception& e) {
      out.status = EndpointStatus::Transient;
      out.error = fmt::format("bad response body: {}", e.what());
    }
    return out;
  }
  out.error = fmt::format("HTTP {}", res->status);
  if (res->has_header("Retry-After")) out.retry_after = parse_retry_after(res->get_header_value("Retry-After"));
  if (res->status == 429) {
    out.status = EndpointStatus::RateLimited;
  } else if (res->status >= 500 || res->status == 408) {
    out.status = EndpointStatus::Transient;
  } else {
    out.status = EndpointStatus::Rejected;
  }
  return out;
}

// ---- mock --------------------------------------------------------------------

namespace {

std::string prompt_field(std::string_view prompt, std::string_view key) {
  std::size_t pos = 0;
  while (pos < prompt.size()) {
    std::size_t end = prompt.find('\n', pos);
    if (end == std::string_view::npos) end = prompt.size();
    const std::string_view line = prompt.substr(pos, end - pos);
    if (line.starts_with(key) && line.substr(key.size()).starts_with(": "))
      return std::string(line.substr(key.size() + 2));
    pos = end + 1;
  }
  return {};
}

double unit_hash(std::string_view a, std::uint64_t b, std::uint64_t c) {
  return static_cast<double>(fnv1a(a, mix_seed(b, c)) >> 11) * 0x1.0p-53;
}

class InFlightGuard {
 public:
  InFlightGuard(std::atomic<std::size_t>& in_flight, std::atomic<std::size_t>& peak) : in_flight_(in_flight) {
    const std::size_t now = ++in_flight_;
    std::size_t prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
  }
  ~InFlightGuard() { --in_flight_; }

 private:
  std::atomic<std::size_t>& in_flight_;
};

}  // namespace

std::string canonical_mock_response(const GenerateRequest& request) {
  const std::string labels = prompt_field(request.prompt, "Reference objects");
  const std::string relation = prompt_field(request.prompt, "Relation");
  const std::string source = prompt_field(request.prompt, "Source");
  const PointSet points = parse_points(prompt_field(request.prompt, "Ground-truth points"));

  std::string refs = labels;
  for (std::size_t p = refs.find("; "); p != std::string::npos; p = refs.find("; ")) refs.replace(p, 2, " and the ");
  const bool object_ref = source == "object_reference";
  std::string phrase = relation;
  std::replace(phrase.begin(), phrase.end(), '_', ' ');

  std::array<std::string, 4> steps = {
      fmt::format("The reference object{} the {}.", labels.find(';') != std::string::npos ? "s are" : " is", refs),
      object_ref ? std::string("The instruction asks for a location on an object, so the goal's subtype is "
                               "\"Object Reference\".")
                 : std::string("The instruction asks where something can be put down, so the goal's subtype is "
                               "\"Placement Affordance\"."),
      fmt::format("The target area is the free region {} the {}, excluding space covered by other objects.", phrase,
                  refs),
      fmt::format("I pick {} points spread across that region and report their normalized coordinates.",
                  points.size()),
  };
  const AffordanceSubtype subtype = object_ref ? AffordanceSubtype::known(SubtypeKind::ObjectReference)
                                               : AffordanceSubtype::known(SubtypeKind::PlacementAffordance);
  if (points.empty()) return steps[0];
  return serialize(make_document(steps, subtype, points.points));
}

MockEndpoint::MockEndpoint(MockOptions options, Responder responder)
    : options_(options), responder_(responder ? std::move(responder) : Responder(canonical_mock_response)) {}

GenerateResponse MockEndpoint::generate(const GenerateRequest& request) {
  InFlightGuard guard(in_flight_, max_in_flight_);
  ++calls_;
  if (options_.latency.count() > 0) std::this_thread::sleep_for(options_.latency);

  GenerateResponse out;
  if (options_.unreachable) {
    out.status = EndpointStatus::Unreachable;
    out.http_status = 0;
    out.error = "mock endpoint configured unreachable";
    return out;
  }

  const std::uint64_t key = fnv1a(request.prompt, static_cast<std::uint64_t>(request.seed));
  int attempt;
  {
    std::lock_guard lock(fault_mu_);
    attempt = fault_attempts_[key]++;
  }
  const double fault = unit_hash(request.prompt, options_.seed ^ static_cast<std::uint64_t>(request.seed),
                                 static_cast<std::uint64_t>(attempt) + 1000);
  if (fault < options_.rate_limit_rate) {
    out.status = EndpointStatus::RateLimited;
    out.http_status = 429;
    out.retry_after = options_.retry_after;
    out.error = "rate limited";
    return out;
  }
  if (fault < options_.rate_limit_rate + options_.transient_rate) {
    out.status = EndpointStatus::Transient;
    out.http_status = 503;
    out.error = "service unavailable";
    return out;
  }

  out.text = responder_(request);
  if (unit_hash(request.prompt, options_.seed, static_cast<std::uint64_t>(request.seed)) < options_.malformed_rate) {
    // cut after the second step header's line: no point list, two steps
    std::size_t cut = 0;
    for (int lines = 0; lines < 2 && cut != std::string::npos; ++lines) {
      cut = out.text.find('\n', cut);
      if (cut != std::string::npos) ++cut;
    }
    out.text = out.text.substr(0, cut == std::string::npos ? out.text.size() / 2 : cut);
  }
  return out;
}

// ---- retries -----------------------------------------------------------------

CallOutcome call_with_retries(Endpoint& endpoint, const GenerateRequest& request, const RetryPolicy& policy) {
  CallOutcome outcome;
  Rng jitter = make_rng(static_cast<std::uint64_t>(request.seed), 0xbac0ff);
  double backoff_ms = static_cast<double>(policy.initial_backoff.count());
  const int max_attempts = std::max(1, policy.max_attempts);
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    outcome.attempts = attempt;
    outcome.response = endpoint.generate(request);
    const auto status = outcome.response.status;
    if (status == EndpointStatus::Ok || status == EndpointStatus::Rejected || attempt == max_attempts) break;
    ++outcome.retries;
    const double capped = std::min(backoff_ms, static_cast<double>(policy.max_backoff.count()));
    auto delay = std::chrono::milliseconds(static_cast<std::int64_t>(capped * (0.5 + 0.5 * uniform01(jitter))));
    if (outcome.response.retry_after) delay = std::max(delay, *outcome.response.retry_after);
    std::this_thread::sleep_for(delay);
    backoff_ms *= policy.multiplier;
  }
  return outcome;
}

// ---- HTTP mock server --------------------------------------------------------

struct MockServer::Impl {
  explicit Impl(Endpoint& e) : endpoint(e) {
    server.Post("/v1/generate", [this](const httplib::Request& req, httplib::Response& res) {
      GenerateRequest request;
      try {
        request = request_from_json(json::parse(req.body));
      } catch (const json::exception& e) {
        res.status = 400;
        res.set_content(json{{"error", e.what()}}.dump(), "application/json");
        return;
      }
      const GenerateResponse r = endpoint.generate(request);
      switch (r.status) {
        case EndpointStatus::Ok:
          res.status = 200;
          res.set_content(json{{"text", r.text}}.dump(), "application/json");
          return;
        case EndpointStatus::RateLimited:
          res.status = 429;
          if (r.retry_after) res.set_header("Retry-After", fmt::format("{:.3f}", r.retry_after->count() / 1000.0));
          break;
        case EndpointStatus::Rejected: res.status = 400; break;
        default: res.status = 503; break;
      }
      res.set_content(json{{"error", r.error}}.dump(), "application/json");
    });
  }

  Endpoint& endpoint;
  httplib::Server server;
  std::thread thread;
};

MockServer::MockServer(Endpoint& endpoint) : impl_(std::make_unique<Impl>(endpoint)) {}

MockServer::~MockServer() { stop(); }

bool MockServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

int MockServer::start_background(const std::string& host) {
  const int port = impl_->server.bind_to_any_port(host);
  if (port <= 0) throw Error(ErrorCode::IoError, "mock server could not bind");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void MockServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace affordkit
