#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <thread>

#include "affordkit/dataset_builder.hpp"
#include "affordkit/endpoint.hpp"

using namespace affordkit;
using namespace std::chrono_literals;

namespace {

// Fails a fixed number of times with the given status, then answers.
class FlakyEndpoint : public Endpoint {
 public:
  FlakyEndpoint(int failures, EndpointStatus status) : failures_(failures), status_(status) {}
  GenerateResponse generate(const GenerateRequest&) override {
    GenerateResponse r;
    if (calls_++ < failures_) {
      r.status = status_;
      if (status_ == EndpointStatus::RateLimited) r.retry_after = 30ms;
      return r;
    }
    r.text = "ok";
    return r;
  }
  int calls() const { return calls_; }

 private:
  int failures_;
  EndpointStatus status_;
  std::atomic<int> calls_{0};
};

RetryPolicy quick() {
  RetryPolicy p;
  p.max_attempts = 4;
  p.initial_backoff = 1ms;
  p.max_backoff = 2ms;
  return p;
}

}  // namespace

TEST_CASE("Retry-After accepts integer and fractional seconds") {
  CHECK(parse_retry_after("2") == std::chrono::milliseconds(2000));
  CHECK(parse_retry_after("0.250") == std::chrono::milliseconds(250));
  CHECK_FALSE(parse_retry_after("").has_value());
  CHECK_FALSE(parse_retry_after("soon").has_value());
  CHECK_FALSE(parse_retry_after("-1").has_value());
}

TEST_CASE("retries stop at success and count attempts") {
  FlakyEndpoint flaky(2, EndpointStatus::Transient);
  const CallOutcome out = call_with_retries(flaky, {}, quick());
  CHECK(out.response.status == EndpointStatus::Ok);
  CHECK(out.attempts == 3);
  CHECK(out.retries == 2);
}

TEST_CASE("retries give up after the attempt budget") {
  FlakyEndpoint flaky(10, EndpointStatus::Unreachable);
  const CallOutcome out = call_with_retries(flaky, {}, quick());
  CHECK(out.response.status == EndpointStatus::Unreachable);
  CHECK(out.attempts == 4);
  CHECK(flaky.calls() == 4);
}

TEST_CASE("rejected requests are not retried") {
  FlakyEndpoint flaky(10, EndpointStatus::Rejected);
  const CallOutcome out = call_with_retries(flaky, {}, quick());
  CHECK(out.attempts == 1);
}

TEST_CASE("rate limits wait at least Retry-After") {
  FlakyEndpoint flaky(2, EndpointStatus::RateLimited);
  const auto t0 = std::chrono::steady_clock::now();
  const CallOutcome out = call_with_retries(flaky, {}, quick());
  CHECK(out.response.status == EndpointStatus::Ok);
  CHECK(std::chrono::steady_clock::now() - t0 >= 60ms);
}

TEST_CASE("request JSON round trip") {
  GenerateRequest r{"m", "p", std::string("aGk="), 0.3, 42};
  const GenerateRequest back = request_from_json(to_json(r));
  CHECK(back.model == "m");
  CHECK(back.prompt == "p");
  CHECK(back.image_base64 == std::optional<std::string>("aGk="));
  CHECK(back.temperature == 0.3);
  CHECK(back.seed == 42);
}

TEST_CASE("mock faults are a pure function of prompt, seed and attempt") {
  MockOptions opt;
  opt.rate_limit_rate = 0.3;
  opt.transient_rate = 0.2;
  std::vector<EndpointStatus> first, second;
  for (int round = 0; round < 2; ++round) {
    MockEndpoint mock(opt, [](const GenerateRequest&) { return std::string("x"); });
    auto& out = round == 0 ? first : second;
    for (int i = 0; i < 200; ++i) out.push_back(mock.generate({"m", "p" + std::to_string(i % 50), {}, 0.7, i}).status);
  }
  CHECK(first == second);
  const auto faults = std::count_if(first.begin(), first.end(), [](auto s) { return s != EndpointStatus::Ok; });
  CHECK(faults > 60);
  CHECK(faults < 140);
}

TEST_CASE("HTTP client against the mock server") {
  const SceneRecord rec = generate_scene(3, {});
  GenerateRequest req{"m", compose_prompt(rec), std::nullopt, 0.7, 1};

  MockEndpoint inner;
  MockServer server(inner);
  const int port = server.start_background();
  HttpEndpoint client("http://127.0.0.1:" + std::to_string(port) + "/", "secret", 5s);
  const GenerateResponse r = client.generate(req);
  CHECK(r.status == EndpointStatus::Ok);
  CHECK(r.text == canonical_mock_response(req));
  CHECK_FALSE(validate_reasoning(r.text, rec.mask).has_value());
  server.stop();

  const GenerateResponse down = client.generate(req);
  CHECK(down.status == EndpointStatus::Unreachable);
}

TEST_CASE("HTTP status mapping, Retry-After and bearer header") {
  httplib::Server srv;
  std::string seen_auth;
  std::atomic<int> hits{0};
  srv.Post("/v1/generate", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    const int n = hits++;
    if (n == 0) {
      res.status = 429;
      res.set_header("Retry-After", "0.05");
    } else if (n == 1) {
      res.status = 503;
    } else if (n == 2) {
      res.status = 401;
    } else {
      res.set_content("not json", "text/plain");
    }
  });
  const int port = srv.bind_to_any_port("127.0.0.1");
  std::thread t([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();

  HttpEndpoint client("http://127.0.0.1:" + std::to_string(port), "k123", 5s);
  const GenerateResponse limited = client.generate({});
  CHECK(limited.status == EndpointStatus::RateLimited);
  CHECK(limited.retry_after == std::chrono::milliseconds(50));
  CHECK(seen_auth == "Bearer k123");
  CHECK(client.generate({}).status == EndpointStatus::Transient);
  const GenerateResponse rejected = client.generate({});
  CHECK(rejected.status == EndpointStatus::Rejected);
  CHECK(rejected.http_status == 401);
  CHECK(client.generate({}).status == EndpointStatus::Transient);

  HttpEndpoint anonymous("http://127.0.0.1:" + std::to_string(port), "", 5s);
  anonymous.generate({});
  CHECK(seen_auth.empty());

  srv.stop();
  t.join();
}
