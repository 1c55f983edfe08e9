#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "affordkit/cor_schema.hpp"
#include "affordkit/endpoint.hpp"
#include "affordkit/metric.hpp"
#include "affordkit/scene.hpp"

namespace affordkit {

/// One model answer for one record in one run. `parsed` and `diagnostics` are
/// always recomputed from `response_text`, never stored independently.
struct PredictionRecord {
  std::string record_id;
  std::string run_id;
  std::string response_text;
  bool failed = false;  // endpoint gave up; response_text is empty
  std::string error;
  PointSet parsed = PointSet::unparsed();
  std::vector<Diagnostic> diagnostics;
};

PredictionRecord make_prediction(std::string record_id, std::string run_id, std::string response_text,
                                 RangePolicy policy = RangePolicy::Clamp);
nlohmann::json to_json(const PredictionRecord& p);
PredictionRecord prediction_from_json(const nlohmann::json& j, RangePolicy policy = RangePolicy::Clamp);

/// Line-delimited cache of raw responses keyed by (run_id, record_id).
/// Saved in key order so the file does not depend on completion order.
class ResponseCache {
 public:
  ResponseCache() = default;
  ResponseCache(ResponseCache&& other) noexcept;
  ResponseCache& operator=(ResponseCache&& other) noexcept;
  static ResponseCache load(const std::string& path, RangePolicy policy = RangePolicy::Clamp);

  std::optional<PredictionRecord> find(const std::string& run_id, const std::string& record_id) const;
  void put(PredictionRecord p);
  std::size_t size() const;
  void save(const std::string& path) const;

 private:
  mutable std::mutex mu_;
  std::map<std::pair<std::string, std::string>, PredictionRecord> entries_;
};

struct Prediction {
  std::string text;
  bool failed = false;
  std::string error;
};

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Prediction predict(const SceneRecord& record, std::uint64_t request_seed) = 0;
};

/// Echoes the first ground-truth point.
class OraclePredictor final : public Predictor {
 public:
  Prediction predict(const SceneRecord& record, std::uint64_t request_seed) override;
};

/// `k` points uniform over the unit square.
class UniformPredictor final : public Predictor {
 public:
  explicit UniformPredictor(int k = 1) : k_(k) {}
  Prediction predict(const SceneRecord& record, std::uint64_t request_seed) override;

 private:
  int k_;
};

/// Each of `k` points is a ground-truth point with probability
/// `echo_probability`, otherwise uniform. Stands in for a trained model whose
/// quality is a known dial.
class MixturePredictor final : public Predictor {
 public:
  MixturePredictor(double echo_probability, int k = 5) : p_(echo_probability), k_(k) {}
  Prediction predict(const SceneRecord& record, std::uint64_t request_seed) override;

 private:
  double p_;
  int k_;
};

/// Sends the reasoning-style human turn to an endpoint and returns the text.
class EndpointPredictor final : public Predictor {
 public:
  EndpointPredictor(Endpoint& endpoint, std::string model, double temperature = 0.7, RetryPolicy retry = {})
      : endpoint_(endpoint), model_(std::move(model)), temperature_(temperature), retry_(retry) {}
  Prediction predict(const SceneRecord& record, std::uint64_t request_seed) override;

 private:
  Endpoint& endpoint_;
  std::string model_;
  double temperature_;
  RetryPolicy retry_;
};

struct EvalConfig {
  std::string benchmark = "benchmark";
  std::string model = "model";
  int runs = 3;
  std::uint64_t seed = 0;
  std::size_t concurrency = 4;
  RangePolicy range_policy = RangePolicy::Clamp;
  bool cache_only = false;
};

/// Seed sent for record `index` in run `run`.
std::uint64_t request_seed(std::uint64_t seed, int run, std::size_t index);
std::string run_name(int run);

struct FailureCounts {
  std::size_t endpoint = 0;  // gave up after retries; scored as 0
  std::size_t unparsed = 0;  // answer had no point list
  friend bool operator==(const FailureCounts&, const FailureCounts&) = default;
};

struct BenchmarkResult {
  std::string benchmark;
  std::string model;
  EvalReport report;
  std::vector<RunScores> runs;  // per-image breakdown, manifest order
  FailureCounts failures;
};

bool operator==(const BenchmarkResult& a, const BenchmarkResult& b);

/// Runs `config.runs` passes over the manifest. Answers come from `cache`
/// when present; otherwise from `predictor`, and are then added to the cache.
/// With `cache_only` (or no predictor) a missing entry throws MissingCache.
BenchmarkResult run_eval(const std::vector<SceneRecord>& manifest, Predictor* predictor, const EvalConfig& config,
                         ResponseCache* cache = nullptr);

nlohmann::json to_json(const BenchmarkResult& r);
/// image_id,run_id,n_points,n_inside,accuracy,empty_prediction
std::string per_image_csv(const BenchmarkResult& r);
/// Writes <dir>/report.json and <dir>/per_image.csv.
void write_result(const BenchmarkResult& r, const std::string& dir);
/// Inverse of write_result. Per-image accuracies come back rounded to the
/// six decimals of the CSV; the report numbers are exact.
BenchmarkResult read_result(const std::string& dir);

/// "48.1% ± 0.1" from fractions 0.481 and 0.001.
std::string format_accuracy(double mean, double spread);

struct ComparisonRow {
  std::string model;
  double mean = 0.0;
  double spread = 0.0;
  std::string cell;
};

struct ComparisonTable {
  std::string benchmark;
  std::vector<ComparisonRow> rows;  // mean descending, then model name
  std::string to_text() const;
  std::string to_csv() const;
};

/// Throws BenchmarkMismatch unless every result has the same benchmark name
/// and image set.
ComparisonTable compare_models(const std::vector<BenchmarkResult>& results);

}  // namespace affordkit
