#include "affordkit/eval_harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fmt/format.h>
#include <set>
#include <fstream>
#include <sstream>
#include <thread>

#include "affordkit/dataset_builder.hpp"
#include "affordkit/error.hpp"
#include "affordkit/manifest.hpp"
#include "affordkit/rng.hpp"

namespace affordkit {

using nlohmann::json;

PredictionRecord make_prediction(std::string record_id, std::string run_id, std::string response_text,
                                 RangePolicy policy) {
  PredictionRecord p;
  p.record_id = std::move(record_id);
  p.run_id = std::move(run_id);
  p.response_text = std::move(response_text);
  try {
    p.parsed = parse_points(p.response_text, policy, &p.diagnostics);
  } catch (const Error& e) {
    p.parsed = PointSet::unparsed();
    p.diagnostics.push_back({Severity::Error, "out_of_range", e.what(), 0});
  }
  return p;
}

json to_json(const PredictionRecord& p) {
  json j = {{"record_id", p.record_id}, {"run_id", p.run_id}, {"response_text", p.response_text}};
  if (p.failed) {
    j["failed"] = true;
    j["error"] = p.error;
  }
  return j;
}

PredictionRecord prediction_from_json(const json& j, RangePolicy policy) {
  PredictionRecord p = make_prediction(j.at("record_id").get<std::string>(), j.at("run_id").get<std::string>(),
                                       j.at("response_text").get<std::string>(), policy);
  p.failed = j.value("failed", false);
  p.error = j.value("error", std::string());
  return p;
}

// ---- cache -------------------------------------------------------------------

ResponseCache::ResponseCache(ResponseCache&& other) noexcept {
  std::lock_guard lock(other.mu_);
  entries_ = std::move(other.entries_);
}

ResponseCache& ResponseCache::operator=(ResponseCache&& other) noexcept {
  if (this != &other) {
    std::scoped_lock lock(mu_, other.mu_);
    entries_ = std::move(other.entries_);
  }
  return *this;
}

ResponseCache ResponseCache::load(const std::string& path, RangePolicy policy) {
  ResponseCache cache;
  std::ifstream in(path);
  if (!in) return cache;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      cache.put(prediction_from_json(json::parse(line), policy));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, fmt::format("{}:{}: {}", path, line_no, e.what()));
    }
  }
  return cache;
}

std::optional<PredictionRecord> ResponseCache::find(const std::string& run_id, const std::string& record_id) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find({run_id, record_id});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::put(PredictionRecord p) {
  std::lock_guard lock(mu_);
  auto key = std::make_pair(p.run_id, p.record_id);
  entries_.insert_or_assign(std::move(key), std::move(p));
}

std::size_t ResponseCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

void ResponseCache::save(const std::string& path) const {
  std::string text;
  {
    std::lock_guard lock(mu_);
    for (const auto& [key, p] : entries_) text += to_json(p).dump() + "\n";
  }
  write_text_file(path, text);
}

// ---- predictors --------------------------------------------------------------

namespace {

Rng record_rng(const SceneRecord& record, std::uint64_t request_seed) {
  return make_rng(fnv1a(record.id, request_seed), 0x9d1c);
}

}  // namespace

Prediction OraclePredictor::predict(const SceneRecord& record, std::uint64_t) {
  if (record.gt_points.empty()) return {"[]", false, {}};
  return {format_point_list({record.gt_points.points.front()}), false, {}};
}

Prediction UniformPredictor::predict(const SceneRecord& record, std::uint64_t request_seed) {
  Rng rng = record_rng(record, request_seed);
  std::vector<Point> pts;
  for (int i = 0; i < k_; ++i) {
    const double x = uniform01(rng);
    pts.push_back({x, uniform01(rng)});
  }
  return {format_point_list(pts), false, {}};
}

Prediction MixturePredictor::predict(const SceneRecord& record, std::uint64_t request_seed) {
  Rng rng = record_rng(record, request_seed);
  std::vector<Point> pts;
  const auto& gt = record.gt_points.points;
  for (int i = 0; i < k_; ++i) {
    if (!gt.empty() && uniform01(rng) < p_) {
      pts.push_back(gt[uniform_index(rng, gt.size())]);
    } else {
      const double x = uniform01(rng);
      pts.push_back({x, uniform01(rng)});
    }
  }
  return {format_point_list(pts), false, {}};
}

Prediction EndpointPredictor::predict(const SceneRecord& record, std::uint64_t request_seed) {
  GenerateRequest request;
  request.model = model_;
  request.prompt = human_turn(record, RecordKind::Reasoning);
  request.temperature = temperature_;
  request.seed = static_cast<std::int64_t>(request_seed >> 1);
  const CallOutcome outcome = call_with_retries(endpoint_, request, retry_);
  if (outcome.response.status != EndpointStatus::Ok)
    return {{}, true, fmt::format("{} after {} attempt(s)", outcome.response.error, outcome.attempts)};
  return {outcome.response.text, false, {}};
}

// ---- evaluation --------------------------------------------------------------

std::uint64_t request_seed(std::uint64_t seed, int run, std::size_t index) {
  return mix_seed(mix_seed(seed, 1000 + static_cast<std::uint64_t>(run)), index);
}

std::string run_name(int run) { return fmt::format("run{}", run + 1); }

bool operator==(const BenchmarkResult& a, const BenchmarkResult& b) {
  if (a.benchmark != b.benchmark || a.model != b.model || !(a.report == b.report) || !(a.failures == b.failures))
    return false;
  if (a.runs.size() != b.runs.size()) return false;
  for (std::size_t i = 0; i < a.runs.size(); ++i)
    if (a.runs[i].run_id != b.runs[i].run_id || a.runs[i].images != b.runs[i].images) return false;
  return true;
}

BenchmarkResult run_eval(const std::vector<SceneRecord>& manifest, Predictor* predictor, const EvalConfig& config,
                         ResponseCache* cache) {
  if (config.runs < 1) throw Error(ErrorCode::InvalidArgument, "runs must be >= 1");
  if (manifest.empty()) throw Error(ErrorCode::InvalidArgument, "manifest is empty");
  const bool offline = config.cache_only || predictor == nullptr;
  if (offline) {
    for (int run = 0; run < config.runs; ++run)
      for (const auto& rec : manifest)
        if (!cache || !cache->find(run_name(run), rec.id))
          throw Error(ErrorCode::MissingCache, fmt::format("no cached response for {} in {}", rec.id, run_name(run)));
  }

  BenchmarkResult result;
  result.benchmark = config.benchmark;
  result.model = config.model;
  const std::size_t workers = std::max<std::size_t>(1, std::min(config.concurrency, manifest.size()));

  for (int run = 0; run < config.runs; ++run) {
    const std::string run_id = run_name(run);
    std::vector<PredictionRecord> predictions(manifest.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto work = [&] {
      for (std::size_t i = next++; i < manifest.size(); i = next++) {
        try {
          const SceneRecord& rec = manifest[i];
          if (cache) {
            if (auto hit = cache->find(run_id, rec.id)) {
              predictions[i] = std::move(*hit);
              continue;
            }
          }
          const Prediction answer = predictor->predict(rec, request_seed(config.seed, run, i));
          PredictionRecord p = make_prediction(rec.id, run_id, answer.text, config.range_policy);
          p.failed = answer.failed;
          p.error = answer.error;
          if (cache) cache->put(p);
          predictions[i] = std::move(p);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);

    RunScores scores;
    scores.run_id = run_id;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
      const PredictionRecord& p = predictions[i];
      if (p.failed) ++result.failures.endpoint;
      else if (!p.parsed.parsed) ++result.failures.unparsed;
      scores.images.push_back(score_image(manifest[i].mask, p.parsed, manifest[i].id));
    }
    result.runs.push_back(std::move(scores));
  }
  result.report = aggregate(result.runs);
  return result;
}

json to_json(const BenchmarkResult& r) {
  json runs = json::array();
  for (const auto& run : r.report.per_run) runs.push_back({{"run_id", run.run_id}, {"mean", run.mean}});
  std::size_t n_images = r.runs.empty() ? 0 : r.runs.front().images.size();
  return {{"benchmark", r.benchmark},
          {"model", r.model},
          {"n_images", n_images},
          {"n_runs", r.runs.size()},
          {"mean", r.report.mean},
          {"spread", r.report.spread},
          {"single_run", r.report.single_run},
          {"formatted", format_accuracy(r.report.mean, r.report.spread)},
          {"per_run", runs},
          {"failures", {{"endpoint", r.failures.endpoint}, {"unparsed", r.failures.unparsed}}}};
}

std::string per_image_csv(const BenchmarkResult& r) {
  std::string out = "image_id,run_id,n_points,n_inside,accuracy,empty_prediction\n";
  for (const auto& run : r.runs)
    for (const auto& s : run.images)
      out += fmt::format("{},{},{},{},{:.6f},{}\n", s.image_id, run.run_id, s.n_points, s.n_inside, s.accuracy,
                         s.empty_prediction ? 1 : 0);
  return out;
}

void write_result(const BenchmarkResult& r, const std::string& dir) {
  ensure_directory(dir);
  write_text_file(dir + "/report.json", to_json(r).dump(2) + "\n");
  write_text_file(dir + "/per_image.csv", per_image_csv(r));
}

BenchmarkResult read_result(const std::string& dir) {
  BenchmarkResult r;
  json report;
  try {
    report = json::parse(read_text_file(dir + "/report.json"));
    r.benchmark = report.at("benchmark").get<std::string>();
    r.model = report.at("model").get<std::string>();
    r.report.mean = report.at("mean").get<double>();
    r.report.spread = report.at("spread").get<double>();
    r.report.single_run = report.value("single_run", false);
    for (const auto& run : report.at("per_run"))
      r.report.per_run.push_back({run.at("run_id").get<std::string>(), run.at("mean").get<double>()});
    r.failures.endpoint = report.at("failures").value("endpoint", std::size_t{0});
    r.failures.unparsed = report.at("failures").value("unparsed", std::size_t{0});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, fmt::format("{}/report.json: {}", dir, e.what()));
  }

  std::istringstream csv(read_text_file(dir + "/per_image.csv"));
  std::string line;
  std::getline(csv, line);
  std::size_t line_no = 1;
  while (std::getline(csv, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 6) throw Error(ErrorCode::ParseError, fmt::format("{}/per_image.csv:{}: expected 6 columns", dir, line_no));
    ImageScore s;
    s.image_id = cells[0];
    try {
      s.n_points = std::stoul(cells[2]);
      s.n_inside = std::stoul(cells[3]);
      s.accuracy = std::stod(cells[4]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, fmt::format("{}/per_image.csv:{}: bad number", dir, line_no));
    }
    s.empty_prediction = cells[5] == "1";
    if (r.runs.empty() || r.runs.back().run_id != cells[1]) r.runs.push_back({cells[1], {}});
    r.runs.back().images.push_back(std::move(s));
  }
  return r;
}

std::string format_accuracy(double mean, double spread) {
  // +0.0 folds a negative zero from rounding into "0.0"
  return fmt::format("{:.1f}% \xC2\xB1 {:.1f}", mean * 100.0 + 0.0, spread * 100.0 + 0.0);
}

ComparisonTable compare_models(const std::vector<BenchmarkResult>& results) {
  if (results.empty()) throw Error(ErrorCode::InvalidArgument, "nothing to compare");
  auto image_set = [](const BenchmarkResult& r) {
    std::multiset<std::string> ids;
    if (!r.runs.empty())
      for (const auto& s : r.runs.front().images) ids.insert(s.image_id);
    return ids;
  };
  const auto reference = image_set(results.front());
  ComparisonTable table;
  table.benchmark = results.front().benchmark;
  for (const auto& r : results) {
    if (r.benchmark != table.benchmark)
      throw Error(ErrorCode::BenchmarkMismatch,
                  fmt::format("benchmark '{}' differs from '{}'", r.benchmark, table.benchmark));
    if (image_set(r) != reference)
      throw Error(ErrorCode::BenchmarkMismatch, fmt::format("model '{}' was scored on a different image set", r.model));
    table.rows.push_back({r.model, r.report.mean, r.report.spread, format_accuracy(r.report.mean, r.report.spread)});
  }
  std::stable_sort(table.rows.begin(), table.rows.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
    if (a.mean != b.mean) return a.mean > b.mean;
    return a.model < b.model;
  });
  return table;
}

std::string ComparisonTable::to_text() const {
  std::size_t width = 5;
  for (const auto& r : rows) width = std::max(width, r.model.size());
  std::string out = fmt::format("{:<{}}  {}\n", "model", width, benchmark);
  for (const auto& r : rows) out += fmt::format("{:<{}}  {}\n", r.model, width, r.cell);
  return out;
}

std::string ComparisonTable::to_csv() const {
  std::string out = "benchmark,model,mean,spread,formatted\n";
  for (const auto& r : rows)
    out += fmt::format("{},{},{:.6f},{:.6f},{}\n", benchmark, r.model, r.mean, r.spread, r.cell);
  return out;
}

}  // namespace affordkit
