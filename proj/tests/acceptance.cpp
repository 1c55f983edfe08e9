// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Every tolerance and size used below is pinned in kGate.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "affordkit/attention.hpp"
#include "affordkit/cor_schema.hpp"
#include "affordkit/dataset_builder.hpp"
#include "affordkit/endpoint.hpp"
#include "affordkit/eval_harness.hpp"
#include "affordkit/manifest.hpp"
#include "affordkit/metric.hpp"
#include "affordkit/scene.hpp"
#include "affordkit/stats.hpp"
#include "support/attention_cases.hpp"
#include "support/oracles.hpp"
#include "support/t_tail_oracle.hpp"

using namespace affordkit;

namespace {

struct Gate {
  // 1: metric oracle
  int metric_instances = 500;
  int metric_max_side = 64;
  int metric_max_points = 20;
  double metric_seconds = 5.0;
  // 2: end-to-end sanity
  std::size_t sanity_scenes = 1000;
  double uniform_band_points = 2.0;
  double sanity_seconds = 60.0;
  // 3: W2P statistics
  double w2p_p_low = 0.015;
  double w2p_p_high = 0.030;
  int tail_pairs = 100;
  double tail_tolerance = 1e-9;
  // 4: ablation arithmetic
  double gain_tolerance = 1e-9;
  double relative_gain_target = 34.2;
  double relative_gain_tolerance = 0.05;
  std::size_t ablation_scenes = 300;
  // 5: parser robustness
  int roundtrip_documents = 1000;
  int fuzz_cases = 10000;
  double parser_seconds = 30.0;
  // 6: pipeline
  std::size_t pipeline_records = 200;
  double pipeline_ratio = 0.5;
  std::size_t pipeline_concurrency = 4;
  // 7: preprocessing
  int length_sets = 1000;
  std::size_t length_batch = 8;
  // 8: attention
  int hot_patch_fixtures = 25;
  double aggregation_tolerance = 1e-6;
};
constexpr Gate kGate{};

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- 1 -----------------------------------------------------------------------

Outcome metric_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng = make_rng(1001, 0);
  int mismatches = 0;
  for (int i = 0; i < kGate.metric_instances; ++i) {
    const int w = uniform_int(rng, 1, kGate.metric_max_side), h = uniform_int(rng, 1, kGate.metric_max_side);
    const MaskImage mask = testing::random_mask(rng, w, h);
    PointSet pred{{}, true};
    const int k = uniform_int(rng, 0, kGate.metric_max_points);
    for (int j = 0; j < k; ++j) pred.points.push_back(testing::random_point(rng, w, h));
    const ImageScore s = score_image(mask, pred, "i");
    const auto oracle = testing::brute_force_score(mask, pred.points);
    const double oracle_acc = k == 0 ? 0.0 : static_cast<double>(oracle.inside) / k;
    if (s.n_inside != oracle.inside || s.accuracy != oracle_acc || s.n_points != static_cast<std::size_t>(k))
      ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < kGate.metric_seconds,
          fmt::format("{} instances, {} mismatches, {:.2f}s (limit {}s)", kGate.metric_instances, mismatches, secs,
                      kGate.metric_seconds)};
}

// ---- 2 -----------------------------------------------------------------------

Outcome end_to_end_sanity() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto scenes = generate_batch(kGate.sanity_scenes, 2002, {}, "acc-");
  const double area = compute_metadata(scenes).mean_area_fraction;
  OraclePredictor oracle;
  UniformPredictor uniform;
  EvalConfig cfg;
  cfg.seed = 2002;
  const BenchmarkResult echo = run_eval(scenes, &oracle, cfg);
  const BenchmarkResult rand = run_eval(scenes, &uniform, cfg);
  const double secs = seconds_since(t0);
  const double gap = std::abs(rand.report.mean - area) * 100.0;
  const bool pass = format_accuracy(echo.report.mean, echo.report.spread).starts_with("100.0%") &&
                    echo.report.mean == 1.0 && gap <= kGate.uniform_band_points && secs < kGate.sanity_seconds;
  return {pass, fmt::format("echo {}, uniform {:.2f}% vs mean area {:.2f}% (gap {:.2f}, limit {}), {:.2f}s",
                            format_accuracy(echo.report.mean, echo.report.spread), rand.report.mean * 100.0,
                            area * 100.0, gap, kGate.uniform_band_points, secs)};
}

// ---- 3 -----------------------------------------------------------------------

Outcome w2p_statistics() {
  const stats::SummarySample ours{48.1, 0.1, 3, stats::Dispersion::StandardError};
  const stats::SummarySample base{43.9, 0.6, 3, stats::Dispersion::StandardError};
  const stats::TestResult w2p = stats::t_test(ours, base, stats::TestVariant::WelchFromSummary);
  const bool bracket = w2p.p >= kGate.w2p_p_low && w2p.p <= kGate.w2p_p_high;

  Rng rng = make_rng(3003, 0);
  double worst = 0.0;
  for (int i = 0; i < kGate.tail_pairs; ++i) {
    const double t = (uniform01(rng) - 0.5) * 30.0;
    const double df = 0.5 + uniform01(rng) * 99.5;
    worst = std::max(worst, std::abs(stats::t_two_sided_p(t, df) - testing::t_two_sided_p_oracle(t, df)));
  }
  return {bracket && worst <= kGate.tail_tolerance,
          fmt::format("W2P welch/se t={:.4f} df={:.4f} p={:.6f} in [{}, {}]; tail max |err| {:.2e} over {} pairs",
                      w2p.t, w2p.df, w2p.p, kGate.w2p_p_low, kGate.w2p_p_high, worst, kGate.tail_pairs)};
}

// ---- 4 -----------------------------------------------------------------------

// Simulated 5-fraction series: a predictor whose echo probability rises with
// the reasoning fraction, evaluated on three synthetic benchmarks.
std::vector<stats::AblationSeries> synthetic_series() {
  const std::vector<double> fractions = {0.0, 0.25, 0.5, 0.75, 1.0};
  SceneConfig hard;
  hard.relation_weights = {{Relation::Between, 1.0}, {Relation::NextTo, 1.0}};
  const std::vector<std::pair<std::string, std::vector<SceneRecord>>> benches = {
      {"synthetic-a", generate_batch(kGate.ablation_scenes, 4004, {}, "a-")},
      {"synthetic-b", generate_batch(kGate.ablation_scenes, 4005, {}, "b-")},
      {"synthetic-hard", generate_batch(kGate.ablation_scenes, 4006, hard, "h-")},
  };
  std::vector<stats::AblationSeries> out;
  for (const auto& [name, scenes] : benches) {
    std::vector<std::pair<double, double>> pts;
    for (double f : fractions) {
      MixturePredictor sim(0.2 + 0.5 * f);
      EvalConfig cfg;
      cfg.seed = 4004;
      pts.emplace_back(f, run_eval(scenes, &sim, cfg).report.mean * 100.0);
    }
    out.push_back({name, pts});
  }
  return out;
}

Outcome ablation_arithmetic() {
  const auto rows = stats::ablation_report({{"RoboRefIt", {{0.0, 40.6}, {1.0, 48.1}}},
                                            {"W2P", {{0.0, 36.1}, {1.0, 43.7}}},
                                            {"W2P(h)", {{0.0, 30.7}, {1.0, 41.2}}}});
  const double expected[] = {7.5, 7.6, 10.5};
  bool gains = rows.size() == 3;
  for (std::size_t i = 0; gains && i < 3; ++i)
    gains = std::abs(rows[i].absolute_gain - expected[i]) <= kGate.gain_tolerance;
  const double rel = rows.size() == 3 ? rows[2].relative_gain_pct : 0.0;
  const bool rel_ok = std::abs(rel - kGate.relative_gain_target) <= kGate.relative_gain_tolerance;

  const auto series = stats::ablation_report(synthetic_series());
  std::string slopes;
  bool positive = true;
  for (const auto& r : series) {
    positive = positive && r.trend.slope > 0.0;
    slopes += fmt::format("{}{}={:.1f}", slopes.empty() ? "" : ", ", r.benchmark, r.trend.slope);
  }
  return {gains && rel_ok && positive,
          fmt::format("gains {:.1f}/{:.1f}/{:.1f}, W2P(h) relative {:.4f}%, synthetic slopes [{}]",
                      rows[0].absolute_gain, rows[1].absolute_gain, rows[2].absolute_gain, rel, slopes)};
}

// ---- 5 -----------------------------------------------------------------------

Outcome parser_robustness() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng = make_rng(5005, 0);
  int roundtrip_failures = 0;
  for (int i = 0; i < kGate.roundtrip_documents; ++i) {
    const CoRDocument d = testing::random_document(rng);
    const std::string text = serialize(d);
    const CoRDocument back = parse_document(text);
    if (!testing::documents_match(d, back) || serialize(back) != text) ++roundtrip_failures;
  }
  int crashes = 0, unstructured = 0;
  for (int i = 0; i < kGate.fuzz_cases; ++i) {
    const std::string bytes = testing::random_bytes(rng, 512);
    try {
      const CoRDocument d = parse_document(bytes);
      bool ok = d.complete || !d.diagnostics.empty();
      for (const auto& g : d.diagnostics) ok = ok && !g.code.empty() && g.offset <= bytes.size();
      for (const auto& p : d.points.points) ok = ok && p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0;
      if (!ok) ++unstructured;
    } catch (...) {
      ++crashes;
    }
  }
  const double secs = seconds_since(t0);
  return {roundtrip_failures == 0 && crashes == 0 && unstructured == 0 && secs < kGate.parser_seconds,
          fmt::format("{} round trips ({} failed), {} fuzz cases ({} exceptions, {} unstructured), {:.2f}s (limit {}s)",
                      kGate.roundtrip_documents, roundtrip_failures, kGate.fuzz_cases, crashes, unstructured, secs,
                      kGate.parser_seconds)};
}

// ---- 6 -----------------------------------------------------------------------

struct BuildRun {
  std::string bytes;
  PipelineStats stats;
  std::size_t rejects = 0;
  std::size_t mock_peak = 0;
  MixResult mix;
  bool revalidated = true;
};

BuildRun build_once(const std::vector<SceneRecord>& scenes, const std::string& path) {
  MockOptions opt;
  opt.malformed_rate = 0.1;
  opt.rate_limit_rate = 0.05;
  opt.transient_rate = 0.05;
  opt.latency = std::chrono::milliseconds(1);
  MockEndpoint mock(opt);
  PipelineConfig cfg;
  cfg.concurrency = kGate.pipeline_concurrency;
  cfg.seed = 6006;
  cfg.transport.initial_backoff = std::chrono::milliseconds(1);
  cfg.transport.max_backoff = std::chrono::milliseconds(2);
  const PipelineResult res = generate_rationales(scenes, mock, cfg);

  BuildRun out;
  out.stats = res.stats;
  out.rejects = res.rejects.size();
  out.mock_peak = mock.max_in_flight();
  out.mix = mix_datasets(res.records, make_standard_records(scenes), kGate.pipeline_ratio, kGate.pipeline_records,
                         6006);
  std::map<std::string, const SceneRecord*> by_id;
  for (const auto& s : scenes) by_id[s.id] = &s;
  for (const auto& r : out.mix.records) {
    if (r.kind != RecordKind::Reasoning) continue;
    const CoRDocument d = parse_document(r.assistant());
    out.revalidated = out.revalidated && d.steps.size() == 4 &&
                      !validate_reasoning(r.assistant(), by_id.at(r.id)->mask).has_value();
  }
  write_training_file(out.mix.records, path);
  out.bytes = read_text_file(path);
  return out;
}

Outcome pipeline_correctness() {
  const auto scenes = generate_batch(kGate.pipeline_records, 6006, {}, "p-");
  const auto dir = std::filesystem::temp_directory_path() / "affordkit_acceptance_pipeline";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const BuildRun a = build_once(scenes, (dir / "a.jsonl").string());
  const BuildRun b = build_once(scenes, (dir / "b.jsonl").string());
  std::filesystem::remove_all(dir);

  const bool counts = a.mix.n_reasoning == 100 && a.mix.n_standard == 100 && a.mix.records.size() == 200;
  const bool accounting = a.stats.requested == a.stats.succeeded + a.rejects &&
                          a.stats.requested == kGate.pipeline_records;
  const bool identical = a.bytes == b.bytes;
  const std::size_t peak = std::max({a.mock_peak, b.mock_peak, a.stats.max_in_flight, b.stats.max_in_flight});
  const bool bounded = peak <= kGate.pipeline_concurrency;
  return {counts && accounting && identical && bounded && a.revalidated && b.revalidated,
          fmt::format("{} reasoning + {} standard; requested {} = succeeded {} + rejects {}; revalidated {}; "
                      "byte-identical {}; peak in-flight {} (limit {})",
                      a.mix.n_reasoning, a.mix.n_standard, a.stats.requested, a.stats.succeeded, a.rejects,
                      a.revalidated && b.revalidated, identical, peak, kGate.pipeline_concurrency)};
}

// ---- 7 -----------------------------------------------------------------------

Outcome preprocessing() {
  bool idempotent = true;
  for (int side : {1, 7, 64, 336}) {
    Image img(side, side, 3, 0);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 31);
    const PaddedImage p = pad_to_square(img);
    idempotent = idempotent && p.image == img && p.map_point({0.3, 0.9}) == Point{0.3, 0.9};
  }
  int rescored_changes = 0, scenes_checked = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    SceneConfig cfg;
    cfg.width = 64 + static_cast<int>(seed % 5) * 24;
    cfg.height = 48 + static_cast<int>(seed % 3) * 40;
    const SceneRecord r = generate_scene(seed, cfg);
    const PaddedImage geom = pad_to_square(render_scene(r));
    const PointSet mapped{map_points(geom, r.gt_points.points), true};
    const double before = score_image(r.mask, r.gt_points, r.id).accuracy;
    const double after = score_image(pad_mask_to_square(r.mask), mapped, r.id).accuracy;
    rescored_changes += before == after ? 0 : 1;
    ++scenes_checked;
  }

  Rng rng = make_rng(7007, 0);
  int not_permutation = 0, not_tighter = 0;
  for (int s = 0; s < kGate.length_sets; ++s) {
    std::vector<LengthItem> items(64 + uniform_index(rng, 449));
    for (auto& it : items) {
      it.length = 16 + uniform_index(rng, 2048);
      it.has_image = uniform01(rng) < 0.8;
    }
    const auto batches = group_by_length(items, kGate.length_batch, static_cast<std::uint64_t>(s));
    std::vector<std::size_t> seen;
    for (const auto& bt : batches) seen.insert(seen.end(), bt.begin(), bt.end());
    std::sort(seen.begin(), seen.end());
    bool perm = seen.size() == items.size();
    for (std::size_t i = 0; perm && i < seen.size(); ++i) perm = seen[i] == i;
    not_permutation += perm ? 0 : 1;

    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_in_place(order, rng);
    std::vector<std::vector<std::size_t>> shuffled;
    for (std::size_t i = 0; i < order.size(); i += kGate.length_batch)
      shuffled.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                            order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + kGate.length_batch)));
    not_tighter += mean_batch_range(items, batches) < mean_batch_range(items, shuffled) ? 0 : 1;
  }
  return {idempotent && rescored_changes == 0 && not_permutation == 0 && not_tighter == 0,
          fmt::format("square idempotent {}; {} scenes re-scored, {} changed; {} length sets, {} non-permutations, "
                      "{} not tighter than shuffle",
                      idempotent, scenes_checked, rescored_changes, kGate.length_sets, not_permutation, not_tighter)};
}

// ---- 8 -----------------------------------------------------------------------

Outcome attention_rendering() {
  int argmax_misses = 0, overlays = 0;
  for (int i = 0; i < kGate.hot_patch_fixtures; ++i) {
    const auto f = testing::hot_patch_fixture(8008 + static_cast<std::uint64_t>(i), 24, 24, 4);
    const StepSegmentation seg = segment_tokens(f.dump, f.doc);
    const Image canvas(336, 336, 3, 0);
    for (std::size_t k = 0; k < 4; ++k) {
      const StepHeatmap h = aggregate_step(f.dump, kStepOrder[k], seg.step_tokens[k]);
      const Image over = render_overlay(canvas, h, PointSet{{}, true});
      argmax_misses += testing::brightest_patch(over, 24, 24) == f.hot[k] ? 0 : 1;
      ++overlays;
    }
  }

  Rng rng = make_rng(8009, 0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    AttentionDump d;
    d.rows = uniform_int(rng, 1, 24);
    d.cols = uniform_int(rng, 1, 24);
    const std::size_t n = 1 + uniform_index(rng, 40);
    for (std::size_t t = 0; t < n; ++t) d.tokens.push_back({"t", 0, 0});
    for (std::size_t j = 0; j < n * d.patches(); ++j) d.weights.push_back(static_cast<float>(uniform01(rng) * 5.0));
    std::vector<std::size_t> tokens;
    for (std::size_t t = 0; t < n; ++t)
      if (uniform01(rng) < 0.6) tokens.push_back(t);
    if (tokens.empty()) tokens.push_back(n - 1);
    const auto got = aggregate_step(d, StepKind::DefineSearchSpace, tokens).raw;
    const auto oracle = testing::brute_force_mean(d, tokens);
    for (std::size_t p = 0; p < got.size(); ++p) worst = std::max(worst, std::abs(got[p] - oracle[p]));
  }

  int segmentation_failures = 0;
  const auto cases = testing::segmentation_cases();
  for (const auto& c : cases) segmentation_failures += segment_tokens(c.dump, c.doc).token_step == c.expected ? 0 : 1;

  return {argmax_misses == 0 && worst <= kGate.aggregation_tolerance && segmentation_failures == 0,
          fmt::format("{} overlays, {} argmax misses; aggregation max |err| {:.2e} (limit {:.0e}); {} texts, {} "
                      "segmentation mismatches",
                      overlays, argmax_misses, worst, kGate.aggregation_tolerance, cases.size(),
                      segmentation_failures)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"metric-oracle equivalence", metric_oracle},
      {"end-to-end synthetic sanity", end_to_end_sanity},
      {"W2P statistics and t-tail oracle", w2p_statistics},
      {"ablation arithmetic", ablation_arithmetic},
      {"parser robustness", parser_robustness},
      {"pipeline under mock endpoint", pipeline_correctness},
      {"preprocessing properties", preprocessing},
      {"attention rendering", attention_rendering},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, fmt::format("threw: {}", e.what())};
    }
    failed += o.pass ? 0 : 1;
    std::printf("[%s] criterion %zu: %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
