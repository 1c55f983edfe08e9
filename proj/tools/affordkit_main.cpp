#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <iostream>
#include <memory>

#include "affordkit/attention.hpp"
#include "affordkit/dataset_builder.hpp"
#include "affordkit/endpoint.hpp"
#include "affordkit/error.hpp"
#include "affordkit/eval_harness.hpp"
#include "affordkit/manifest.hpp"
#include "affordkit/plot.hpp"
#include "affordkit/scene.hpp"
#include "affordkit/stats.hpp"
#include "cli_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace affordkit;

namespace {

constexpr const char* kApiKeyEnv = "AFFORDKIT_API_KEY";

void log_event(std::string_view level, std::string_view event, const json& fields = json::object()) {
  std::cerr << cli::log_line(level, event, fields) << '\n';
}

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

// ---- shared option groups ------------------------------------------------------

struct EndpointOptions {
  std::string endpoint_url;
  bool mock = false;
  double mock_malformed_rate = 0.1;
  double mock_rate_limit_rate = 0.0;
  double mock_transient_rate = 0.0;
  std::string model;
  double temperature = 0.7;
  int timeout = 60;
  int transport_attempts = 6;

  void add_to(CLI::App* app, const std::string& default_model) {
    model = default_model;
    app->add_option("--endpoint-url", endpoint_url, "Base URL of the generation endpoint (POST /v1/generate)");
    app->add_flag("--mock", mock, "Use the in-process mock endpoint instead of --endpoint-url");
    app->add_option("--mock-malformed-rate", mock_malformed_rate, "Mock: fraction of truncated answers")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    app->add_option("--mock-rate-limit-rate", mock_rate_limit_rate, "Mock: fraction of calls answered with 429")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    app->add_option("--mock-transient-rate", mock_transient_rate, "Mock: fraction of calls answered with 503")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    app->add_option("--model", model, "Model name sent with every request")->capture_default_str();
    app->add_option("--temperature", temperature, "Sampling temperature")->capture_default_str();
    app->add_option("--timeout", timeout, "HTTP timeout in seconds")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--transport-attempts", transport_attempts, "Attempts per request on 429/5xx/connection errors")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  }

  RetryPolicy retry() const {
    RetryPolicy p;
    p.max_attempts = transport_attempts;
    if (endpoint_url.empty()) {
      p.initial_backoff = std::chrono::milliseconds(1);
      p.max_backoff = std::chrono::milliseconds(4);
    }
    return p;
  }

  std::unique_ptr<Endpoint> make(std::uint64_t seed, MockEndpoint::Responder responder = {}) const {
    if (!endpoint_url.empty()) {
      const char* key = std::getenv(kApiKeyEnv);
      return std::make_unique<HttpEndpoint>(endpoint_url, key ? key : "", std::chrono::seconds(timeout));
    }
    if (!mock) throw Error(ErrorCode::ConfigError, "either --endpoint-url or --mock is required");
    MockOptions o;
    o.malformed_rate = mock_malformed_rate;
    o.rate_limit_rate = mock_rate_limit_rate;
    o.transient_rate = mock_transient_rate;
    o.retry_after = std::chrono::milliseconds(1);
    o.seed = seed;
    return std::make_unique<MockEndpoint>(o, std::move(responder));
  }
};

RangePolicy range_policy_from(const std::string& s) {
  if (s == "clamp") return RangePolicy::Clamp;
  if (s == "reject") return RangePolicy::Reject;
  throw Error(ErrorCode::ConfigError, fmt::format("--range-policy must be clamp or reject, not '{}'", s));
}

// A stand-in model for `eval --mock`: a canonical four-step answer with
// uniformly drawn points, keyed on the prompt and seed.
std::string mock_model_response(const GenerateRequest& request) {
  Rng rng = make_rng(fnv1a(request.prompt, static_cast<std::uint64_t>(request.seed)), 0x6d6f);
  std::vector<Point> pts;
  for (int i = 0; i < 5; ++i) {
    const double x = uniform01(rng);
    pts.push_back({x, uniform01(rng)});
  }
  const std::array<std::string, 4> steps = {
      "The reference object is the one named in the instruction.",
      "The instruction asks for free space, so the goal's subtype is \"Placement Affordance\".",
      "The target area is the free region that satisfies the stated relation.",
      "I pick points inside that region.",
  };
  return serialize(make_document(steps, AffordanceSubtype::known(SubtypeKind::PlacementAffordance), pts));
}

// ---- synth -----------------------------------------------------------------------

struct SynthCommand {
  std::uint64_t seed = 0;
  std::string out = "bench";
  std::size_t n = 100;
  std::string holdout = "between";
  long n_holdout = -1;
  int width = 128;
  int height = 96;
  int points = 10;
  std::string config;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "JSON file whose keys are this command's flag names");
    app->add_option("--seed", seed, "Master seed")->capture_default_str();
    app->add_option("--out", out, "Output directory")->capture_default_str();
    app->add_option("--n", n, "Scenes in the main split")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--holdout", holdout, "Comma-separated relations kept out of the main split (empty for none)")
        ->capture_default_str();
    app->add_option("--n-holdout", n_holdout, "Scenes in the holdout split (-1: 30% of --n)")->capture_default_str();
    app->add_option("--width", width, "Image width in pixels")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--height", height, "Image height in pixels")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--points", points, "Ground-truth points per scene")->check(CLI::PositiveNumber)->capture_default_str();
  }

  int run() const {
    SceneConfig sc;
    sc.width = width;
    sc.height = height;
    sc.points_per_record = points;
    std::set<Relation> held;
    for (const auto& name : cli::split_list(holdout)) held.insert(relation_from_string(name));
    sc.holdout_relations = held;
    sc.validate();
    log_event("info", "synth.start", {{"n", n}, {"seed", seed}, {"out", out}});
    const Benchmark b = build_benchmark(n, held, seed, sc, n_holdout);
    write_split(b.main, out, "main");
    if (!b.holdout.empty()) write_split(b.holdout, out, "holdout");
    log_event("info", "synth.done",
              {{"main", b.main.size()},
               {"holdout", b.holdout.size()},
               {"main_mean_area_fraction", compute_metadata(b.main).mean_area_fraction}});
    return 0;
  }
};

// ---- build -----------------------------------------------------------------------

struct BuildCommand {
  std::uint64_t seed = 0;
  std::string out = "dataset";
  std::string manifest;
  std::size_t concurrency = 4;
  double ratio = 0.5;
  std::size_t size = 0;
  int max_retries = 3;
  bool attach_image = false;
  std::string range_policy = "clamp";
  std::string config;
  EndpointOptions endpoint;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "JSON file whose keys are this command's flag names");
    app->add_option("--seed", seed, "Master seed")->capture_default_str();
    app->add_option("--out", out, "Output directory")->capture_default_str();
    app->add_option("--manifest", manifest, "Scene manifest (.jsonl)")->required();
    app->add_option("--concurrency", concurrency, "Maximum requests in flight")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--ratio", ratio, "Reasoning share of the mixed training file")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    app->add_option("--size", size, "Records in the mixed file (0: largest possible)")->capture_default_str();
    app->add_option("--max-retries", max_retries, "Re-samples after a rejected rationale")->capture_default_str();
    app->add_flag("--attach-image", attach_image, "Send the scene image with each request");
    app->add_option("--range-policy", range_policy, "Out-of-range coordinates: clamp or reject")->capture_default_str();
    endpoint.add_to(app, kDefaultGenerationModel);
  }

  int run() const {
    auto ep = endpoint.make(seed);
    PipelineConfig pc;
    pc.model = endpoint.model;
    pc.temperature = endpoint.temperature;
    pc.concurrency = concurrency;
    pc.max_retries = max_retries;
    pc.transport = endpoint.retry();
    pc.seed = seed;
    pc.range_policy = range_policy_from(range_policy);
    pc.attach_image = attach_image;
    pc.image_root = directory_of(manifest);

    ensure_directory(out);
    log_event("info", "build.start", {{"manifest", manifest}, {"concurrency", concurrency}, {"model", pc.model}});
    ManifestReader reader(manifest);
    std::vector<TrainingRecord> standard, reasoning;
    std::vector<RejectEntry> rejects;
    RecordSource source = [&]() -> std::optional<SceneRecord> {
      auto rec = reader.next();
      if (rec) standard.push_back(make_standard_record(*rec));
      return rec;
    };
    std::ofstream reasoning_out(path_in(out, "reasoning.jsonl"), std::ios::binary);
    if (!reasoning_out) throw Error(ErrorCode::IoError, "cannot write " + path_in(out, "reasoning.jsonl"));
    const PipelineStats st =
        generate_rationales(source, *ep, pc, [&](std::size_t, const TrainingRecord* rec, const RejectEntry* rej) {
          if (rec) {
            reasoning_out << to_json(*rec).dump() << '\n';
            reasoning.push_back(*rec);
          }
          if (rej) rejects.push_back(*rej);
        });
    reasoning_out.close();
    write_training_file(standard, path_in(out, "standard.jsonl"));
    write_reject_log(rejects, path_in(out, "rejects.jsonl"));

    json summary = {{"requested", st.requested},
                    {"succeeded", st.succeeded},
                    {"rejected_schema", st.rejected_schema},
                    {"rejected_points", st.rejected_points},
                    {"retried", st.retried}};
    if (ratio > 0.0 && ratio < 1.0 && !reasoning.empty() && !standard.empty()) {
      const MixResult mix =
          mix_datasets(reasoning, standard, ratio, size ? std::optional<std::size_t>(size) : std::nullopt, seed);
      write_training_file(mix.records, path_in(out, "train.jsonl"));
      summary["mixed"] = {{"ratio", ratio}, {"reasoning", mix.n_reasoning}, {"standard", mix.n_standard}};
    }
    write_text_file(path_in(out, "stats.json"), summary.dump(2) + "\n");
    json fields = summary;
    fields["elapsed_seconds"] = st.elapsed_seconds;
    fields["max_in_flight"] = st.max_in_flight;
    log_event("info", "build.done", fields);
    return 0;
  }
};

// ---- eval ------------------------------------------------------------------------

struct EvalCommand {
  std::uint64_t seed = 0;
  std::string out = "eval";
  std::string manifest;
  std::string benchmark;
  std::string predictor = "endpoint";
  int runs = 3;
  std::size_t concurrency = 4;
  bool cache_only = false;
  std::string cache;
  std::string range_policy = "clamp";
  std::string config;
  EndpointOptions endpoint;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "JSON file whose keys are this command's flag names");
    app->add_option("--seed", seed, "Master seed; each run sends its own derived seeds")->capture_default_str();
    app->add_option("--out", out, "Output directory (report.json, per_image.csv, responses.jsonl)")
        ->capture_default_str();
    app->add_option("--manifest", manifest, "Benchmark manifest (.jsonl)")->required();
    app->add_option("--benchmark", benchmark, "Benchmark name in the report (default: manifest file stem)");
    app->add_option("--predictor", predictor, "endpoint, oracle or uniform")
        ->check(CLI::IsMember({"endpoint", "oracle", "uniform"}))
        ->capture_default_str();
    app->add_option("--runs", runs, "Evaluation runs")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--concurrency", concurrency, "Maximum requests in flight")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_flag("--cache-only", cache_only, "Score cached responses only; fail on any missing entry");
    app->add_option("--cache", cache, "Response cache (default: <out>/responses.jsonl)");
    app->add_option("--range-policy", range_policy, "Out-of-range coordinates: clamp or reject")->capture_default_str();
    endpoint.add_to(app, "model");
  }

  int run() const {
    const std::vector<SceneRecord> records = read_manifest(manifest);
    EvalConfig ec;
    ec.benchmark = benchmark.empty() ? fs::path(manifest).stem().string() : benchmark;
    ec.model = predictor == "endpoint" ? endpoint.model : predictor;
    ec.runs = runs;
    ec.seed = seed;
    ec.concurrency = concurrency;
    ec.range_policy = range_policy_from(range_policy);
    ec.cache_only = cache_only;

    const std::string cache_path = cache.empty() ? path_in(out, "responses.jsonl") : cache;
    ResponseCache responses = ResponseCache::load(cache_path, ec.range_policy);
    std::unique_ptr<Endpoint> ep;
    std::unique_ptr<Predictor> pred;
    if (!cache_only) {
      if (predictor == "oracle") {
        pred = std::make_unique<OraclePredictor>();
      } else if (predictor == "uniform") {
        pred = std::make_unique<UniformPredictor>();
      } else {
        ep = endpoint.make(seed, mock_model_response);
        pred = std::make_unique<EndpointPredictor>(*ep, endpoint.model, endpoint.temperature, endpoint.retry());
      }
    }
    log_event("info", "eval.start",
              {{"benchmark", ec.benchmark}, {"model", ec.model}, {"records", records.size()}, {"runs", runs},
               {"cached", responses.size()}});
    const BenchmarkResult result = run_eval(records, pred.get(), ec, &responses);
    write_result(result, out);
    if (!cache_only) responses.save(cache_path);
    log_event("info", "eval.done",
              {{"accuracy", format_accuracy(result.report.mean, result.report.spread)},
               {"endpoint_failures", result.failures.endpoint},
               {"unparsed", result.failures.unparsed}});
    return 0;
  }
};

// ---- stats -----------------------------------------------------------------------

struct StatsCommand {
  std::uint64_t seed = 0;
  std::string out = "stats";
  std::string input;
  std::string compare;
  std::string dispersion = "se";
  std::string config;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "JSON file whose keys are this command's flag names");
    app->add_option("--seed", seed, "Unused; accepted for a uniform interface")->capture_default_str();
    app->add_option("--out", out, "Output directory")->capture_default_str();
    app->add_option("--input", input, "JSON with \"tests\" and/or \"ablation\" entries");
    app->add_option("--compare", compare, "Comma-separated eval output directories to tabulate");
    app->add_option("--dispersion", dispersion, "Reading of summary +/- values: se or sd")
        ->check(CLI::IsMember({"se", "sd"}))
        ->capture_default_str();
  }

  int run() const {
    if (input.empty() && compare.empty()) throw Error(ErrorCode::ConfigError, "stats needs --input or --compare");
    ensure_directory(out);
    json report = json::object();
    if (!input.empty()) {
      json in;
      try {
        in = json::parse(read_text_file(input));
      } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, fmt::format("{}: {}", input, e.what()));
      }
      if (in.contains("tests")) report["tests"] = run_tests(in.at("tests"));
      if (in.contains("ablation")) report["ablation"] = run_ablation(in.at("ablation"));
    }
    if (!compare.empty()) {
      std::vector<BenchmarkResult> results;
      for (const auto& dir : cli::split_list(compare)) results.push_back(read_result(dir));
      const ComparisonTable table = compare_models(results);
      write_text_file(path_in(out, "comparison.txt"), table.to_text());
      write_text_file(path_in(out, "comparison.csv"), table.to_csv());
      json rows = json::array();
      for (const auto& r : table.rows) rows.push_back({{"model", r.model}, {"cell", r.cell}});
      report["comparison"] = {{"benchmark", table.benchmark}, {"rows", rows}};
    }
    write_text_file(path_in(out, "stats.json"), report.dump(2) + "\n");
    log_event("info", "stats.done", {{"out", out}});
    return 0;
  }

  json run_tests(const json& tests) const {
    const auto kind = dispersion == "sd" ? stats::Dispersion::StandardDeviation : stats::Dispersion::StandardError;
    std::string csv = "name,variant,t,df,p,degenerate_variance\n";
    json out_tests = json::array();
    try {
      for (const auto& t : tests) {
        const std::string name = t.at("name").get<std::string>();
        const auto sample = [&](const json& s) {
          return stats::SummarySample{s.at("mean").get<double>(), s.at("dispersion").get<double>(),
                                      s.at("n").get<int>(), kind};
        };
        const stats::SummarySample a = sample(t.at("a")), b = sample(t.at("b"));
        const stats::TestResult primary = stats::t_test(a, b, stats::TestVariant::WelchFromSummary);
        json variants = json::object();
        for (const auto& v : stats::t_test_all_variants(a.mean, a.dispersion, a.n, b.mean, b.dispersion, b.n)) {
          variants[v.label] = {{"t", v.result.t}, {"df", v.result.df}, {"p", v.result.p}};
          csv += fmt::format("{},{},{:.6f},{:.6f},{:.6g},{}\n", name, v.label, v.result.t, v.result.df, v.result.p,
                             v.result.degenerate_variance ? 1 : 0);
        }
        out_tests.push_back({{"name", name},
                             {"dispersion", dispersion},
                             {"welch", {{"t", primary.t}, {"df", primary.df}, {"p", primary.p}}},
                             {"significant_at_0.05", primary.p < 0.05},
                             {"variants", variants}});
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, fmt::format("{}: tests: {}", input, e.what()));
    }
    write_text_file(path_in(out, "tests.csv"), csv);
    return out_tests;
  }

  json run_ablation(const json& ablation) const {
    std::vector<stats::AblationSeries> series;
    try {
      for (const auto& s : ablation) {
        stats::AblationSeries as;
        as.benchmark = s.at("benchmark").get<std::string>();
        for (const auto& p : s.at("points")) as.points.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
        series.push_back(std::move(as));
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, fmt::format("{}: ablation: {}", input, e.what()));
    }
    const auto rows = stats::ablation_report(series);
    write_text_file(path_in(out, "ablation.csv"), stats::ablation_csv(rows));
    write_text_file(path_in(out, "trend_band.csv"), stats::trend_band_csv(rows));
    write_png(render_trend_plot(series, rows), path_in(out, "trend.png"));
    json out_rows = json::array();
    for (const auto& r : rows) out_rows.push_back(row_json(r));
    return out_rows;
  }

  static json row_json(const stats::AblationRow& r) {
    const auto [lo, hi] = r.trend.slope_interval();
    return {{"benchmark", r.benchmark},
            {"baseline", r.baseline},
            {"final", r.final},
            {"absolute_gain", r.absolute_gain},
            {"relative_gain_pct", r.relative_gain_pct},
            {"slope", r.trend.slope},
            {"intercept", r.trend.intercept},
            {"r2", r.trend.r2},
            {"slope_ci", r.trend.band_defined ? json{lo, hi} : json(nullptr)},
            {"positive_slope", r.positive_slope}};
  }
};

// ---- viz -------------------------------------------------------------------------

struct VizCommand {
  std::uint64_t seed = 0;
  std::string out = "viz";
  std::string dump;
  std::string response;
  std::string image;
  std::string reduce = "mean";
  double alpha = 0.45;
  std::string config;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "JSON file whose keys are this command's flag names");
    app->add_option("--seed", seed, "Unused; accepted for a uniform interface")->capture_default_str();
    app->add_option("--out", out, "Output directory")->capture_default_str();
    app->add_option("--dump", dump, "Attention dump file")->required();
    app->add_option("--response", response, "Generated text the dump's token offsets refer to")->required();
    app->add_option("--image", image, "Input image (default: the dump's image_ref)");
    app->add_option("--reduce", reduce, "Per-step token reduction: mean or max")
        ->check(CLI::IsMember({"mean", "max"}))
        ->capture_default_str();
    app->add_option("--alpha", alpha, "Heatmap opacity")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  }

  int run() const {
    const AttentionDump d = read_dump(dump);
    const CoRDocument doc = parse_document(read_text_file(response));
    std::string image_path = image;
    if (image_path.empty()) {
      if (d.image_ref.empty()) throw Error(ErrorCode::ConfigError, "--image is required when the dump has no image_ref");
      image_path = (fs::path(dump).parent_path() / d.image_ref).string();
    }
    const Image img = read_png(image_path);
    const StepSegmentation seg = segment_tokens(d, doc);
    OverlayOptions opts;
    opts.alpha = alpha;
    const StepReduce mode = reduce == "max" ? StepReduce::Max : StepReduce::Mean;

    ensure_directory(out);
    json steps = json::array();
    for (StepKind kind : kStepOrder) {
      const auto& tokens = seg.step_tokens[static_cast<std::size_t>(kind)];
      json entry = {{"step", step_ordinal(kind)}, {"label", step_label(kind)}, {"tokens", tokens.size()}};
      if (tokens.empty()) {
        entry["empty"] = true;
        log_event("warn", "viz.empty_step", {{"step", step_ordinal(kind)}});
      } else {
        const StepHeatmap hm = aggregate_step(d, kind, tokens, mode);
        const std::string name = fmt::format("step{}.png", step_ordinal(kind));
        write_overlay(img, hm, doc.points, path_in(out, name), opts);
        entry["file"] = name;
        entry["all_zero"] = hm.all_zero;
      }
      steps.push_back(entry);
    }
    write_text_file(path_in(out, "viz.json"), json{{"steps", steps}, {"points", doc.points.size()}}.dump(2) + "\n");
    log_event("info", "viz.done", {{"out", out}});
    return 0;
  }
};

// ---- ablate ----------------------------------------------------------------------

struct AblateCommand {
  std::uint64_t seed = 0;
  std::string out = "ablate";
  std::string manifest;
  std::string eval_manifest;
  std::string fractions = "0,0.25,0.5,0.75,1";
  std::size_t concurrency = 4;
  int runs = 3;
  double sim_base = 0.2;
  double sim_gain = 0.5;
  std::string config;
  EndpointOptions endpoint;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "JSON file whose keys are this command's flag names");
    app->add_option("--seed", seed, "Master seed")->capture_default_str();
    app->add_option("--out", out, "Output directory")->capture_default_str();
    app->add_option("--manifest", manifest, "Training scene manifest (.jsonl)")->required();
    app->add_option("--eval-manifest", eval_manifest, "Benchmark manifest (default: --manifest)");
    app->add_option("--fractions", fractions, "Comma-separated reasoning fractions, ascending, including 0")
        ->capture_default_str();
    app->add_option("--concurrency", concurrency, "Maximum requests in flight")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--runs", runs, "Evaluation runs per fraction")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--sim-base", sim_base, "Simulated model: echo probability with no reasoning data")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    app->add_option("--sim-gain", sim_gain, "Simulated model: extra echo probability with all reasoning data")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    endpoint.add_to(app, kDefaultGenerationModel);
  }

  int run() const {
    const std::vector<double> fr = cli::parse_number_list(fractions);
    const std::vector<SceneRecord> train = read_manifest(manifest);
    const std::vector<SceneRecord> bench = eval_manifest.empty() ? train : read_manifest(eval_manifest);

    auto ep = endpoint.make(seed);
    PipelineConfig pc;
    pc.model = endpoint.model;
    pc.temperature = endpoint.temperature;
    pc.concurrency = concurrency;
    pc.transport = endpoint.retry();
    pc.seed = seed;
    pc.image_root = directory_of(manifest);
    log_event("info", "ablate.generate", {{"records", train.size()}});
    const PipelineResult generated = generate_rationales(train, *ep, pc);
    const std::vector<TrainingRecord> standard = make_standard_records(train);
    const auto subsets = ablation_subsets(generated.records, standard, fr, seed);

    ensure_directory(out);
    stats::AblationSeries series;
    series.benchmark = eval_manifest.empty() ? fs::path(manifest).stem().string() : fs::path(eval_manifest).stem().string();
    json rows = json::array();
    for (const auto& subset : subsets) {
      const std::string tag = fmt::format("f{:.3f}", subset.fraction);
      write_training_file(subset.records, path_in(out, "subsets/train_" + tag + ".jsonl"));
      // Training is out of reach here; the simulated model's quality grows
      // linearly with the share of reasoning records it was given.
      const double realized = generated.records.empty()
                                  ? 0.0
                                  : static_cast<double>(subset.n_reasoning) /
                                        static_cast<double>(generated.records.size());
      MixturePredictor model(std::min(1.0, sim_base + sim_gain * realized));
      EvalConfig ec;
      ec.benchmark = series.benchmark;
      ec.model = "simulated_" + tag;
      ec.runs = runs;
      ec.seed = seed;
      ec.concurrency = concurrency;
      const BenchmarkResult result = run_eval(bench, &model, ec);
      write_result(result, path_in(out, "eval/" + tag));
      series.points.emplace_back(subset.fraction, result.report.mean * 100.0);
      rows.push_back({{"fraction", subset.fraction},
                      {"n_reasoning", subset.n_reasoning},
                      {"n_records", subset.records.size()},
                      {"accuracy", result.report.mean * 100.0},
                      {"spread", result.report.spread * 100.0},
                      {"formatted", format_accuracy(result.report.mean, result.report.spread)}});
    }
    const auto report_rows = stats::ablation_report({series});
    write_text_file(path_in(out, "ablation.csv"), stats::ablation_csv(report_rows));
    write_text_file(path_in(out, "trend_band.csv"), stats::trend_band_csv(report_rows));
    write_png(render_trend_plot({series}, report_rows), path_in(out, "trend.png"));
    const json report = {{"benchmark", series.benchmark},
                         {"generation",
                          {{"requested", generated.stats.requested},
                           {"succeeded", generated.stats.succeeded},
                           {"rejected_schema", generated.stats.rejected_schema},
                           {"rejected_points", generated.stats.rejected_points}}},
                         {"rows", rows},
                         {"trend", StatsCommand::row_json(report_rows.front())}};
    write_text_file(path_in(out, "report.json"), report.dump(2) + "\n");
    log_event("info", "ablate.done",
              {{"fractions", fr.size()}, {"slope", report_rows.front().trend.slope},
               {"positive_slope", report_rows.front().positive_slope}});
    return 0;
  }
};

// ---- mock-serve ------------------------------------------------------------------

struct MockServeCommand {
  std::uint64_t seed = 0;
  std::string host = "127.0.0.1";
  int port = 8080;
  double malformed_rate = 0.0;
  double rate_limit_rate = 0.0;
  std::string config;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "JSON file whose keys are this command's flag names");
    app->add_option("--seed", seed, "Seed for fault injection")->capture_default_str();
    app->add_option("--host", host, "Bind address")->capture_default_str();
    app->add_option("--port", port, "Port")->check(CLI::Range(1, 65535))->capture_default_str();
    app->add_option("--mock-malformed-rate", malformed_rate, "Fraction of truncated answers")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    app->add_option("--mock-rate-limit-rate", rate_limit_rate, "Fraction of calls answered with 429")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
  }

  int run() const {
    MockOptions o;
    o.malformed_rate = malformed_rate;
    o.rate_limit_rate = rate_limit_rate;
    o.retry_after = std::chrono::milliseconds(200);
    o.seed = seed;
    MockEndpoint ep(o);
    MockServer server(ep);
    log_event("info", "mock_serve.listen", {{"host", host}, {"port", port}});
    if (!server.listen(host, port)) throw Error(ErrorCode::IoError, fmt::format("cannot listen on {}:{}", host, port));
    return 0;
  }
};

std::set<std::string> long_names(const CLI::App* app) {
  std::set<std::string> names;
  for (const CLI::Option* opt : app->get_options())
    for (const auto& n : opt->get_lnames()) names.insert(n);
  return names;
}

int fail(ErrorCode code, const std::string& message, int exit_code) {
  log_event("error", "failed", {{"error", {{"code", to_string(code)}, {"message", message}}}});
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial affordance dataset, evaluation and analysis toolkit", "affordkit"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  SynthCommand synth;
  BuildCommand build;
  EvalCommand eval;
  StatsCommand stats_cmd;
  VizCommand viz;
  AblateCommand ablate;
  MockServeCommand mock_serve;

  std::map<std::string, std::function<int()>> runners;
  auto add = [&](const std::string& name, const std::string& help, auto& cmd) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    cmd.add_to(sub);
    runners[name] = [&cmd] { return cmd.run(); };
    return sub;
  };
  add("synth", "Generate synthetic tabletop benchmark manifests", synth);
  add("build", "Generate reasoning rationales and write training files", build);
  add("eval", "Score a model (or cached responses) on a benchmark manifest", eval);
  add("stats", "Significance tests, ablation trends and model comparison tables", stats_cmd);
  add("viz", "Render per-step attention overlays", viz);
  add("ablate", "Nested reasoning-fraction subsets, per-fraction eval and trend fit", ablate);
  add("mock-serve", "Serve the mock endpoint over HTTP", mock_serve);

  std::vector<std::string> args(argv, argv + argc);
  std::set<std::string> names;
  for (const auto& [name, _] : runners) names.insert(name);

  try {
    const cli::PreScan scan = cli::prescan(args, names);
    if (!scan.config_path.empty() && !scan.subcommand.empty()) {
      json cfg;
      try {
        cfg = json::parse(read_text_file(scan.config_path));
      } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigError, fmt::format("{}: {}", scan.config_path, e.what()));
      }
      const auto extra = cli::config_to_args(cfg, long_names(app.get_subcommand(scan.subcommand)));
      // Config values go first so flags given on the command line win.
      args.insert(args.begin() + static_cast<std::ptrdiff_t>(scan.subcommand_index) + 1, extra.begin(), extra.end());
    }
    std::vector<std::string> rest(args.begin() + 1, args.end());
    std::reverse(rest.begin(), rest.end());
    app.parse(rest);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(ErrorCode::ConfigError, e.what(), 2);
  } catch (const Error& e) {
    return fail(e.code(), e.what(), 2);
  }

  for (const CLI::App* sub : app.get_subcommands()) {
    try {
      return runners.at(sub->get_name())();
    } catch (const Error& e) {
      return fail(e.code(), e.what(), 1);
    } catch (const std::exception& e) {
      return fail(ErrorCode::IoError, e.what(), 1);
    }
  }
  return 0;
}
