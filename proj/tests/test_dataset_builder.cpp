#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "affordkit/dataset_builder.hpp"
#include "affordkit/error.hpp"
#include "affordkit/manifest.hpp"
#include "affordkit/metric.hpp"
#include "support/oracles.hpp"

using namespace affordkit;

namespace {

std::vector<SceneRecord> scenes(std::size_t n, std::uint64_t seed) { return generate_batch(n, seed, {}, "r"); }

PipelineConfig fast_config(std::size_t concurrency = 4) {
  PipelineConfig cfg;
  cfg.concurrency = concurrency;
  cfg.seed = 5;
  cfg.transport.initial_backoff = std::chrono::milliseconds(1);
  cfg.transport.max_backoff = std::chrono::milliseconds(2);
  return cfg;
}

std::vector<TrainingRecord> fake_records(std::size_t n, RecordKind kind, const std::string& prefix) {
  std::vector<TrainingRecord> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({prefix + std::to_string(i), "img.png", kind, {{"human", "q"}, {"gpt", "a"}}});
  return out;
}

std::set<std::string> ids(const std::vector<TrainingRecord>& records) {
  std::set<std::string> out;
  for (const auto& r : records) out.insert(r.id);
  return out;
}

}  // namespace

TEST_CASE("prompt carries the steps, the instruction and every reference label") {
  SceneConfig cfg;
  cfg.relation_weights = {{Relation::Between, 1.0}};
  const SceneRecord r = generate_scene(3, cfg);
  const std::string prompt = compose_prompt(r);
  for (const char* step : {"Identify Reference Object", "Determine Goal's Subtype", "Define Target Area",
                           "Generate Output"})
    CHECK(prompt.find(step) != std::string::npos);
  CHECK(prompt.find(r.instruction) != std::string::npos);
  REQUIRE(r.reference_ids.size() == 2);
  for (const auto& obj : r.objects)
    if (std::find(r.reference_ids.begin(), r.reference_ids.end(), obj.id) != r.reference_ids.end())
      CHECK(prompt.find(obj.label) != std::string::npos);
}

TEST_CASE("standard records answer with the point list only") {
  const SceneRecord r = generate_scene(4, {});
  const TrainingRecord t = make_standard_record(r);
  CHECK(t.kind == RecordKind::Standard);
  CHECK(t.conversations[0].value.starts_with("<image>\n"));
  CHECK(testing::same_points_3dp(parse_points(t.assistant()).points, r.gt_points.points));
  for (const auto& p : parse_points(t.assistant()).points) CHECK(contains(r.mask, p));
  CHECK(t.assistant().front() == '[');
  CHECK(training_record_from_json(to_json(t)) == t);
}

TEST_CASE("a canonical mock yields every record with no rejects") {
  const auto records = scenes(40, 1);
  MockEndpoint mock;
  const PipelineResult res = generate_rationales(records, mock, fast_config());
  CHECK(res.stats.requested == 40);
  CHECK(res.stats.succeeded == 40);
  CHECK(res.rejects.empty());
  REQUIRE(res.records.size() == 40);
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(res.records[i].id == records[i].id);
    CHECK(res.records[i].kind == RecordKind::Reasoning);
    CHECK_FALSE(validate_reasoning(res.records[i].assistant(), records[i].mask).has_value());
  }
}

TEST_CASE("malformed responses are rejected at about the injected rate") {
  const auto records = scenes(500, 2);
  MockOptions opt;
  opt.malformed_rate = 0.2;
  MockEndpoint mock(opt);
  PipelineConfig cfg = fast_config();
  cfg.max_retries = 0;
  const PipelineResult res = generate_rationales(records, mock, cfg);
  const double rate = static_cast<double>(res.stats.rejected_schema) / static_cast<double>(res.stats.requested);
  CHECK(rate == doctest::Approx(0.2).epsilon(0.25));
  CHECK(res.stats.requested == res.stats.succeeded + res.rejects.size());
  for (const auto& r : res.rejects) {
    CHECK(r.reason == "schema");
    CHECK(r.attempts == 1);
  }
}

TEST_CASE("re-sampling recovers most malformed responses") {
  const auto records = scenes(200, 2);
  MockOptions opt;
  opt.malformed_rate = 0.2;
  MockEndpoint mock(opt);
  PipelineConfig cfg = fast_config();
  cfg.max_retries = 3;
  const PipelineResult res = generate_rationales(records, mock, cfg);
  CHECK(res.stats.succeeded >= 195);
  CHECK(res.stats.retried > 0);
}

TEST_CASE("points outside the mask are rejected as point failures") {
  const auto records = scenes(10, 3);
  MockEndpoint mock({}, [](const GenerateRequest&) {
    return serialize(make_document({"a", "b", "c", "d"}, AffordanceSubtype::known(SubtypeKind::PlacementAffordance),
                                   {{0.0, 0.0}}));
  });
  PipelineConfig cfg = fast_config();
  cfg.max_retries = 1;
  const PipelineResult res = generate_rationales(records, mock, cfg);
  std::size_t outside = 0;
  for (const auto& r : records) outside += contains(r.mask, {0.0, 0.0}) ? 0 : 1;
  CHECK(res.stats.rejected_points == outside);
  for (const auto& r : res.rejects) CHECK(r.attempts == 2);
}

TEST_CASE("in-flight requests never exceed the concurrency limit") {
  const auto records = scenes(30, 4);
  for (std::size_t c : {1, 3, 6}) {
    MockOptions opt;
    opt.latency = std::chrono::milliseconds(5);
    MockEndpoint mock(opt);
    const PipelineResult res = generate_rationales(records, mock, fast_config(c));
    CHECK(mock.max_in_flight() <= c);
    CHECK(res.stats.max_in_flight <= c);
    CHECK(res.stats.succeeded == 30);
  }
}

TEST_CASE("transport faults are retried and output is identical across runs") {
  const auto records = scenes(60, 6);
  MockOptions opt;
  opt.malformed_rate = 0.1;
  opt.rate_limit_rate = 0.1;
  opt.transient_rate = 0.1;
  const auto dir = std::filesystem::temp_directory_path() / "affordkit_builder_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  std::string outputs[2];
  for (int run = 0; run < 2; ++run) {
    MockEndpoint mock(opt);
    const PipelineResult res = generate_rationales(records, mock, fast_config(run == 0 ? 2 : 5));
    CHECK(res.stats.retried > 0);
    const std::string path = (dir / ("out" + std::to_string(run) + ".jsonl")).string();
    write_training_file(res.records, path);
    outputs[run] = read_text_file(path);
    CHECK(read_training_file(path) == res.records);
  }
  CHECK(outputs[0] == outputs[1]);
  std::filesystem::remove_all(dir);
}

TEST_CASE("an unreachable endpoint aborts the build") {
  const auto records = scenes(12, 7);
  MockOptions opt;
  opt.unreachable = true;
  MockEndpoint mock(opt);
  PipelineConfig cfg = fast_config();
  cfg.transport.max_attempts = 2;
  try {
    generate_rationales(records, mock, cfg);
    FAIL("expected EndpointUnreachable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EndpointUnreachable);
  }
}

TEST_CASE("mixing honours the ratio and is seeded") {
  const auto reasoning = fake_records(100, RecordKind::Reasoning, "c");
  const auto standard = fake_records(100, RecordKind::Standard, "s");
  const MixResult half = mix_datasets(reasoning, standard, 0.5, 200, 1);
  CHECK(half.n_reasoning == 100);
  CHECK(half.n_standard == 100);
  CHECK(half.records.size() == 200);
  CHECK(ids(half.records).size() == 200);

  const MixResult quarter = mix_datasets(reasoning, standard, 0.25, 100, 1);
  CHECK(quarter.n_reasoning == 25);
  CHECK(quarter.n_standard == 75);
  CHECK(std::count_if(quarter.records.begin(), quarter.records.end(),
                      [](const TrainingRecord& r) { return r.kind == RecordKind::Reasoning; }) == 25);

  CHECK(mix_datasets(reasoning, standard, 0.5, 200, 1).records == half.records);
  CHECK_FALSE(mix_datasets(reasoning, standard, 0.5, 200, 2).records == half.records);

  const MixResult dflt = mix_datasets(reasoning, fake_records(50, RecordKind::Standard, "s"), 0.5, std::nullopt, 1);
  CHECK(dflt.records.size() == 100);

  try {
    mix_datasets(reasoning, standard, 0.5, 300, 1);
    FAIL("expected InsufficientRecords");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientRecords);
  }
}

TEST_CASE("ablation subsets are nested") {
  const auto reasoning = fake_records(40, RecordKind::Reasoning, "c");
  const auto standard = fake_records(30, RecordKind::Standard, "s");
  const auto subsets = ablation_subsets(reasoning, standard, {0.0, 0.25, 0.5, 1.0}, 9);
  REQUIRE(subsets.size() == 4);
  CHECK(subsets[0].n_reasoning == 0);
  CHECK(ids(subsets[0].records) == ids(standard));
  CHECK(subsets[1].n_reasoning == 10);
  CHECK(subsets[3].n_reasoning == 40);
  for (std::size_t i = 1; i < subsets.size(); ++i) {
    const auto small = ids(subsets[i - 1].records), big = ids(subsets[i].records);
    CHECK(std::includes(big.begin(), big.end(), small.begin(), small.end()));
    CHECK(subsets[i].records.size() == 30 + subsets[i].n_reasoning);
  }
}

TEST_CASE("pad_to_square centers content and preserves point locations") {
  Image wide(200, 100, 3, 7);
  const PaddedImage p = pad_to_square(wide);
  CHECK(p.side() == 200);
  CHECK(p.offset_y == 50);
  CHECK(p.image.at(0, 49)[0] == 128);
  CHECK(p.image.at(0, 50)[0] == 7);
  CHECK(p.image.at(199, 149)[0] == 7);
  CHECK(p.image.at(199, 150)[0] == 128);
  CHECK(p.map_point({0.5, 0.5}) == Point{0.5, 0.5});

  Image square(100, 100, 3, 9);
  const PaddedImage same = pad_to_square(square);
  CHECK(same.image == square);
  CHECK(same.map_point({0.3, 0.7}) == Point{0.3, 0.7});

  SceneConfig cfg;
  cfg.width = 96;
  cfg.height = 61;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const SceneRecord r = generate_scene(seed, cfg);
    const MaskImage padded = pad_mask_to_square(r.mask);
    CHECK(padded.width() == 96);
    CHECK(padded.inside_count() == r.mask.inside_count());
    const PaddedImage geom = pad_to_square(render_scene(r));
    const auto mapped = map_points(geom, r.gt_points.points);
    CHECK(score_image(r.mask, r.gt_points, r.id).accuracy ==
          score_image(padded, PointSet{mapped, true}, r.id).accuracy);
    CHECK(pad_mask_to_square(padded) == padded);
  }
}

TEST_CASE("length grouping is a permutation and tightens batches") {
  Rng rng = make_rng(12, 0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<LengthItem> items(100 + uniform_index(rng, 200));
    for (auto& it : items) {
      it.length = 20 + uniform_index(rng, 2000);
      it.has_image = uniform01(rng) < 0.7;
    }
    const auto batches = group_by_length(items, 16, trial);
    std::vector<std::size_t> all;
    for (const auto& b : batches) {
      CHECK(b.size() <= 16);
      all.insert(all.end(), b.begin(), b.end());
    }
    std::sort(all.begin(), all.end());
    REQUIRE(all.size() == items.size());
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);

    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_in_place(order, rng);
    std::vector<std::vector<std::size_t>> shuffled;
    for (std::size_t i = 0; i < order.size(); i += 16)
      shuffled.emplace_back(order.begin() + i, order.begin() + std::min(order.size(), i + 16));
    CHECK(mean_batch_range(items, batches) < mean_batch_range(items, shuffled));
  }
}

TEST_CASE("training file errors name the line") {
  const auto path = (std::filesystem::temp_directory_path() / "affordkit_bad_train.jsonl").string();
  write_text_file(path, to_json(make_standard_record(generate_scene(1, {}))).dump() + "\n[]\n");
  try {
    read_training_file(path);
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  std::filesystem::remove(path);
}
