#include "affordkit/dataset_builder.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <filesystem>
#include <fmt/format.h>
#include <map>
#include <sstream>
#include <thread>

#include "affordkit/bounded_queue.hpp"
#include "affordkit/error.hpp"
#include "affordkit/manifest.hpp"
#include "affordkit/metric.hpp"

namespace affordkit {

using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string_view kind_name(RecordKind k) { return k == RecordKind::Reasoning ? "reasoning" : "standard"; }

RecordKind kind_from_name(std::string_view s) {
  if (s == "reasoning") return RecordKind::Reasoning;
  if (s == "standard") return RecordKind::Standard;
  throw Error(ErrorCode::ParseError, fmt::format("unknown record kind '{}'", s));
}

std::optional<std::string> image_payload(const SceneRecord& record, const PipelineConfig& config) {
  if (!config.attach_image) return std::nullopt;
  const std::filesystem::path path = std::filesystem::path(config.image_root) / record.image;
  const Image img = std::filesystem::exists(path) ? read_png(path.string()) : render_scene(record);
  const auto bytes = encode_png(img);
  return httplib::detail::base64_encode(std::string(bytes.begin(), bytes.end()));
}

struct Job {
  std::size_t index = 0;
  SceneRecord record;
};

struct Done {
  std::size_t index = 0;
  std::optional<TrainingRecord> record;
  std::optional<RejectEntry> reject;
  std::size_t retried = 0;
  std::exception_ptr error;
};

Done process(const Job& job, Endpoint& endpoint, const PipelineConfig& config, std::atomic<std::size_t>& in_flight,
             std::atomic<std::size_t>& peak) {
  Done done;
  done.index = job.index;
  GenerateRequest request;
  request.model = config.model;
  request.prompt = compose_prompt(job.record);
  request.temperature = config.temperature;
  request.image_base64 = image_payload(job.record, config);

  std::string reason;
  const int attempts = std::max(0, config.max_retries) + 1;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    request.seed = static_cast<std::int64_t>(mix_seed(config.seed, job.index * 64 + static_cast<std::size_t>(attempt)) >> 1);
    CallOutcome outcome;
    {
      const std::size_t now = ++in_flight;
      std::size_t prev = peak.load();
      while (now > prev && !peak.compare_exchange_weak(prev, now)) {
      }
      outcome = call_with_retries(endpoint, request, config.transport);
      --in_flight;
    }
    done.retried += static_cast<std::size_t>(outcome.retries);
    if (outcome.response.status != EndpointStatus::Ok)
      throw Error(ErrorCode::EndpointUnreachable,
                  fmt::format("record {}: {} after {} attempt(s)", job.record.id, outcome.response.error,
                              outcome.attempts));
    const auto failure = validate_reasoning(outcome.response.text, job.record.mask, config.range_policy);
    if (!failure) {
      TrainingRecord rec;
      rec.id = job.record.id;
      rec.image = job.record.image;
      rec.kind = RecordKind::Reasoning;
      rec.conversations = {{"human", human_turn(job.record, RecordKind::Reasoning)},
                           {"gpt", serialize(parse_document(outcome.response.text, config.range_policy))}};
      done.record = std::move(rec);
      return done;
    }
    reason = *failure;
    if (attempt + 1 < attempts) ++done.retried;
  }
  done.reject = RejectEntry{job.record.id, reason, attempts};
  return done;
}

}  // namespace

std::string compose_prompt(const SceneRecord& record) {
  std::string out;
  out += "You are annotating a robot spatial-reasoning dataset. Given the image, the instruction and the correct "
         "answer points below, write the reasoning that leads to exactly these points.\n";
  out += fmt::format("Instruction: {}\n", record.instruction);
  out += fmt::format("Reference objects: {}\n", join(record.reference_labels, "; "));
  out += fmt::format("Relation: {}\n", to_string(record.relation));
  out += fmt::format("Source: {}\n", to_string(record.source_tag));
  out += fmt::format("Ground-truth points: {}\n", format_point_list(record.gt_points.points));
  out += "\nUse these four steps, in this order, one per line:\n";
  out += fmt::format("Step 1 \xE2\x80\x94 {}: identify the reference objects in the scene.\n",
                     step_label(StepKind::IdentifyReference));
  out += fmt::format("Step 2 \xE2\x80\x94 {}: determine the goal's subtype (e.g. \"Placement Affordance\").\n",
                     step_label(StepKind::DetermineSubtype));
  out += fmt::format("Step 3 \xE2\x80\x94 {}: define the specific target area.\n", step_label(StepKind::DefineSearchSpace));
  out += fmt::format("Step 4 \xE2\x80\x94 {}: explain how the final points were generated within that area.\n",
                     step_label(StepKind::GenerateOutput));
  out += "End with the ground-truth points as a list of tuples, e.g. [(0.500, 0.500), (0.520, 0.480)].\n";
  return out;
}

std::string human_turn(const SceneRecord& record, RecordKind kind) {
  if (kind == RecordKind::Reasoning)
    return fmt::format(
        "<image>\n{} Reason step by step: identify the reference object, determine the goal's subtype, define the "
        "target area, then give the points as a list of tuples [(x1, y1), (x2, y2), ...] with coordinates between 0 "
        "and 1.",
        record.instruction);
  return fmt::format(
      "<image>\n{} Your answer should be formatted as a list of tuples, i.e. [(x1, y1), (x2, y2), ...], where each "
      "tuple contains the x and y coordinates of a point satisfying the conditions above. The coordinates should be "
      "between 0 and 1, indicating the normalized pixel locations of the points in the image.",
      record.instruction);
}

json to_json(const TrainingRecord& r) {
  json conv = json::array();
  for (const auto& t : r.conversations) conv.push_back({{"from", t.from}, {"value", t.value}});
  return {{"id", r.id}, {"image", r.image}, {"kind", kind_name(r.kind)}, {"conversations", conv}};
}

TrainingRecord training_record_from_json(const json& j) {
  TrainingRecord r;
  r.id = j.at("id").get<std::string>();
  r.image = j.value("image", std::string());
  r.kind = kind_from_name(j.at("kind").get<std::string>());
  for (const auto& t : j.at("conversations")) r.conversations.push_back({t.at("from").get<std::string>(), t.at("value").get<std::string>()});
  if (r.conversations.size() != 2) throw Error(ErrorCode::ParseError, "training record needs two turns");
  return r;
}

json to_json(const RejectEntry& r) {
  return {{"record_id", r.record_id}, {"reason", r.reason}, {"attempts", r.attempts}};
}

json to_json(const PipelineStats& s) {
  return {{"requested", s.requested},         {"succeeded", s.succeeded},
          {"rejected_schema", s.rejected_schema}, {"rejected_points", s.rejected_points},
          {"retried", s.retried},             {"elapsed_seconds", s.elapsed_seconds},
          {"max_in_flight", s.max_in_flight}};
}

TrainingRecord make_standard_record(const SceneRecord& record) {
  TrainingRecord r;
  r.id = record.id;
  r.image = record.image;
  r.kind = RecordKind::Standard;
  r.conversations = {{"human", human_turn(record, RecordKind::Standard)},
                     {"gpt", format_point_list(record.gt_points.points)}};
  return r;
}

std::vector<TrainingRecord> make_standard_records(const std::vector<SceneRecord>& records) {
  std::vector<TrainingRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(make_standard_record(r));
  return out;
}

std::optional<std::string> validate_reasoning(const std::string& assistant_text, const MaskImage& mask,
                                              RangePolicy policy) {
  const CoRDocument doc = parse_document(assistant_text, policy);
  if (!doc.complete || doc.steps.size() != 4) return std::string("schema");
  for (const auto& p : doc.points.points)
    if (!contains(mask, p)) return std::string("points");
  return std::nullopt;
}

PipelineStats generate_rationales(const RecordSource& source, Endpoint& endpoint, const PipelineConfig& config,
                                  const OutcomeSink& sink) {
  const auto started = std::chrono::steady_clock::now();
  const std::size_t workers = std::max<std::size_t>(1, config.concurrency);
  const std::size_t window = 4 * workers;

  BoundedQueue<Job> jobs(workers);
  BoundedQueue<Done> done(window + workers);
  std::atomic<bool> abort{false};
  std::atomic<std::size_t> in_flight{0}, peak{0};
  std::mutex admit_mu;
  std::condition_variable admit_cv;
  std::size_t flushed = 0;
  std::exception_ptr reader_error;
  std::size_t requested = 0;

  std::thread reader([&] {
    std::size_t index = 0;
    try {
      while (!abort) {
        {
          std::unique_lock lock(admit_mu);
          admit_cv.wait(lock, [&] { return abort || index < flushed + window; });
        }
        if (abort) break;
        auto record = source();
        if (!record) break;
        if (!jobs.push(Job{index, std::move(*record)})) break;
        ++index;
      }
    } catch (...) {
      reader_error = std::current_exception();
      abort = true;
    }
    requested = index;
    jobs.close();
  });

  std::atomic<std::size_t> live_workers{workers};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (auto job = jobs.pop()) {
        if (abort) continue;
        Done d;
        try {
          d = process(*job, endpoint, config, in_flight, peak);
        } catch (...) {
          d.index = job->index;
          d.error = std::current_exception();
        }
        done.push(std::move(d));
      }
      if (--live_workers == 0) done.close();
    });
  }

  PipelineStats stats;
  std::exception_ptr first_error;
  std::map<std::size_t, Done> pending;
  std::size_t next = 0;
  while (auto d = done.pop()) {
    if (d->error) {
      if (!first_error) first_error = d->error;
      abort = true;
      jobs.close();
      admit_cv.notify_all();
      continue;
    }
    if (abort) continue;
    pending.emplace(d->index, std::move(*d));
    for (auto it = pending.find(next); it != pending.end(); it = pending.find(next)) {
      Done& ready = it->second;
      stats.retried += ready.retried;
      if (ready.record) {
        ++stats.succeeded;
        sink(ready.index, &*ready.record, nullptr);
      } else {
        (ready.reject->reason == "points" ? stats.rejected_points : stats.rejected_schema)++;
        sink(ready.index, nullptr, &*ready.reject);
      }
      pending.erase(it);
      ++next;
      {
        std::lock_guard lock(admit_mu);
        flushed = next;
      }
      admit_cv.notify_all();
    }
  }
  abort = true;
  admit_cv.notify_all();
  reader.join();
  for (auto& t : pool) t.join();
  if (reader_error) std::rethrow_exception(reader_error);
  if (first_error) std::rethrow_exception(first_error);

  stats.requested = requested;
  stats.max_in_flight = peak.load();
  stats.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return stats;
}

PipelineResult generate_rationales(const std::vector<SceneRecord>& records, Endpoint& endpoint,
                                   const PipelineConfig& config) {
  PipelineResult result;
  std::size_t cursor = 0;
  RecordSource source = [&]() -> std::optional<SceneRecord> {
    if (cursor >= records.size()) return std::nullopt;
    return records[cursor++];
  };
  result.stats = generate_rationales(source, endpoint, config,
                                     [&](std::size_t, const TrainingRecord* rec, const RejectEntry* rej) {
                                       if (rec) result.records.push_back(*rec);
                                       if (rej) result.rejects.push_back(*rej);
                                     });
  return result;
}

MixResult mix_datasets(const std::vector<TrainingRecord>& reasoning, const std::vector<TrainingRecord>& standard,
                       double ratio, std::optional<std::size_t> size, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error(ErrorCode::InvalidArgument, "ratio must be in (0, 1)");
  if (reasoning.empty() || standard.empty())
    throw Error(ErrorCode::InvalidArgument, "both reasoning and standard records are required");

  auto split = [&](std::size_t total) {
    const auto n_r = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(total)));
    return std::make_pair(n_r, total - std::min(n_r, total));
  };
  std::size_t total;
  if (size) {
    total = *size;
  } else {
    total = static_cast<std::size_t>(std::floor(std::min(static_cast<double>(reasoning.size()) / ratio,
                                                         static_cast<double>(standard.size()) / (1.0 - ratio)) +
                                                1e-9));
    while (total > 0) {
      const auto [r, s] = split(total);
      if (r <= reasoning.size() && s <= standard.size()) break;
      --total;
    }
  }
  const auto [n_r, n_s] = split(total);
  if (n_r > reasoning.size() || n_s > standard.size())
    throw Error(ErrorCode::InsufficientRecords,
                fmt::format("need {} reasoning + {} standard, have {} + {}", n_r, n_s, reasoning.size(),
                            standard.size()));

  MixResult out;
  out.n_reasoning = n_r;
  out.n_standard = n_s;
  std::vector<std::size_t> ri(reasoning.size()), si(standard.size());
  for (std::size_t i = 0; i < ri.size(); ++i) ri[i] = i;
  for (std::size_t i = 0; i < si.size(); ++i) si[i] = i;
  Rng rng_r = make_rng(seed, 1), rng_s = make_rng(seed, 2), rng_mix = make_rng(seed, 3);
  shuffle_in_place(ri, rng_r);
  shuffle_in_place(si, rng_s);
  for (std::size_t i = 0; i < n_r; ++i) out.records.push_back(reasoning[ri[i]]);
  for (std::size_t i = 0; i < n_s; ++i) out.records.push_back(standard[si[i]]);
  shuffle_in_place(out.records, rng_mix);
  return out;
}

std::vector<AblationSubset> ablation_subsets(const std::vector<TrainingRecord>& reasoning,
                                             const std::vector<TrainingRecord>& standard,
                                             const std::vector<double>& fractions, std::uint64_t seed) {
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] >= 0.0 && fractions[i] <= 1.0))
      throw Error(ErrorCode::InvalidArgument, fmt::format("fraction {} outside [0, 1]", fractions[i]));
    if (i > 0 && fractions[i] < fractions[i - 1])
      throw Error(ErrorCode::InvalidArgument, "fractions must be sorted ascending");
  }
  std::vector<std::size_t> order(reasoning.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = make_rng(seed, 11);
  shuffle_in_place(order, rng);

  std::vector<AblationSubset> out;
  for (std::size_t f = 0; f < fractions.size(); ++f) {
    AblationSubset subset;
    subset.fraction = fractions[f];
    subset.n_reasoning = static_cast<std::size_t>(std::llround(fractions[f] * static_cast<double>(reasoning.size())));
    subset.records = standard;
    for (std::size_t i = 0; i < subset.n_reasoning; ++i) subset.records.push_back(reasoning[order[i]]);
    Rng mix = make_rng(seed, 100 + f);
    shuffle_in_place(subset.records, mix);
    out.push_back(std::move(subset));
  }
  return out;
}

Point PaddedImage::map_point(Point p) const {
  if (source_width == source_height) return p;
  const double side_d = static_cast<double>(side());
  return {(p.x * source_width + offset_x) / side_d, (p.y * source_height + offset_y) / side_d};
}

PaddedImage pad_to_square(const Image& image, Rgb pad) {
  PaddedImage out;
  out.source_width = image.width;
  out.source_height = image.height;
  const int side = std::max(image.width, image.height);
  out.offset_x = (side - image.width) / 2;
  out.offset_y = (side - image.height) / 2;
  if (image.width == image.height) {
    out.image = image;
    return out;
  }
  out.image = Image(side, side, image.channels);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      std::uint8_t* px = out.image.at(x, y);
      for (int c = 0; c < image.channels; ++c) px[c] = c < 3 ? pad[static_cast<std::size_t>(c)] : 255;
    }
  const std::size_t row_bytes = static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.channels);
  for (int y = 0; y < image.height; ++y)
    std::copy_n(image.at(0, y), row_bytes, out.image.at(out.offset_x, y + out.offset_y));
  return out;
}

MaskImage pad_mask_to_square(const MaskImage& mask) {
  const int side = std::max(mask.width(), mask.height());
  const int ox = (side - mask.width()) / 2, oy = (side - mask.height()) / 2;
  MaskImage out(side, side);
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) out.set(x + ox, y + oy, mask.at(x, y));
  return out;
}

std::vector<Point> map_points(const PaddedImage& padded, const std::vector<Point>& points) {
  std::vector<Point> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(padded.map_point(p));
  return out;
}

std::vector<std::vector<std::size_t>> group_by_length(const std::vector<LengthItem>& items, std::size_t batch_size,
                                                      std::uint64_t seed) {
  if (batch_size == 0) throw Error(ErrorCode::InvalidArgument, "batch size must be >= 1");
  Rng rng = make_rng(seed, 21);
  std::vector<std::uint64_t> tie(items.size());
  for (auto& t : tie) t = rng();

  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> leftovers;
  for (bool modality : {true, false}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < items.size(); ++i)
      if (items[i].has_image == modality) idx.push_back(i);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return items[a].length != items[b].length ? items[a].length < items[b].length : tie[a] < tie[b];
    });
    const std::size_t full = idx.size() / batch_size * batch_size;
    for (std::size_t i = 0; i < full; i += batch_size)
      batches.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(i),
                           idx.begin() + static_cast<std::ptrdiff_t>(i + batch_size));
    leftovers.insert(leftovers.end(), idx.begin() + static_cast<std::ptrdiff_t>(full), idx.end());
  }
  for (std::size_t i = 0; i < leftovers.size(); i += batch_size)
    batches.emplace_back(leftovers.begin() + static_cast<std::ptrdiff_t>(i),
                         leftovers.begin() + static_cast<std::ptrdiff_t>(std::min(i + batch_size, leftovers.size())));
  for (auto& b : batches) shuffle_in_place(b, rng);
  shuffle_in_place(batches, rng);
  return batches;
}

double mean_batch_range(const std::vector<LengthItem>& items, const std::vector<std::vector<std::size_t>>& batches) {
  if (batches.empty()) return 0.0;
  double total = 0.0;
  for (const auto& b : batches) {
    if (b.empty()) continue;
    std::size_t lo = items[b[0]].length, hi = lo;
    for (std::size_t i : b) lo = std::min(lo, items[i].length), hi = std::max(hi, items[i].length);
    total += static_cast<double>(hi - lo);
  }
  return total / static_cast<double>(batches.size());
}

void write_training_file(const std::vector<TrainingRecord>& records, const std::string& path) {
  std::string text;
  for (const auto& r : records) text += to_json(r).dump() + "\n";
  write_text_file(path, text);
}

std::vector<TrainingRecord> read_training_file(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<TrainingRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(training_record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, fmt::format("{}:{}: {}", path, line_no, e.what()));
    }
  }
  return out;
}

void write_reject_log(const std::vector<RejectEntry>& rejects, const std::string& path) {
  std::string text;
  for (const auto& r : rejects) text += to_json(r).dump() + "\n";
  write_text_file(path, text);
}

}  // namespace affordkit
