#include "cli_config.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fmt/format.h>

#include "affordkit/error.hpp"

namespace affordkit::cli {

using nlohmann::json;

namespace {

std::string scalar_text(const std::string& key, const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number_float()) return fmt::format("{}", v.get<double>());
  throw Error(ErrorCode::ConfigError, fmt::format("key '{}' must be a string, number or boolean", key));
}

}  // namespace

std::vector<std::string> config_to_args(const json& config, const std::set<std::string>& known_flags) {
  if (!config.is_object()) throw Error(ErrorCode::ConfigError, "config file must hold a JSON object");
  std::vector<std::string> unknown;
  for (const auto& [key, value] : config.items())
    if (!known_flags.count(key) || key == "config" || key == "help") unknown.push_back(key);
  if (!unknown.empty()) {
    std::string list;
    for (const auto& k : unknown) list += (list.empty() ? "" : ", ") + k;
    throw Error(ErrorCode::ConfigError, fmt::format("unknown config key(s): {}", list));
  }

  std::vector<std::string> args;
  for (const auto& [key, value] : config.items()) {
    if (value.is_array()) {
      // lists travel as the same comma-separated text the flag takes
      std::string joined;
      for (const auto& item : value) joined += (joined.empty() ? "" : ",") + scalar_text(key, item);
      args.push_back(fmt::format("--{}={}", key, joined));
    } else {
      args.push_back(fmt::format("--{}={}", key, scalar_text(key, value)));
    }
  }
  return args;
}

PreScan prescan(const std::vector<std::string>& args, const std::set<std::string>& subcommands) {
  PreScan out;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (out.subcommand.empty() && subcommands.count(a)) {
      out.subcommand = a;
      out.subcommand_index = i;
    } else if (a == "--config" && i + 1 < args.size()) {
      out.config_path = args[i + 1];
    } else if (a.rfind("--config=", 0) == 0) {
      out.config_path = a.substr(9);
    }
  }
  return out;
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view item = text.substr(pos, end - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) out.emplace_back(item);
    pos = end + 1;
  }
  return out;
}

std::vector<double> parse_number_list(std::string_view text) {
  std::vector<double> out;
  const auto items = split_list(text);
  if (items.size() != static_cast<std::size_t>(std::count(text.begin(), text.end(), ',')) + 1)
    throw Error(ErrorCode::ConfigError, fmt::format("'{}' has an empty entry", text));
  for (const auto& item : items) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size())
      throw Error(ErrorCode::ConfigError, fmt::format("'{}' is not a number", item));
    out.push_back(v);
  }
  if (out.empty()) throw Error(ErrorCode::ConfigError, "empty number list");
  return out;
}

std::string log_line(std::string_view level, std::string_view event, const json& fields) {
  const auto now = std::chrono::system_clock::now();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
  const std::time_t secs = static_cast<std::time_t>(ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  const std::string stamp = fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}.{:03}Z", tm.tm_year + 1900, tm.tm_mon + 1,
                                        tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, ms % 1000);
  json line = {{"timestamp", stamp}, {"level", level}, {"event", event}, {"fields", fields}};
  return line.dump();
}

}  // namespace affordkit::cli
