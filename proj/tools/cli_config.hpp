#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace affordkit::cli {

/// Turns a config object into "--key=value" arguments for one subcommand.
/// Keys are flag names without the leading dashes. Every unknown key is
/// collected and reported together in a single ConfigError.
std::vector<std::string> config_to_args(const nlohmann::json& config, const std::set<std::string>& known_flags);

/// Finds the subcommand and the --config value in raw argv, without parsing
/// anything else.
struct PreScan {
  std::string subcommand;
  std::size_t subcommand_index = 0;
  std::string config_path;
};
PreScan prescan(const std::vector<std::string>& args, const std::set<std::string>& subcommands);

/// "0,0.25,1" -> {0, 0.25, 1}. Throws ConfigError on an empty or bad entry.
std::vector<double> parse_number_list(std::string_view text);
std::vector<std::string> split_list(std::string_view text);

/// One structured log line: {"timestamp","level","event","fields"}.
std::string log_line(std::string_view level, std::string_view event, const nlohmann::json& fields);

}  // namespace affordkit::cli
