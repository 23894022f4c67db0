#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "CLI11.hpp"

namespace spoof::cli {

/// Bad flags, bad config values, or inconsistent settings (exit code 2).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigEntry {
  std::string key;
  std::string value;
};

/// Flat `key = value` lines; '#' and ';' start comments, blank lines are
/// skipped. Keys are flag names without the leading dashes.
std::vector<ConfigEntry> parse_config(std::string_view text);

/// Returns argv with the entries of every `--config FILE` inserted as
/// `--key=value` tokens directly after the subcommand name, so that flags
/// given on the command line come later and win.
std::vector<std::string> expand_config_args(const std::vector<std::string>& args);

/// `key = value` lines for every option of `command` (given or defaulted),
/// in declaration order.
std::string format_resolved(const CLI::App& command);

/// Comma-separated numbers.
std::vector<double> parse_number_list(const std::string& text, const std::string& what);
std::vector<std::size_t> parse_count_list(const std::string& text, char separator,
                                          std::size_t expected, const std::string& what);

}  // namespace spoof::cli
