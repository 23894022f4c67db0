#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace spoof::cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.push_back(trim(text.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string read_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read config file '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

std::vector<ConfigEntry> parse_config(std::string_view text) {
  std::vector<ConfigEntry> out;
  std::size_t line_no = 0;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
    ConfigEntry e{std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1)))};
    if (e.key.empty())
      throw UsageError("config line " + std::to_string(line_no) + ": empty key");
    if (e.key == "config")
      throw UsageError("config line " + std::to_string(line_no) + ": nested config files are not supported");
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<std::string> expand_config_args(const std::vector<std::string>& args) {
  if (args.size() < 2 || args[1].starts_with('-')) return args;
  std::vector<std::string> inserted;
  for (std::size_t i = 2; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
    } else if (args[i].starts_with("--config=")) {
      path = args[i].substr(9);
    } else {
      continue;
    }
    for (const auto& e : parse_config(read_config_file(path)))
      inserted.push_back("--" + e.key + "=" + e.value);
  }
  std::vector<std::string> out(args.begin(), args.begin() + 2);
  out.insert(out.end(), inserted.begin(), inserted.end());
  out.insert(out.end(), args.begin() + 2, args.end());
  return out;
}

std::string format_resolved(const CLI::App& command) {
  std::string out = "# " + command.get_name() + "\n";
  for (const CLI::Option* opt : command.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config" || name.empty()) continue;
    std::string value;
    if (opt->count() > 0) {
      const auto results = opt->results();
      value = results.back();
    } else {
      value = opt->get_default_str();
      if (value.empty() && opt->get_type_size() == 0) value = "false";
    }
    out += name + " = " + value + "\n";
  }
  return out;
}

std::vector<double> parse_number_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (auto part : split(text, ',')) {
    double v = 0;
    const auto [end, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || ec != std::errc{} || end != part.data() + part.size())
      throw UsageError(what + ": '" + std::string(part) + "' is not a number");
    out.push_back(v);
  }
  return out;
}

std::vector<std::size_t> parse_count_list(const std::string& text, char separator,
                                          std::size_t expected, const std::string& what) {
  std::vector<std::size_t> out;
  for (auto part : split(text, separator)) {
    std::size_t v = 0;
    const auto [end, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || ec != std::errc{} || end != part.data() + part.size())
      throw UsageError(what + ": '" + std::string(part) + "' is not a non-negative integer");
    out.push_back(v);
  }
  if (out.size() != expected)
    throw UsageError(what + ": expected " + std::to_string(expected) + " values separated by '" +
                     std::string(1, separator) + "'");
  return out;
}

}  // namespace spoof::cli
