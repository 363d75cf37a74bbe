#include "rtr/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace rtr {

namespace {

std::string_view trim(std::string_view s)
{
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos)
    return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool valid_key(std::string_view key)
{
  return !key.empty() && std::all_of(key.begin(), key.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
  });
}

std::vector<std::string_view> split_list(std::string_view text)
{
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    parts.push_back(trim(text.substr(start, comma == std::string_view::npos ? text.npos : comma - start)));
    if (comma == std::string_view::npos)
      break;
    start = comma + 1;
  }
  return parts;
}

} // namespace

std::vector<ConfigEntry> parse_config(std::string_view text, const std::string& source)
{
  std::vector<ConfigEntry> entries;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(line_no);
    if (eq == std::string_view::npos)
      throw ConfigError(where + ": expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (!valid_key(key))
      throw ConfigError(where + ": invalid key '" + key + "'");
    for (const auto& e : entries)
      if (e.key == key)
        throw ConfigError(where + ": duplicate key '" + key + "' (first set on line " + std::to_string(e.line) + ")");
    entries.push_back({key, value, line_no});
  }
  return entries;
}

std::vector<ConfigEntry> parse_config_file(const std::string& path)
{
  std::ifstream is(path);
  if (!is)
    throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), path);
}

ResolvedConfig::ResolvedConfig(const std::vector<ConfigKey>& schema, const std::vector<ConfigEntry>& entries)
{
  for (const auto& k : schema) {
    entries_.emplace_back(k.name, k.default_value);
    explicit_.push_back(false);
  }
  for (const auto& e : entries) {
    if (!contains(e.key))
      throw ConfigError("unknown config key '" + e.key + "'");
    set(e.key, e.value);
  }
}

std::size_t ResolvedConfig::index_of(const std::string& key) const
{
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].first == key)
      return i;
  throw ConfigError("unknown config key '" + key + "'");
}

void ResolvedConfig::set(const std::string& key, const std::string& value)
{
  const std::size_t i = index_of(key);
  entries_[i].second = value;
  explicit_[i] = true;
}

bool ResolvedConfig::contains(const std::string& key) const
{
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == key; });
}

bool ResolvedConfig::is_explicit(const std::string& key) const { return explicit_[index_of(key)]; }

const std::string& ResolvedConfig::get(const std::string& key) const { return entries_[index_of(key)].second; }

double parse_double(std::string_view text, const std::string& what)
{
  text = trim(text);
  double v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError(what + ": expected a number, got '" + std::string(text) + "'");
  return v;
}

std::int64_t parse_int(std::string_view text, const std::string& what)
{
  text = trim(text);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError(what + ": expected an integer, got '" + std::string(text) + "'");
  return v;
}

std::uint64_t parse_u64(std::string_view text, const std::string& what)
{
  text = trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError(what + ": expected an unsigned 64-bit integer, got '" + std::string(text) + "'");
  return v;
}

double ResolvedConfig::get_double(const std::string& key) const { return parse_double(get(key), "config key '" + key + "'"); }

std::int64_t ResolvedConfig::get_int(const std::string& key) const { return parse_int(get(key), "config key '" + key + "'"); }

std::uint64_t ResolvedConfig::get_u64(const std::string& key) const { return parse_u64(get(key), "config key '" + key + "'"); }

bool ResolvedConfig::get_bool(const std::string& key) const
{
  const std::string& v = get(key);
  if (v == "true" || v == "1")
    return true;
  if (v == "false" || v == "0")
    return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<double> ResolvedConfig::get_doubles(const std::string& key) const
{
  std::vector<double> out;
  for (auto part : split_list(get(key)))
    out.push_back(parse_double(part, "config key '" + key + "'"));
  return out;
}

std::vector<std::int64_t> ResolvedConfig::get_ints(const std::string& key) const
{
  std::vector<std::int64_t> out;
  for (auto part : split_list(get(key)))
    out.push_back(parse_int(part, "config key '" + key + "'"));
  return out;
}

std::array<Index, 3> ResolvedConfig::get_triple(const std::string& key) const
{
  const auto v = get_ints(key);
  if (v.size() != 3)
    throw ConfigError("config key '" + key + "': expected three comma-separated integers");
  std::array<Index, 3> out{};
  for (int k = 0; k < 3; ++k) {
    if (v[k] < 1)
      throw ConfigError("config key '" + key + "': entries must be positive");
    out[k] = static_cast<Index>(v[k]);
  }
  return out;
}

} // namespace rtr
