#pragma once

#include "rtr/tensor.hpp"

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rtr {

/// Raised for anything wrong with a configuration: syntax, unknown keys,
/// unparsable or out-of-range values.
class ConfigError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

struct ConfigEntry
{
  std::string key;
  std::string value;
  int line = 0;
};

/// Parses the flat config format: one `key = value` per line, `#` starts a
/// comment, blank lines are ignored, keys are [A-Za-z0-9_]+ and may appear
/// once. Values are trimmed; everything after the first `=` belongs to the value.
std::vector<ConfigEntry> parse_config(std::string_view text, const std::string& source = "config");
std::vector<ConfigEntry> parse_config_file(const std::string& path);

struct ConfigKey
{
  std::string name;
  std::string default_value;
  std::string help;
};

/// Every key of a schema with its value, in schema order.
class ResolvedConfig
{
public:
  ResolvedConfig() = default;

  /// Applies `entries` over the schema defaults; a key not in the schema is
  /// rejected with a ConfigError naming it.
  ResolvedConfig(const std::vector<ConfigKey>& schema, const std::vector<ConfigEntry>& entries);

  void set(const std::string& key, const std::string& value);
  bool contains(const std::string& key) const;
  bool is_explicit(const std::string& key) const;
  const std::string& get(const std::string& key) const;

  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::int64_t> get_ints(const std::string& key) const;
  /// Exactly three positive integers, comma separated.
  std::array<Index, 3> get_triple(const std::string& key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::vector<bool> explicit_;
  std::size_t index_of(const std::string& key) const;
};

double parse_double(std::string_view text, const std::string& what);
std::int64_t parse_int(std::string_view text, const std::string& what);
std::uint64_t parse_u64(std::string_view text, const std::string& what);

} // namespace rtr
