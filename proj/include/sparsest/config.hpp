#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace sparsest {

/// Values of the TOML subset used by sweep and search configs: strings,
/// integers, floats, booleans and flat arrays of those.
struct ConfigValue;
using ConfigArray = std::vector<ConfigValue>;
struct ConfigValue {
  std::variant<std::string, std::int64_t, double, bool, ConfigArray> v;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sectioned key-value document. Keys are stored as "section.key"; keys
/// before the first header have no prefix.
class ConfigDoc {
 public:
  static ConfigDoc parse(std::string_view text);
  static ConfigDoc load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;  // accepts integers
  bool get_bool(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::vector<std::int64_t> get_ints(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::string> get_strings(const std::string& key) const;

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, std::string fallback) const;

  const std::map<std::string, ConfigValue>& values() const { return values_; }

 private:
  const ConfigValue& at(const std::string& key) const;
  std::map<std::string, ConfigValue> values_;
};

}  // namespace sparsest
