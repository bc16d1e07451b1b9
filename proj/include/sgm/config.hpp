#pragma once

// Flat key/value configuration files:
//
//   # comment
//   key = value
//
// Keys use the long CLI flag names without dashes (e.g. `steps-per-level = 5`).
// Blank lines and text after '#' are ignored; duplicate keys are an error.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace sgm {

class FlatConfig
{
public:
  FlatConfig() = default;
  static FlatConfig parse(std::string const &text, std::string const &source = "<string>");
  static FlatConfig load(std::filesystem::path const &file);

  bool has(std::string const &key) const { return values_.count(key) > 0; }
  std::optional<std::string> get(std::string const &key) const;
  std::string get_string(std::string const &key, std::string const &fallback) const;
  int64_t get_int(std::string const &key, int64_t fallback) const;
  double get_double(std::string const &key, double fallback) const;
  bool get_bool(std::string const &key, bool fallback) const;
  /// Comma-separated integers.
  std::vector<int64_t> get_ints(std::string const &key, std::vector<int64_t> const &fallback) const;

  void set(std::string const &key, std::string const &value) { values_[key] = value; }
  /// ArgumentError naming the first key not in `known`.
  void require_known(std::set<std::string> const &known) const;
  std::map<std::string, std::string> const &values() const { return values_; }
  std::string const &source() const { return source_; }

private:
  std::string source_;
  std::map<std::string, std::string> values_;
};

} // namespace sgm
