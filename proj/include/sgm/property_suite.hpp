#pragma once

// Runnable invariant checks grouped by module. Every check reports the measured value
// next to the tolerance it was held to; a check passes when measured <= tolerance.

#include "json.hpp"

#include <string>
#include <vector>

namespace sgm {

struct CheckResult
{
  std::string group, name;
  bool passed = false;
  double measured = 0, tolerance = 0;
  std::string detail;
  double seconds = 0;
  /// "group/name"
  std::string id() const { return group + "/" + name; }
};

struct SuiteOptions
{
  uint64_t seed = 0;
  /// Mutation to inject while the checks run: "" or "fft-scale" (fft2c output scaled by 1.05).
  std::string fault;
};

struct SuiteReport
{
  std::vector<CheckResult> checks;
  uint64_t seed = 0;
  std::string fault;
  bool passed() const;
  std::vector<std::string> failed() const;
  /// Timings are omitted when `with_timings` is false so reports can be compared.
  nlohmann::json to_json(bool with_timings = true) const;
  std::string to_text() const;
};

std::vector<std::string> const &suite_groups();
/// "group/name" of every check in execution order.
std::vector<std::string> invariant_names();

/// Runs the selected groups (all when empty). Unknown group names throw ArgumentError.
SuiteReport run_property_suite(std::vector<std::string> const &groups = {}, SuiteOptions const &options = {});

} // namespace sgm
