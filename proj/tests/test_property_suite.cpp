#include "sgm/errors.hpp"
#include "sgm/operators.hpp"
#include "sgm/property_suite.hpp"

#include "catch.hpp"

#include <iostream>
#include <set>

using namespace sgm;

TEST_CASE("invariant registry")
{
  auto const names = invariant_names();
  CHECK(names.size() == 33);
  CHECK(std::set<std::string>(names.begin(), names.end()).size() == names.size());
  auto const groups = suite_groups();
  for (auto const &n : names) {
    auto const g = n.substr(0, n.find('/'));
    CHECK(std::find(groups.begin(), groups.end(), g) != groups.end());
  }
}

TEST_CASE("every invariant holds on the reference implementation")
{
  auto const rep = run_property_suite();
  std::cout << rep.to_text();
  CHECK(rep.checks.size() == 33);
  CHECK(rep.failed().empty());
  CHECK(rep.passed());
  auto const j = rep.to_json();
  CHECK(j.at("checks").size() == 33);
}

TEST_CASE("an injected FFT scaling fault is caught by name")
{
  SuiteOptions opt;
  opt.fault = "fft-scale";
  auto const rep = run_property_suite({"operators", "dc-df"}, opt);
  auto const bad = rep.failed();
  CHECK(!rep.passed());
  CHECK(std::find(bad.begin(), bad.end(), "operators/adjointness") != bad.end());
  CHECK(std::find(bad.begin(), bad.end(), "operators/unitarity") != bad.end());
  CHECK(fault::fft_scale() == 1.0);
  CHECK(rep.to_text().find("fault injected: fft-scale") != std::string::npos);
}

TEST_CASE("group selection and argument checks")
{
  auto const rep = run_property_suite({"loss"});
  for (auto const &c : rep.checks) { CHECK(c.group == "loss"); }
  CHECK(rep.checks.size() == 3);
  CHECK_THROWS_AS(run_property_suite({"nonsense"}), ArgumentError);
  SuiteOptions opt;
  opt.fault = "bit-flip";
  CHECK_THROWS_AS(run_property_suite({"loss"}, opt), ArgumentError);
}
