#include "support.hpp"

#include "sgm/config.hpp"
#include "sgm/errors.hpp"

#include "catch.hpp"

#include <fstream>

using namespace sgm;

TEST_CASE("flat config parsing")
{
  auto const c = FlatConfig::parse(R"(
# sampler settings
steps-per-level = 5
epsilon=2e-5   # trailing comment
name =  run one
flag = yes
levels = 4, 8,16
)");
  CHECK(c.get_int("steps-per-level", 0) == 5);
  CHECK(c.get_double("epsilon", 0) == 2e-5);
  CHECK(c.get_string("name", "") == "run one");
  CHECK(c.get_bool("flag", false));
  CHECK(c.get_ints("levels", {}) == std::vector<int64_t>{4, 8, 16});
  CHECK(c.get_int("missing", 7) == 7);
  CHECK(!c.has("missing"));
  CHECK(c.values().size() == 5);
}

TEST_CASE("flat config errors name the source and key")
{
  CHECK_THROWS_AS(FlatConfig::parse("a = 1\na = 2"), ArgumentError);
  CHECK_THROWS_AS(FlatConfig::parse("just words"), ArgumentError);
  CHECK_THROWS_AS(FlatConfig::parse(" = 3"), ArgumentError);
  auto const c = FlatConfig::parse("n = 3.5\nb = maybe\nl = 1,x", "cfg.txt");
  CHECK_THROWS_AS(c.get_int("n", 0), ArgumentError);
  CHECK_THROWS_AS(c.get_bool("b", false), ArgumentError);
  CHECK_THROWS_AS(c.get_ints("l", {}), ArgumentError);
  CHECK(c.get_double("n", 0) == 3.5);
  try {
    c.require_known({"n", "b"});
    FAIL("expected ArgumentError");
  } catch (ArgumentError const &e) {
    CHECK(std::string(e.what()).find("cfg.txt") != std::string::npos);
    CHECK(std::string(e.what()).find("'l'") != std::string::npos);
  }
}

TEST_CASE("flat config files")
{
  support::TempDir dir;
  std::ofstream(dir / "run.cfg") << "seed = 42\n";
  auto const c = FlatConfig::load(dir / "run.cfg");
  CHECK(c.get_int("seed", 0) == 42);
  CHECK(c.source() == (dir / "run.cfg").string());
  CHECK_THROWS_AS(FlatConfig::load(dir / "absent.cfg"), IoError);
}
