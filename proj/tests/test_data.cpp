#include "oracles.hpp"
#include "support.hpp"

#include "sgm/dataset.hpp"
#include "sgm/mask.hpp"
#include "sgm/phantom.hpp"

#include "catch.hpp"

#include <fstream>

using namespace sgm;
using oracle::max_abs;

TEST_CASE("random 4x mask on 100 lines")
{
  auto const m = make_mask(100, 4, 0.08, MaskKind::Random, 3);
  CHECK(m.sampled_count() == 25);
  CHECK(center_line_count(100, 0.08) == 8);
  auto const start = center_line_start(100, 8);
  CHECK(start <= 50);
  CHECK(start + 8 > 50);
  for (int64_t i = start; i < start + 8; ++i) { CHECK(m.lines()[static_cast<size_t>(i)] == 1); }
}

TEST_CASE("acceleration 1 samples every line")
{
  for (auto kind : {MaskKind::Random, MaskKind::Equispaced}) {
    CHECK(make_mask(37, 1, 0.1, kind, 1).sampled_count() == 37);
  }
  CHECK(make_mask(32, 4, 0.08, MaskKind::Full, 0).sampled_count() == 32);
}

TEST_CASE("mask line count is round(W / R) over widths and accelerations")
{
  for (int64_t w : {32, 48, 64, 100, 128}) {
    for (int r : {2, 3, 4, 6, 8}) {
      for (auto kind : {MaskKind::Random, MaskKind::Equispaced}) {
        auto const m = make_mask(w, r, 0.08, kind, static_cast<uint64_t>(w * r));
        CHECK(std::abs(m.sampled_count() - static_cast<double>(w) / r) <= 0.5);
      }
    }
  }
}

TEST_CASE("random masks are reproducible in the seed and vary across seeds")
{
  CHECK(make_mask(64, 4, 0.08, MaskKind::Random, 9).lines() == make_mask(64, 4, 0.08, MaskKind::Random, 9).lines());
  CHECK(make_mask(64, 4, 0.08, MaskKind::Random, 9).lines() != make_mask(64, 4, 0.08, MaskKind::Random, 10).lines());
}

TEST_CASE("equispaced outer lines are evenly spread")
{
  auto const m = make_mask(64, 4, 0.0625, MaskKind::Equispaced, 0);
  CHECK(m.sampled_count() == 16);
  std::vector<int64_t> left, right;
  for (int64_t i = 0; i < 64; ++i) {
    if (m.lines()[static_cast<size_t>(i)] && (i < 30 || i >= 34)) { (i < 32 ? left : right).push_back(i); }
  }
  CHECK(std::abs(static_cast<int64_t>(left.size()) - static_cast<int64_t>(right.size())) <= 1);
}

TEST_CASE("mask argument validation")
{
  CHECK_THROWS_AS(make_mask(32, 0, 0.08, MaskKind::Random, 0), ArgumentError);
  CHECK_THROWS_AS(make_mask(32, 4, 0.0, MaskKind::Random, 0), ArgumentError);
  CHECK_THROWS_AS(make_mask(32, 16, 0.25, MaskKind::Random, 0), ArgumentError);
  CHECK_THROWS_AS(parse_mask_kind("radial"), ArgumentError);
  std::vector<uint8_t> holes(32, 0);
  CHECK_THROWS_AS(SamplingMask(holes, 4, 0.08, MaskKind::Random), ArgumentError);
}

TEST_CASE("mask tensor and grid")
{
  auto const m = make_mask(16, 2, 0.125, MaskKind::Equispaced, 0);
  auto const t = m.tensor(torch::kDouble);
  CHECK(t.sizes() == torch::IntArrayRef{16});
  CHECK(t.sum().item<double>() == 8);
  auto const g = m.grid(5);
  CHECK(g.sizes() == torch::IntArrayRef({5, 16}));
  CHECK(torch::equal(g[3], m.tensor()));
}

TEST_CASE("phantoms are deterministic, bounded and family-dependent")
{
  auto const a = PhantomSpec::for_family(PhantomFamily::A, 32, 32, 5);
  auto const x1 = make_phantom(a);
  CHECK(torch::equal(x1, make_phantom(a)));
  CHECK(x1.dtype() == torch::kComplexFloat);
  CHECK(x1.abs().max().item<double>() <= 1.0 + 1e-6);
  CHECK(x1.abs().max().item<double>() > 0.99);
  CHECK(max_abs(x1.abs() - x1.abs().clamp_min(0)) == 0);

  for (uint64_t s = 0; s < 20; ++s) {
    auto const la = sample_layout(PhantomSpec::for_family(PhantomFamily::A, 32, 32, s));
    auto const lb = sample_layout(PhantomSpec::for_family(PhantomFamily::B, 32, 32, s));
    CHECK(la.ellipses.size() >= 2);
    CHECK(la.ellipses.size() <= 5);
    CHECK(lb.ellipses.size() >= 4);
    CHECK(lb.ellipses.size() <= 8);
    for (auto const &e : la.ellipses) { CHECK(e.minor / e.major >= 0.6 - 1e-12); }
    for (auto const &e : lb.ellipses) { CHECK(e.minor / e.major <= 0.5 + 1e-12); }
  }
  CHECK_THROWS_AS(parse_family("C"), ArgumentError);
}

TEST_CASE("phantom parameter validation")
{
  auto s = PhantomSpec::for_family(PhantomFamily::A, 32, 32, 0);
  s.max_ellipses = 0;
  CHECK_THROWS_AS(make_phantom(s), ArgumentError);
  s = PhantomSpec::for_family(PhantomFamily::A, 2, 32, 0);
  CHECK_THROWS_AS(make_phantom(s), ArgumentError);
}

TEST_CASE("four coils sit at the edge midpoints")
{
  auto const c = coil_centers(4, 33, 33);
  CHECK(c[0].first == Catch::Approx(32));
  CHECK(c[0].second == Catch::Approx(16));
  CHECK(c[1].first == Catch::Approx(16));
  CHECK(c[1].second == Catch::Approx(32));
  CHECK(c[2].first == Catch::Approx(0));
  CHECK(c[3].second == Catch::Approx(0));
}

TEST_CASE("analytic coil maps are normalized and peak near their coil")
{
  auto const m = make_coil_maps(4, 32, 32).tensor();
  CHECK(max_abs(m.abs().pow(2).sum(0) - 1) < 1e-9);
  auto const mag = m.abs();
  CHECK(mag[0][16][31].item<double>() > mag[0][16][0].item<double>());
  CHECK(mag[2][16][0].item<double>() > mag[2][16][31].item<double>());
}

TEST_CASE("noise-free measurements equal the forward operator and respect the mask")
{
  auto const xg = make_phantom(PhantomSpec::for_family(PhantomFamily::A, 16, 16, 1));
  auto const maps = make_coil_maps(2, 16, 16);
  SensitivityMaps maps32(maps.tensor().to(torch::kComplexFloat));
  auto const mask = make_mask(16, 2, 0.125, MaskKind::Random, 4);
  auto const y = simulate_measurement(xg, maps32, mask, 0.0, 0);
  CHECK(torch::equal(y, forward(xg, maps32.tensor(), mask.tensor())));
  auto const noisy = simulate_measurement(xg, maps32, mask, 0.1, 3);
  CHECK(max_abs((noisy - y) * (1 - mask.tensor())) == 0);
  CHECK(max_abs(noisy - y) > 0);
  CHECK(torch::equal(noisy, simulate_measurement(xg, maps32, mask, 0.1, 3)));
}

TEST_CASE("measurement noise has the requested total standard deviation")
{
  auto const xg = torch::zeros({64, 64}, torch::kComplexDouble);
  SensitivityMaps maps(torch::ones({1, 64, 64}, torch::kComplexDouble));
  auto const mask = make_mask(64, 1, 0.1, MaskKind::Random, 0);
  auto const y = simulate_measurement(xg, maps, mask, 0.3, 11);
  auto const std_est = std::sqrt(y.abs().pow(2).mean().item<double>());
  CHECK(std::abs(std_est - 0.3) < 0.02);
}

TEST_CASE("cplx files round trip and reject size mismatches")
{
  support::TempDir dir;
  auto const t = oracle::crandn({3, 4, 5}, 1).to(torch::kComplexFloat);
  write_cplx(dir / "a.cplx", t);
  CHECK(std::filesystem::file_size(dir / "a.cplx") == 3 * 4 * 5 * 8);
  CHECK(torch::equal(read_cplx(dir / "a.cplx", {3, 4, 5}), t));
  CHECK_THROWS_AS(read_cplx(dir / "a.cplx", {3, 4, 4}), FormatError);
  CHECK_THROWS_AS(read_cplx(dir / "missing.cplx", {1}), IoError);
  try {
    read_cplx(dir / "a.cplx", {2, 2});
    FAIL("expected FormatError");
  } catch (FormatError const &e) {
    CHECK(e.path == dir / "a.cplx");
  }
}

TEST_CASE("records round trip through disk")
{
  support::TempDir dir;
  auto recs = support::records(3, 16, 2, 2, 3, true);
  recs[1].pgi.reset();
  for (auto const &r : recs) { write_record(r, dir.path()); }
  CHECK(list_records(dir.path()) == std::vector<std::string>{"r-0", "r-1", "r-2"});
  auto const back = read_split(dir.path());
  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(back[i].id == recs[i].id);
    CHECK(torch::equal(back[i].xg, recs[i].xg));
    CHECK(torch::equal(back[i].y, recs[i].y));
    CHECK(torch::equal(back[i].maps.tensor(), recs[i].maps.tensor()));
    CHECK(back[i].mask.lines() == recs[i].mask.lines());
    CHECK(back[i].mask.acceleration() == 2);
    CHECK(back[i].pgi.has_value() == recs[i].pgi.has_value());
    CHECK(back[i].generation == recs[i].generation);
  }
  CHECK(torch::equal(*back[0].pgi, *recs[0].pgi));
  CHECK(read_split(dir.path(), 2).size() == 2);
}

TEST_CASE("rewriting a record without a pgi removes the stale file")
{
  support::TempDir dir;
  auto recs = support::records(1, 16, 2, 2, 4, true);
  write_record(recs[0], dir.path());
  CHECK(std::filesystem::exists(dir / "r-0" / "pgi.cplx"));
  recs[0].pgi.reset();
  write_record(recs[0], dir.path());
  CHECK(!std::filesystem::exists(dir / "r-0" / "pgi.cplx"));
  CHECK(!read_record(dir.path(), "r-0").pgi.has_value());
}

TEST_CASE("corrupted records raise typed errors")
{
  support::TempDir dir;
  auto const recs = support::records(1, 16, 2, 2, 5);
  write_record(recs[0], dir.path());
  auto const rec = dir / "r-0";

  SECTION("truncated array")
  {
    std::filesystem::resize_file(rec / "y.cplx", 40);
    CHECK_THROWS_AS(read_record(dir.path(), "r-0"), FormatError);
  }
  SECTION("wrong format version")
  {
    std::ifstream in(rec / "meta.json");
    auto meta = nlohmann::json::parse(in);
    in.close();
    meta["format_version"] = "other/9";
    std::ofstream(rec / "meta.json") << meta.dump();
    CHECK_THROWS_AS(read_record(dir.path(), "r-0"), FormatError);
  }
  SECTION("malformed mask")
  {
    std::ofstream(rec / "mask.json") << R"({"lines": [1, 0]})";
    CHECK_THROWS_AS(read_record(dir.path(), "r-0"), FormatError);
  }
  SECTION("missing directory")
  {
    CHECK_THROWS_AS(read_record(dir.path(), "nope"), IoError);
    CHECK_THROWS_AS(list_records(dir / "nope"), IoError);
  }
}

TEST_CASE("batches stack records and zero-fill through the adjoint")
{
  auto const recs = support::records(3, 16, 2, 2, 6);
  auto const b = make_batch(recs);
  CHECK(b.size() == 3);
  CHECK(b.xg.sizes() == torch::IntArrayRef({3, 16, 16}));
  CHECK(b.maps.sizes() == torch::IntArrayRef({3, 2, 16, 16}));
  CHECK(b.mask.sizes() == torch::IntArrayRef({3, 1, 1, 16}));
  CHECK(!b.pgi.defined());
  std::vector<int64_t> const idx{2, 0};
  auto const sub = make_batch(recs, idx);
  CHECK(sub.ids == std::vector<std::string>{"r-2", "r-0"});
  auto const zf = b.zero_filled();
  CHECK(max_abs(zf[1] - adjoint(recs[1].y, recs[1].maps.tensor(), recs[1].mask.tensor())) < 1e-6);
  CHECK(b.to(torch::kDouble).y.dtype() == torch::kComplexDouble);
  CHECK_THROWS_AS(make_batch(recs, std::span<int64_t const>{}), ArgumentError);
}
