#include "oracles.hpp"

#include "sgm/gic.hpp"
#include "sgm/phantom.hpp"

#include "catch.hpp"

#include <set>

using namespace sgm;
using oracle::crandn;
using oracle::max_abs;

namespace {

GICConfig small(int64_t K = 2, int64_t I = 2)
{
  auto c = GICConfig::desk();
  c.cascades = K;
  c.blocks = I;
  c.reg_widths = {4, 8};
  c.attention_hidden = 4;
  return c;
}

struct Problem
{
  torch::Tensor xg, y, maps, mask;
};

Problem problem(int64_t coils = 2, int64_t n = 2)
{
  auto const maps = make_coil_maps(coils, 8, 8).tensor().to(torch::kComplexDouble).expand({n, coils, 8, 8});
  auto const mask = make_mask(8, 2, 0.25, MaskKind::Random, 3).tensor(torch::kDouble).view({1, 1, 1, 8}).expand({n, 1, 1, 8});
  auto const xg = crandn({n, 8, 8}, 4);
  return {xg, forward(xg, maps, mask), maps, mask};
}

std::set<std::string> param_names(torch::nn::Module const &m, bool recurse = false)
{
  std::set<std::string> out;
  for (auto const &p : m.named_parameters(recurse)) { out.insert(p.key()); }
  return out;
}

} // namespace

TEST_CASE("regularizer and attention channel counts")
{
  auto c = GICConfig::desk();
  c.blocks = 3;
  CHECK(c.guidance_reg_channels(0) == 4);
  CHECK(c.guidance_reg_channels(2) == 8);
  CHECK(c.main_reg_channels(0) == 8);
  CHECK(c.main_reg_channels(2) == 16);
  CHECK(c.attention_channels() == 16);
  c.use_dense = false;
  CHECK(c.guidance_reg_channels(2) == 2);
  CHECK(c.main_reg_channels(2) == 4);
  c.use_guidance_branch = false;
  CHECK(c.main_reg_channels(1) == 2);
}

TEST_CASE("gic config validation and json round trip")
{
  auto c = GICConfig::large();
  CHECK(c.cascades == 5);
  CHECK(c.blocks == 3);
  c.share_alpha = false;
  c.hard_dc = true;
  auto const back = GICConfig::from_json(c.to_json());
  CHECK(back.cascades == 5);
  CHECK(!back.share_alpha);
  CHECK(back.hard_dc);
  CHECK(back.reg_widths == c.reg_widths);
  c.blocks = 0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = GICConfig::desk();
  c.mu_init = -1;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
}

TEST_CASE("cascade parameters by configuration")
{
  GicCascade shared(small(1, 2));
  CHECK(param_names(*shared) == std::set<std::string>{"alpha_z0", "alpha_z1", "raw_mu_z", "raw_mu_t"});
  CHECK(shared->alpha(1, 'T').is_same(shared->alpha(1, 'z')));
  CHECK(shared->mu('z').item<double>() == Catch::Approx(10.0).epsilon(1e-6));

  auto c = small(1, 2);
  c.share_alpha = false;
  GicCascade split(c);
  CHECK(param_names(*split).count("alpha_t1") == 1);

  c = small(1, 2);
  c.use_guidance_updates = false;
  GicCascade frozen(c);
  CHECK(param_names(*frozen) == std::set<std::string>{"alpha_z0", "alpha_z1", "raw_mu_z"});
  CHECK_THROWS_AS(frozen->mu('T'), ArgumentError);

  SgmNet net(small(3, 1));
  auto const names = param_names(*net, true);
  CHECK(names.count("gic0.alpha_z0") == 1);
  CHECK(names.count("gic2.attention.net.0.weight") == 1);
  CHECK(!net->cascade(0)->alpha(0, 'z').is_same(net->cascade(1)->alpha(0, 'z')));
}

TEST_CASE("untrained cascades reduce to data consistency on each branch")
{
  auto const p = problem();
  SgmNet net(small(2, 2));
  net->to(torch::kDouble);
  auto const x_t = p.xg + 0.3 * crandn({2, 8, 8}, 5);
  auto const x_z = adjoint(p.y, p.maps, p.mask);
  torch::NoGradGuard ng;
  auto const out = net->forward(x_t, x_z, p.y, p.maps, p.mask);
  REQUIRE(out.x_t.size() == 3);
  REQUIRE(out.x_z.size() == 3);
  auto const mu = net->cascade(0)->mu('z');
  CHECK(mu.item<double>() == Catch::Approx(10.0).epsilon(1e-6));
  auto const t1 = image_data_consistency(x_t, p.y, p.maps, p.mask, net->cascade(0)->mu('T'));
  auto const z1 = image_data_consistency(x_z, p.y, p.maps, p.mask, mu);
  CHECK(max_abs(out.x_t[1] - t1) < 1e-9);
  CHECK(max_abs(out.x_z[1] - z1) < 1e-9);
  CHECK(torch::equal(out.final(), out.x_z.back()));
}

TEST_CASE("hard data consistency reproduces the measurements")
{
  auto const p = problem(1, 1);
  auto c = small(1, 1);
  c.hard_dc = true;
  SgmNet net(c);
  net->to(torch::kDouble);
  torch::NoGradGuard ng;
  for (auto &prm : net->parameters()) { prm.normal_(0, 0.1); }
  auto const out = net->forward(crandn({1, 8, 8}, 6), crandn({1, 8, 8}, 7), p.y, p.maps, p.mask);
  CHECK(max_abs(forward(out.final(), p.maps, p.mask) - p.y) < 1e-9);
  CHECK(max_abs(forward(out.x_t.back(), p.maps, p.mask) - p.y) < 1e-9);
}

TEST_CASE("dense inputs grow with the block index")
{
  auto const p = problem(2, 1);
  std::vector<std::pair<char, size_t>> seen;
  GicOverrides ov;
  ov.regularizer = [&](char b, int64_t, std::vector<torch::Tensor> const &in) {
    seen.emplace_back(b, in.size());
    return torch::zeros_like(in.front());
  };
  SECTION("dense")
  {
    SgmNet net(small(1, 3));
    net->to(torch::kDouble);
    net->set_overrides(ov);
    torch::NoGradGuard ng;
    net->forward(crandn({1, 8, 8}, 1), crandn({1, 8, 8}, 2), p.y, p.maps, p.mask);
    std::vector<std::pair<char, size_t>> const expected{{'T', 2}, {'z', 4}, {'T', 3}, {'z', 6}, {'T', 4}, {'z', 8}};
    CHECK(seen == expected);
  }
  SECTION("sparse")
  {
    auto c = small(1, 3);
    c.use_dense = false;
    SgmNet net(c);
    net->to(torch::kDouble);
    net->set_overrides(ov);
    torch::NoGradGuard ng;
    net->forward(crandn({1, 8, 8}, 1), crandn({1, 8, 8}, 2), p.y, p.maps, p.mask);
    std::vector<std::pair<char, size_t>> const expected{{'T', 1}, {'z', 2}, {'T', 1}, {'z', 2}, {'T', 1}, {'z', 2}};
    CHECK(seen == expected);
  }
}

TEST_CASE("the attention map blends the two regularizer outputs")
{
  auto const p = problem(2, 1);
  auto const a = crandn({1, 8, 8}, 11), b = crandn({1, 8, 8}, 12);
  GicOverrides ov;
  ov.regularizer = [&](char branch, int64_t, std::vector<torch::Tensor> const &) { return branch == 'T' ? a : b; };
  int64_t feature_channels = 0;
  ov.attention = [&](torch::Tensor const &f) {
    feature_channels = f.size(1);
    return torch::full({f.size(0), 1, f.size(2), f.size(3)}, 0.3, f.options());
  };
  SgmNet net(small(1, 2));
  net->to(torch::kDouble);
  net->set_overrides(ov);
  auto const x_t = crandn({1, 8, 8}, 13), x_z = crandn({1, 8, 8}, 14);
  torch::NoGradGuard ng;
  auto const out = net->forward(x_t, x_z, p.y, p.maps, p.mask);
  auto const mu = net->cascade(0)->mu('z');
  CHECK(feature_channels == 12);
  CHECK(max_abs(out.x_z[1] - image_data_consistency(x_z + 0.3 * b + 0.7 * a, p.y, p.maps, p.mask, mu)) < 1e-9);
  CHECK(max_abs(out.x_t[1] - image_data_consistency(x_t + a, p.y, p.maps, p.mask, net->cascade(0)->mu('T'))) < 1e-9);
}

TEST_CASE("guidance branch without updates passes x_T through")
{
  auto const p = problem(2, 1);
  auto c = small(2, 2);
  c.use_guidance_updates = false;
  SgmNet net(c);
  net->to(torch::kDouble);
  auto const x_t = crandn({1, 8, 8}, 15);
  torch::NoGradGuard ng;
  auto const out = net->forward(x_t, crandn({1, 8, 8}, 16), p.y, p.maps, p.mask);
  CHECK(torch::equal(out.x_t[2], x_t));
}

TEST_CASE("main branch alone has no guidance intermediates")
{
  auto const p = problem(2, 1);
  auto c = small(2, 1);
  c.use_guidance_branch = false;
  SgmNet net(c);
  net->to(torch::kDouble);
  CHECK(param_names(*net, true).count("gic0.attention.net.0.weight") == 0);
  torch::NoGradGuard ng;
  auto const out = net->forward({}, crandn({1, 8, 8}, 17), p.y, p.maps, p.mask);
  CHECK(out.x_t.empty());
  CHECK(out.x_z.size() == 3);
  BranchState bad{crandn({1, 8, 8}, 1), crandn({1, 8, 8}, 2), {}, {}};
  CHECK_THROWS_AS(gic_forward(net, bad, p.y, p.maps, p.mask, 0), ArgumentError);
}

TEST_CASE("gic input validation")
{
  auto const p = problem(2, 1);
  SgmNet net(small(1, 1));
  net->to(torch::kDouble);
  BranchState s{crandn({1, 8, 8}, 1), crandn({1, 8, 8}, 2), {}, {}};
  CHECK_THROWS_AS(gic_forward(net, s, p.y, p.maps, p.mask, 1), ArgumentError);
  s.x_t = crandn({2, 8, 8}, 3);
  CHECK_THROWS_AS(gic_forward(net, s, p.y, p.maps, p.mask, 0), ShapeError);
  s.x_t = torch::zeros({1, 8, 8});
  CHECK_THROWS_AS(gic_forward(net, s, p.y, p.maps, p.mask, 0), ShapeError);
}

TEST_CASE("attention output lies in [0, 1]")
{
  Attention att(12, 4, 4);
  torch::NoGradGuard ng;
  for (auto &prm : att->parameters()) { prm.normal_(0, 1.0); }
  auto const m = att->forward(torch::randn({2, 12, 8, 8}) * 10);
  CHECK(m.sizes() == torch::IntArrayRef({2, 1, 8, 8}));
  CHECK(m.min().item<double>() >= 0);
  CHECK(m.max().item<double>() <= 1);
  CHECK_THROWS_AS(att->forward(torch::randn({1, 8, 8, 8})), ShapeError);
}
