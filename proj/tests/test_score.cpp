#include "oracles.hpp"
#include "support.hpp"

#include "sgm/score_net.hpp"
#include "sgm/score_training.hpp"
#include "sgm/trainer.hpp"

#include "catch.hpp"

using namespace sgm;
using oracle::max_abs;

namespace {

ScoreModelConfig small_config(int64_t levels)
{
  ScoreModelConfig c;
  c.widths = {4, 4, 8, 8};
  c.downsample = {false, false, true, true};
  c.noise_levels = levels;
  return c;
}

ScoreNet small_net(uint64_t seed = 1, int64_t levels = 3)
{
  torch::manual_seed(seed);
  return ScoreNet(small_config(levels), make_schedule(1.0, 0.1, levels));
}

} // namespace

TEST_CASE("geometric schedule endpoints and ratio")
{
  auto const s = make_schedule(2.0, 0.02, 5);
  CHECK(s.levels() == 5);
  CHECK(s.sigma_max() == 2.0);
  CHECK(s.sigma_min() == 0.02);
  for (int64_t j = 1; j < 5; ++j) { CHECK(s.sigma(j) / s.sigma(j - 1) == Catch::Approx(std::pow(0.01, 0.25))); }
  CHECK(s.tensor(torch::kDouble).sizes() == torch::IntArrayRef{5});
}

TEST_CASE("schedule validation")
{
  CHECK_THROWS_AS(make_schedule(1.0, 2.0, 4), ArgumentError);
  CHECK_THROWS_AS(make_schedule(1.0, 0.1, 1), ArgumentError);
  CHECK_THROWS_AS(make_schedule(1.0, 0.0, 4), ArgumentError);
  CHECK_THROWS_AS(NoiseSchedule({1.0, 0.5, 0.3}), ArgumentError);
  CHECK_THROWS_AS(NoiseSchedule({1.0, 1.0}), ArgumentError);
  CHECK_NOTHROW(NoiseSchedule({4.0, 2.0, 1.0}));
}

TEST_CASE("max pairwise distance of a hand-picked set")
{
  using C = c10::complex<double>;
  auto const imgs = torch::tensor({C(0, 0), C(3, 4), C(1, 0)}, torch::kComplexDouble).view({3, 1, 1});
  CHECK(max_pairwise_distance(imgs) == Catch::Approx(5.0));
  CHECK_THROWS_AS(max_pairwise_distance(imgs.slice(0, 0, 1)), ArgumentError);
}

TEST_CASE("score network shapes, taps and level checks")
{
  torch::manual_seed(0);
  ScoreNet net(ScoreModelConfig::desk(), make_schedule(1.0, 0.01, 10));
  auto const x = oracle::crandn({2, 32, 32}, 1).to(torch::kComplexFloat);
  torch::NoGradGuard ng;
  auto const t = taps(net, x, 3);
  REQUIRE(t.blocks.size() == 6);
  std::vector<int64_t> const sizes{4, 8, 16, 32, 32, 32};
  for (size_t i = 0; i < 6; ++i) { CHECK(t.blocks[i].size(-1) == sizes[i]); }
  CHECK(t.output.sizes() == torch::IntArrayRef({2, 2, 32, 32}));
  CHECK(score(net, x, 3).sizes() == torch::IntArrayRef({2, 32, 32}));
  CHECK_THROWS_AS(score(net, x, 0), ArgumentError);
  CHECK_THROWS_AS(score(net, x, 11), ArgumentError);
  CHECK_THROWS_AS(score(net, oracle::crandn({1, 30, 30}, 2).to(torch::kComplexFloat), 1), ShapeError);
}

TEST_CASE("score model config validation and json round trip")
{
  auto c = ScoreModelConfig::desk();
  CHECK(ScoreModelConfig::from_json(c.to_json()).widths == c.widths);
  CHECK(c.stride() == 8);
  c.downsample[0] = true;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = ScoreModelConfig::desk();
  c.widths = {4, 4, 4};
  c.downsample = {false, true, true};
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  CHECK_THROWS_AS(ScoreNet(ScoreModelConfig::desk(), make_schedule(1.0, 0.1, 4)), ArgumentError);
}

TEST_CASE("zeroed output head gives a vanishing score")
{
  auto net = small_net();
  net->zero_output();
  torch::NoGradGuard ng;
  CHECK(max_abs(score(net, oracle::crandn({2, 8, 8}, 3).to(torch::kComplexFloat), 2)) == 0);
}

TEST_CASE("as_score_fn agrees with the complex wrapper")
{
  auto net = small_net();
  net->eval();
  torch::NoGradGuard ng;
  auto const x = oracle::crandn({2, 8, 8}, 4).to(torch::kComplexFloat);
  auto const fn = as_score_fn(net);
  auto const lv = torch::full({2}, 1, torch::kLong);
  CHECK(max_abs(from_channels(fn(to_channels(x), lv)) - score(net, x, 2)) < 1e-6);
}

TEST_CASE("DSM loss of the exact score for a point mass is zero")
{
  auto const schedule = make_schedule(1.0, 0.1, 4);
  auto const clean = torch::zeros({6, 2, 8, 8}, torch::kDouble);
  ScoreFn exact = [&](torch::Tensor const &x, torch::Tensor const &lv) {
    auto const s = schedule.tensor(torch::kDouble).index_select(0, lv).view({-1, 1, 1, 1});
    return -x / s.square();
  };
  CHECK(dsm_loss(exact, clean, schedule, 5).item<double>() < 1e-20);
}

TEST_CASE("DSM loss of the zero score is the mean noise energy")
{
  auto const schedule = make_schedule(1.0, 0.1, 4);
  auto const clean = oracle::crandn({5, 8, 8}, 6);
  auto const x = to_channels(clean);
  auto gen = make_generator(9);
  auto const draw = draw_dsm(x, schedule, gen);
  ScoreFn zero = [](torch::Tensor const &v, torch::Tensor const &) { return torch::zeros_like(v); };
  auto const expected = draw.noise.square().sum({1, 2, 3}).mean().item<double>();
  CHECK(dsm_loss(zero, x, draw, schedule).item<double>() == Catch::Approx(expected).epsilon(1e-12));
  CHECK(draw.levels.min().item<int64_t>() >= 0);
  CHECK(draw.levels.max().item<int64_t>() < 4);
}

TEST_CASE("score training lowers the loss and is reproducible")
{
  auto const imgs = torch::stack({support::records(1, 8, 1, 1, 1)[0].xg, support::records(1, 8, 1, 1, 2)[0].xg,
                                  support::records(1, 8, 1, 1, 3)[0].xg, support::records(1, 8, 1, 1, 4)[0].xg});
  ScoreTrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 4;
  cfg.seed = 3;
  int64_t calls = 0;
  cfg.on_epoch = [&](int64_t, double) { ++calls; };

  auto a = small_net(5);
  auto const log = train_score(a, imgs, cfg);
  CHECK(calls == 30);
  CHECK(log.epoch_loss.size() == 30);
  double const head = (log.epoch_loss[0] + log.epoch_loss[1] + log.epoch_loss[2]) / 3;
  double const tail = (log.epoch_loss[27] + log.epoch_loss[28] + log.epoch_loss[29]) / 3;
  CHECK(tail < head);

  cfg.on_epoch = {};
  auto b = small_net(5);
  auto const log_b = train_score(b, imgs, cfg);
  CHECK(log_b.step_loss == log.step_loss);
}

TEST_CASE("score training rejects bad input")
{
  auto net = small_net();
  ScoreTrainConfig cfg;
  cfg.epochs = 1;
  auto bad = oracle::crandn({2, 8, 8}, 1).to(torch::kComplexFloat);
  bad[0][0][0] = c10::complex<float>(std::nanf(""), 0);
  CHECK_THROWS_AS(train_score(net, bad, cfg), NumericalError);
  cfg.epochs = 0;
  CHECK_THROWS_AS(train_score(net, bad, cfg), ArgumentError);
}

TEST_CASE("score networks clone deeply and survive a save/load round trip")
{
  auto net = small_net(7);
  net->eval();
  auto copy = clone_score_net(net);
  {
    torch::NoGradGuard ng;
    for (auto &p : copy->parameters()) { p.add_(1.0); }
  }
  auto const x = oracle::crandn({1, 8, 8}, 8).to(torch::kComplexFloat);
  torch::NoGradGuard ng;
  auto const ref = score(net, x, 1);
  CHECK(max_abs(score(copy, x, 1) - ref) > 0);

  support::TempDir dir;
  save_score(net, dir / "score");
  auto back = load_score(dir / "score");
  back->eval();
  CHECK(torch::equal(score(back, x, 1), ref));
  CHECK(back->schedule().sigmas() == net->schedule().sigmas());
}
