// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any fails.

#include "oracles.hpp"

#include "sgm/baselines.hpp"
#include "sgm/experiments.hpp"
#include "sgm/losses.hpp"
#include "sgm/mask.hpp"
#include "sgm/metrics.hpp"
#include "sgm/operators.hpp"
#include "sgm/phantom.hpp"
#include "sgm/sampler.hpp"
#include "sgm/schedule.hpp"
#include "sgm/score_training.hpp"
#include "sgm/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>

using namespace sgm;
using oracle::crandn;
using oracle::max_abs;

namespace {

struct Result
{
  bool passed = false;
  std::string detail;
};

std::string num(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double rel(torch::Tensor const &a, torch::Tensor const &b) { return (a - b).norm().item<double>() / b.norm().item<double>(); }

c10::complex<double> cdot(torch::Tensor const &a, torch::Tensor const &b)
{
  return (a.conj() * b).sum().item<c10::complex<double>>();
}

torch::Tensor mask_lines(int64_t w, int r, uint64_t seed)
{
  return make_mask(w, r, std::max(0.08, 1.0 / static_cast<double>(w)), MaskKind::Random, seed).tensor(torch::kDouble);
}

Result operator_algebra()
{
  double dot = 0, re = 0, unit = 0;
  for (int t = 0; t < 100; ++t) {
    int64_t const C = std::array<int64_t, 3>{1, 2, 4}[t % 3];
    auto const maps = make_coil_maps(C, 16, 16).tensor().to(torch::kComplexDouble);
    auto const mask = mask_lines(16, 1 + t % 4, static_cast<uint64_t>(t));
    auto const x = crandn({16, 16}, 1000 + static_cast<uint64_t>(t));
    auto const y = crandn({C, 16, 16}, 2000 + static_cast<uint64_t>(t));
    auto const lhs = cdot(forward(x, maps, mask), y);
    auto const rhs = cdot(x, adjoint(y, maps, mask));
    dot = std::max(dot, std::abs(lhs - rhs) / std::abs(lhs));
    re = std::max(re, rel(reduce(expand(x, maps), maps), x));
    auto const z = crandn({C, 16, 16}, 3000 + static_cast<uint64_t>(t));
    unit = std::max(unit, std::abs(fft2c(z).norm().item<double>() / z.norm().item<double>() - 1.0));
    unit = std::max(unit, std::abs(ifft2c(z).norm().item<double>() / z.norm().item<double>() - 1.0));
  }
  return {dot < 1e-5 && re < 1e-6 && unit < 1e-6,
          "adjoint " + num(dot) + " (< 1e-5), reduce(expand) " + num(re) + " (< 1e-6), fft norm " + num(unit) +
            " (< 1e-6), 100 trials, 16x16, C in {1,2,4}"};
}

Result dc_block()
{
  auto const mask = mask_lines(16, 4, 5);
  auto const yc = crandn({2, 16, 16}, 11);
  auto const y = apply_mask(crandn({2, 16, 16}, 12), mask);
  bool const identity = torch::equal(data_consistency(yc, y, mask, DcWeight::of(0.0)), yc);
  auto const hard = data_consistency(yc, y, mask, DcWeight::hard());
  auto const m = mask.to(torch::kBool).expand({2, 16, 16});
  bool const replaced = torch::equal(hard.masked_select(m), y.masked_select(m)) &&
                        torch::equal(hard.masked_select(~m), yc.masked_select(~m));
  auto const one = torch::ones({1}, torch::kDouble);
  auto const hand = data_consistency(torch::full({1, 1, 1}, 2.0, torch::kComplexDouble),
                                     torch::full({1, 1, 1}, 4.0, torch::kComplexDouble), one, DcWeight::of(1.0));
  bool const three = hand.item<c10::complex<double>>() == c10::complex<double>(3.0, 0.0);
  return {identity && replaced && three, std::string("mu=0 identity ") + (identity ? "exact" : "violated") +
                                           ", mu=inf replacement " + (replaced ? "exact" : "violated") +
                                           ", (2, 4, mu=1) -> " + num(torch::real(hand).item<double>())};
}

Result df_block()
{
  auto const maps = make_coil_maps(2, 8, 8).tensor().to(torch::kComplexDouble);
  auto const mask = mask_lines(8, 2, 7);
  auto const x = crandn({8, 8}, 21);
  bool const fixed = torch::equal(data_fidelity_step(x, forward(x, maps, mask), maps, mask, 0.7), x);
  auto const y = apply_mask(crandn({2, 8, 8}, 22), mask);
  bool const zero = torch::equal(data_fidelity_step(x, y, maps, mask, 0.0), x);
  auto const A = oracle::forward_matrix(maps, mask);
  auto const expected = x.reshape({-1}) - 0.4 * A.conj().t().matmul(A.matmul(x.reshape({-1})) - y.reshape({-1}));
  auto const dense = max_abs(data_fidelity_step(x, y, maps, mask, 0.4).reshape({-1}) - expected);
  return {fixed && zero && dense < 1e-9, std::string("fixed point ") + (fixed ? "exact" : "violated") +
                                           ", alpha=0 identity " + (zero ? "exact" : "violated") +
                                           ", dense 8x8 deviation " + num(dense) + " (< 1e-9)"};
}

Result score_recovery()
{
  torch::manual_seed(41);
  auto cfg = ScoreModelConfig::desk();
  cfg.noise_levels = 4;
  ScoreNet net(cfg, make_schedule(2.0, 0.25, 4));
  auto const images = crandn({4096, 8, 8}, 42).to(torch::kComplexFloat);
  ScoreTrainConfig tc;
  tc.epochs = 12;
  tc.batch_size = 64;
  tc.learning_rate = 2e-3;
  tc.seed = 43;
  train_score(net, images, tc);
  net->eval();
  torch::NoGradGuard ng;
  std::string detail;
  bool ok = true;
  for (int64_t level : {2, 3}) {
    double const sigma = net->schedule().sigma(level - 1);
    auto const noisy = crandn({512, 8, 8}, 44) + sigma * crandn({512, 8, 8}, 45);
    auto const s = score(net, noisy.to(torch::kComplexFloat), level).to(torch::kComplexDouble);
    auto const err = rel(s, -noisy / (1 + sigma * sigma));
    ok = ok && err <= 0.15;
    detail += (detail.empty() ? "" : ", ") + ("sigma " + num(sigma) + ": " + num(err));
  }
  return {ok, "relative L2 error to -x/(1+sigma^2): " + detail + " (<= 0.15), N(0,I) 8x8"};
}

Result langevin_moments()
{
  auto const schedule = make_schedule(1.0, 0.1, 10);
  SamplerConfig cfg;
  cfg.epsilon = 0.008;
  cfg.steps_per_level = 100;
  cfg.use_consistency = false;
  cfg.seed = 51;
  ScoreFn const analytic = [&](torch::Tensor const &x, torch::Tensor const &level) {
    auto const sig = torch::tensor(schedule.sigmas(), x.options()).index_select(0, level).view({-1, 1, 1, 1});
    return -x / (1 + sig * sig);
  };
  auto const x = sample_unconditional(analytic, {1000, 1, 1}, torch::kComplexDouble, schedule, cfg);
  auto const parts = torch::view_as_real(x).reshape({1000, -1});
  auto const mean = parts.mean(0).abs().max().item<double>();
  auto const var = parts.var(0);
  auto const var_dev = (var - 1).abs().max().item<double>();
  return {mean < 0.05 && var_dev < 0.1, "1000 chains, max |mean| " + num(mean) + " (< 0.05), max |var - 1| " +
                                          num(var_dev) + " (< 0.1)"};
}

Result mask_construction()
{
  auto const m = make_mask(100, 4, 0.08, MaskKind::Random, 61);
  auto const &l = m.lines();
  int64_t const start = 50 - 4;
  bool center = true;
  for (int64_t i = start; i < start + 8; ++i) { center = center && l[static_cast<size_t>(i)] == 1; }
  auto const total = m.sampled_count();
  auto const full = make_mask(100, 1, 0.08, MaskKind::Random, 62).sampled_count();
  bool const ok = center && center_line_count(100, 0.08) == 8 && total == 25 && full == 100;
  return {ok, "W=100 R=4: center block " + std::to_string(center_line_count(100, 0.08)) + " lines at 46..53 " +
                (center ? "sampled" : "missing") + ", " + std::to_string(total) + " total; R=1: " +
                std::to_string(full) + " of 100"};
}

Result loss_weight_law()
{
  auto const w = loss_weights(5);
  double err = 0;
  for (int k = 1; k <= 5; ++k) { err = std::max(err, std::abs(w[static_cast<size_t>(k - 1)] - std::pow(10.0, -(5.0 - k) / 4.0))); }
  GicOutput out;
  for (int64_t k = 0; k <= 5; ++k) {
    out.x_z.push_back(crandn({2, 12, 12}, 70 + static_cast<uint64_t>(k)));
    out.x_t.push_back(crandn({2, 12, 12}, 80 + static_cast<uint64_t>(k)));
  }
  auto const x_g = crandn({2, 12, 12}, 90);
  auto const leaf = out.x_z.back().clone().requires_grad_(true);
  out.x_z.back() = leaf;
  total_loss(crandn({2, 12, 12}, 91), out, x_g, LossMode::Mse).backward();
  auto probe = leaf.detach().clone().requires_grad_(true);
  complex_mse(probe, x_g).backward();
  auto const factor = (leaf.grad().abs().sum() / probe.grad().abs().sum()).item<double>();
  return {err < 1e-12 && std::abs(factor - 2) < 1e-12,
          "K=5 weights max error " + num(err) + " (< 1e-12), x_z^K gradient factor " + num(factor) + " (= 2)"};
}

double fd_relative(std::function<double()> const &loss, std::vector<std::pair<torch::Tensor, int64_t>> const &entries,
                   double h)
{
  double num2 = 0, den = 0;
  for (auto const &[p, i] : entries) {
    auto const g = p.grad().reshape({-1})[i].item<double>();
    torch::NoGradGuard ng;
    auto flat = p.detach().view({-1});
    auto const orig = flat[i].item<double>();
    flat[i].fill_(orig + h);
    auto const lp = loss();
    flat[i].fill_(orig - h);
    auto const lm = loss();
    flat[i].fill_(orig);
    auto const fd = (lp - lm) / (2 * h);
    num2 += (g - fd) * (g - fd);
    den += g * g;
  }
  return den > 0 ? std::sqrt(num2 / den) : std::numeric_limits<double>::infinity();
}

Result gradient_checks()
{
  std::vector<DatasetRecord> recs;
  for (int i = 0; i < 2; ++i) {
    AcquisitionConfig acq;
    acq.coils = 2;
    acq.acceleration = 2;
    acq.center_fraction = 0.25;
    acq.seed = 100 + static_cast<uint64_t>(i);
    auto r = generate_record("g-" + std::to_string(i), PhantomSpec::for_family(PhantomFamily::A, 8, 8, 7 + i), acq);
    r.pgi = (r.xg + 0.1 * crandn({8, 8}, 110 + static_cast<uint64_t>(i))).to(torch::kComplexFloat);
    recs.push_back(std::move(r));
  }
  auto const batch = make_batch(recs).to(torch::kDouble);

  torch::manual_seed(103);
  auto sc = ScoreModelConfig::desk();
  sc.noise_levels = 4;
  auto gic = GICConfig::desk();
  gic.cascades = 1;
  gic.blocks = 1;
  ModelBundle bundle(Ablation::Full, DenoiserConfig::desk(2), gic, ScoreNet(sc, make_schedule(2.0, 0.2, 4)));
  bundle->to(torch::kDouble);
  auto g = at::make_generator<at::CPUGeneratorImpl>(104);
  {
    torch::NoGradGuard ng;
    for (auto &p : bundle->named_parameters()) {
      if (p.key().find("head") != std::string::npos) { p.value().copy_(0.1 * torch::randn(p.value().sizes(), g, p.value().options())); }
    }
  }
  auto loss = [&] { return bundle->loss(bundle->forward(batch), batch.xg, LossMode::Mse); };
  bundle->zero_grad();
  loss().backward();
  auto const params = bundle->named_parameters();
  std::vector<std::pair<torch::Tensor, int64_t>> alpha{{params["gic.gic0.alpha_z0"], 0}};
  std::vector<std::pair<torch::Tensor, int64_t>> mu{{params["gic.gic0.raw_mu_z"], 0}, {params["gic.gic0.raw_mu_t"], 0}};
  std::vector<std::pair<torch::Tensor, int64_t>> slice;
  for (auto const *name : {"gic.gic0.reg_z.0.head.weight", "dm.fusion.head.weight"}) {
    auto const p = params[name];
    for (int64_t i = 0; i < 4; ++i) { slice.emplace_back(p, (i * 7) % p.numel()); }
  }
  auto const f = [&] { return loss().item<double>(); };
  double const ea = fd_relative(f, alpha, 1e-5), em = fd_relative(f, mu, 1e-5), ew = fd_relative(f, slice, 1e-5);
  return {ea < 1e-3 && em < 1e-3 && ew < 1e-3, "relative FD error: alpha " + num(ea) + ", mu " + num(em) +
                                                   ", weight slice " + num(ew) + " (each < 1e-3), K=1 I=1 8x8 C=2"};
}

Result toy_lines(AcceptanceReport const &rep)
{
  std::cout << rep.table;
  bool ok = rep.passed();
  std::string detail;
  for (auto const &l : rep.lines) {
    detail += (detail.empty() ? "" : "; ") + l.what + ": " + num(l.measured) + (l.passed ? "" : " FAILED");
  }
  return {ok, rep.name + ": " + detail};
}

Result tv_baseline(ToyRunner &runner)
{
  auto const &test = runner.data().test;
  double zf = 0, tv = 0;
  bool monotone = true;
  for (auto const &r : test) {
    auto const maps = r.maps.tensor().to(torch::kComplexDouble);
    auto const mask = r.mask.tensor(torch::kDouble);
    auto const y = r.y.to(torch::kComplexDouble);
    auto const res = tv_reconstruct(y, maps, mask, TvConfig{});
    // Monotone descent needs alpha below 2 / (1 + 8 lambda / sqrt(eps)).
    TvConfig small;
    small.alpha = 0.1;
    auto const f = tv_reconstruct(y, maps, mask, small).objective;
    for (size_t i = 1; i < f.size(); ++i) { monotone = monotone && f[i] <= f[i - 1]; }
    zf += psnr(zero_filled(y, maps, mask), r.xg);
    tv += psnr(res.x, r.xg);
  }
  zf /= static_cast<double>(test.size());
  tv /= static_cast<double>(test.size());

  auto const xg = crandn({16, 16}, 121);
  auto const maps = make_coil_maps(4, 16, 16).tensor();
  auto const full = torch::ones({16}, torch::kDouble);
  TvConfig cfg;
  cfg.lambda = 0;
  cfg.steps = 20;
  auto const recovered = tv_reconstruct(forward(xg, maps, full), maps, full, cfg).x;
  auto const err = rel(recovered, xg);
  return {monotone && err < 1e-3 && tv > zf,
          std::string("objective ") + (monotone ? "non-increasing" : "increased") + " over 200 steps at alpha 0.1 on " +
            std::to_string(test.size()) + " toy records; lambda=0 full-mask error " + num(err) +
            " (< 1e-3); PSNR TV " + num(tv) + " dB vs zero-filled " + num(zf) + " dB at 4x"};
}

} // namespace

int main()
{
  std::vector<std::pair<std::string, std::function<Result()>>> quick{
    {"operator algebra", operator_algebra},
    {"DC block", dc_block},
    {"DF block", df_block},
    {"score recovery", score_recovery},
    {"Langevin moments", langevin_moments},
    {"mask construction", mask_construction},
    {"loss weights", loss_weight_law},
    {"gradient checks", gradient_checks},
  };
  int failed = 0, index = 0;
  auto report = [&](std::string const &name, Result const &r, double seconds) {
    ++index;
    failed += r.passed ? 0 : 1;
    std::cout << (r.passed ? "PASS" : "FAIL") << "  [" << index << "] " << name << ": " << r.detail << "  ("
              << num(seconds) << " s)" << std::endl;
  };
  auto timed = [&](std::string const &name, std::function<Result()> const &f) {
    auto const t0 = std::chrono::steady_clock::now();
    Result r;
    try {
      r = f();
    } catch (std::exception const &e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    report(name, r, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  };
  for (auto const &[name, f] : quick) { timed(name, f); }

  ToyRunner runner(ToyExperiment::named("e2e-4x"), &std::cerr);
  timed("end-to-end toy run", [&] { return toy_lines(run_acceptance("e2e-4x", runner)); });
  timed("reduced sampling steps", [&] { return toy_lines(run_acceptance("steps20", runner)); });
  timed("ablation trend", [&] { return toy_lines(run_acceptance("ablation-sweep", runner)); });
  timed("TV baseline", [&] { return tv_baseline(runner); });

  std::cout << (index - failed) << "/" << index << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
