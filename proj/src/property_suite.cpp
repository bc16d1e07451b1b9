#include "sgm/property_suite.hpp"

#include "sgm/baselines.hpp"
#include "sgm/checkpoint.hpp"
#include "sgm/dataset.hpp"
#include "sgm/denoiser.hpp"
#include "sgm/errors.hpp"
#include "sgm/evaluate.hpp"
#include "sgm/gic.hpp"
#include "sgm/losses.hpp"
#include "sgm/metrics.hpp"
#include "sgm/operators.hpp"
#include "sgm/phantom.hpp"
#include "sgm/sampler.hpp"
#include "sgm/schedule.hpp"
#include "sgm/score_net.hpp"
#include "sgm/score_training.hpp"
#include "sgm/trainer.hpp"

#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace fs = std::filesystem;

namespace sgm {

namespace {

using torch::Tensor;

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Outcome
{
  double measured = 0;
  std::string detail;
};

struct Ctx
{
  uint64_t seed = 0;
  at::Generator gen(uint64_t salt) const { return make_generator(seed * 7919 + salt); }
};

struct Check
{
  char const *group;
  char const *name;
  double tolerance;
  std::function<Outcome(Ctx const &)> run;
};

Tensor crandn(std::vector<int64_t> const &shape, at::Generator &g)
{
  auto const o = torch::TensorOptions().dtype(torch::kDouble);
  return torch::complex(torch::randn(shape, g, o), torch::randn(shape, g, o));
}

double max_abs(Tensor const &t) { return t.numel() ? t.abs().max().item<double>() : 0.0; }
double l2(Tensor const &t) { return t.abs().pow(2).sum().sqrt().item<double>(); }

Tensor maps_d(int64_t c, int64_t h, int64_t w) { return make_coil_maps(c, h, w).tensor().to(torch::kComplexDouble); }

Tensor mask_d(int64_t w, int r, uint64_t seed, MaskKind kind = MaskKind::Random)
{
  return make_mask(w, r, std::max(0.08, 1.0 / static_cast<double>(w)), kind, seed).tensor(torch::kDouble);
}

std::string fmt(double v)
{
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

std::vector<DatasetRecord> small_records(uint64_t seed, int64_t n, int64_t size, int64_t coils, int accel,
                                         bool with_pgi)
{
  std::vector<DatasetRecord> out;
  auto g = make_generator(seed + 99);
  for (int64_t i = 0; i < n; ++i) {
    AcquisitionConfig acq;
    acq.coils = coils;
    acq.acceleration = accel;
    acq.center_fraction = std::max(acq.center_fraction, 1.0 / static_cast<double>(size));
    acq.seed = seed * 31 + static_cast<uint64_t>(i);
    auto r = generate_record("rec-" + std::to_string(i),
                             PhantomSpec::for_family(PhantomFamily::A, size, size, seed + static_cast<uint64_t>(i)),
                             acq);
    if (with_pgi) {
      auto const zf = zero_filled(r.y, r.maps.tensor(), r.mask.tensor());
      r.pgi = (zf + 0.05 * complex_white_noise(zf, g)).to(torch::kComplexFloat);
    }
    out.push_back(std::move(r));
  }
  return out;
}

Batch batch_d(std::vector<DatasetRecord> const &records) { return make_batch(records).to(torch::kDouble); }

ScoreNet small_psn(int64_t levels = 4)
{
  auto cfg = ScoreModelConfig::desk();
  cfg.noise_levels = levels;
  return ScoreNet(cfg, make_schedule(2.0, 0.2, levels));
}

ScoreFn gaussian_score(NoiseSchedule const &s)
{
  auto const sig = s.tensor(torch::kDouble);
  return [sig](Tensor const &x, Tensor const &level) {
    auto const sj = sig.index_select(0, level).to(x.scalar_type()).view({-1, 1, 1, 1});
    return -x / (1 + sj * sj);
  };
}

/// Reinitializes every zero-initialized output head so gradients reach the layers below it.
void randomize_heads(torch::nn::Module &m, at::Generator &g)
{
  torch::NoGradGuard guard;
  for (auto &p : m.named_parameters()) {
    if (p.key().find("head") != std::string::npos) {
      p.value().copy_(0.1 * torch::randn(p.value().sizes(), g, p.value().options()));
    }
  }
}

struct Entry
{
  Tensor p;
  int64_t index;
};

std::vector<Entry> sample_entries(std::vector<Tensor> const &params, int64_t n, at::Generator &g)
{
  int64_t total = 0;
  for (auto const &p : params) { total += p.numel(); }
  std::vector<Entry> out;
  if (total == 0) { return out; }
  auto const picks = torch::randint(total, {n}, g, torch::kLong);
  for (int64_t i = 0; i < n; ++i) {
    auto idx = picks[i].item<int64_t>();
    for (auto const &p : params) {
      if (idx < p.numel()) {
        out.push_back({p, idx});
        break;
      }
      idx -= p.numel();
    }
  }
  return out;
}

/// Norm-relative error between autograd gradients (already in p.grad()) and central
/// differences of `loss` over the sampled entries.
Outcome fd_compare(std::function<double()> const &loss, std::vector<Entry> const &entries, double h,
                   std::string const &what)
{
  double num = 0, den = 0;
  for (auto const &e : entries) {
    auto const g = e.p.grad().defined() ? e.p.grad().reshape({-1})[e.index].item<double>() : 0.0;
    double fd = 0;
    {
      torch::NoGradGuard guard;
      auto flat = e.p.detach().view({-1});
      auto const orig = flat[e.index].item<double>();
      flat[e.index].fill_(orig + h);
      auto const lp = loss();
      flat[e.index].fill_(orig - h);
      auto const lm = loss();
      flat[e.index].fill_(orig);
      fd = (lp - lm) / (2 * h);
    }
    num += (g - fd) * (g - fd);
    den += g * g;
  }
  if (den == 0) { return {kInf, what + ": no gradient reached the sampled entries"}; }
  return {std::sqrt(num / den), what + ": " + std::to_string(entries.size()) + " entries, gradient rms " +
                                    fmt(std::sqrt(den / static_cast<double>(entries.size())))};
}

struct TempDir
{
  fs::path path;
  explicit TempDir(std::string const &tag)
  {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("sgm-verify-" + std::to_string(::getpid()) + "-" + tag + "-" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir()
  {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::map<std::string, std::pair<std::string, fs::file_time_type>> snapshot(fs::path const &root)
{
  std::map<std::string, std::pair<std::string, fs::file_time_type>> out;
  for (auto const &e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) { continue; }
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[e.path().string()] = {ss.str(), e.last_write_time()};
  }
  return out;
}

ModelBundle tiny_bundle(int64_t coils)
{
  return ModelBundle(Ablation::Full, DenoiserConfig::desk(coils), GICConfig::desk(), small_psn());
}

// ---- operators ------------------------------------------------------------

Outcome check_unitarity(Ctx const &c)
{
  auto g = c.gen(1);
  double worst = 0;
  for (auto const &shape : std::vector<std::vector<int64_t>>{{4, 4}, {8, 8}, {16, 16}, {3, 16, 32}, {2, 4, 12, 8}}) {
    auto const x = crandn(shape, g);
    auto const n = l2(x);
    worst = std::max(worst, std::abs(l2(fft2c(x)) - n) / n);
    worst = std::max(worst, std::abs(l2(ifft2c(x)) - n) / n);
  }
  return {worst, "max relative norm change over 5 shapes"};
}

Outcome check_adjointness(Ctx const &c)
{
  auto g = c.gen(2);
  double worst = 0;
  int const coils[] = {1, 2, 4, 8};
  int const accel[] = {1, 2, 4};
  for (int t = 0; t < 100; ++t) {
    auto const C = coils[t % 4];
    auto const maps = maps_d(C, 16, 16);
    auto const mask = mask_d(16, accel[t % 3], c.seed + static_cast<uint64_t>(t));
    auto const x = crandn({16, 16}, g);
    auto const y = crandn({C, 16, 16}, g);
    auto const lhs = (forward(x, maps, mask).conj() * y).sum();
    auto const rhs = (x.conj() * adjoint(y, maps, mask)).sum();
    auto const scale = std::max(std::abs(lhs.item<c10::complex<double>>()), std::abs(rhs.item<c10::complex<double>>()));
    worst = std::max(worst, (lhs - rhs).abs().item<double>() / scale);
  }
  return {worst, "max relative dot-product mismatch, 100 trials, 16x16, C in {1,2,4,8}"};
}

Outcome check_reduce_expand(Ctx const &c)
{
  auto g = c.gen(3);
  double worst = 0;
  for (int64_t C : {1, 2, 4, 8}) {
    for (auto const &hw : std::vector<std::pair<int64_t, int64_t>>{{16, 16}, {8, 12}}) {
      auto const x = crandn({hw.first, hw.second}, g);
      auto const maps = maps_d(C, hw.first, hw.second);
      worst = std::max(worst, max_abs(reduce(expand(x, maps), maps) - x) / max_abs(x));
    }
  }
  return {worst, "max relative deviation of reduce(expand(x)) from x"};
}

Outcome check_operator_gradient(Ctx const &c)
{
  auto g = c.gen(4);
  auto const maps = maps_d(2, 8, 8);
  auto const mask = mask_d(8, 2, c.seed);
  auto const y = apply_mask(crandn({2, 8, 8}, g), mask);
  auto const x0 = crandn({8, 8}, g);
  auto objective = [&](Tensor const &x) { return (forward(x, maps, mask) - y).abs().pow(2).sum(); };
  auto x = x0.clone().requires_grad_(true);
  objective(x).backward();
  auto const grad = torch::view_as_real(x.grad()).reshape({-1});
  auto const base = torch::view_as_real(x0).reshape({-1});
  std::vector<double> fd(static_cast<size_t>(base.numel()));
  double const h = 1e-6;
  for (int64_t i = 0; i < base.numel(); ++i) {
    auto p = base.clone(), m = base.clone();
    p[i] += h;
    m[i] -= h;
    auto const lp = objective(torch::view_as_complex(p.view({8, 8, 2}))).item<double>();
    auto const lm = objective(torch::view_as_complex(m.view({8, 8, 2}))).item<double>();
    fd[static_cast<size_t>(i)] = (lp - lm) / (2 * h);
  }
  auto const fdt = torch::tensor(fd, torch::kDouble);
  return {(fdt - grad).norm().item<double>() / grad.norm().item<double>(),
          "norm-relative gradient error of ||A x - y||^2, 8x8, C=2, all 128 real coordinates"};
}

// ---- dc / df --------------------------------------------------------------

Outcome check_dc_projection(Ctx const &c)
{
  auto g = c.gen(5);
  double worst = 0;
  for (int r : {2, 4}) {
    auto const mask = mask_d(16, r, c.seed + 5);
    auto const y = apply_mask(crandn({3, 16, 16}, g), mask);
    auto const yc = crandn({3, 16, 16}, g);
    auto const once = data_consistency(yc, y, mask, DcWeight::hard());
    auto const twice = data_consistency(once, y, mask, DcWeight::hard());
    worst = std::max(worst, max_abs(twice - once));
  }
  return {worst, "max |DC(DC(y_c)) - DC(y_c)| with mu = inf"};
}

Outcome check_dc_fixed_point(Ctx const &c)
{
  auto g = c.gen(6);
  auto const mask = mask_d(16, 4, c.seed + 6);
  auto const y = apply_mask(crandn({2, 16, 16}, g), mask);
  auto const yc = y + crandn({2, 16, 16}, g) * (1 - mask);
  double worst = 0;
  for (double mu : {0.0, 0.3, 1.0, 10.0, 1e6, kInf}) {
    worst = std::max(worst, max_abs(data_consistency(yc, y, mask, DcWeight::of(mu)) - yc));
  }
  return {worst, "max |DC(y_c) - y_c| over mu in {0, 0.3, 1, 10, 1e6, inf}"};
}

Outcome check_df_affine(Ctx const &c)
{
  auto g = c.gen(7);
  auto const maps = maps_d(2, 8, 8);
  auto const mask = mask_d(8, 2, c.seed + 7);
  auto const y = apply_mask(crandn({2, 8, 8}, g), mask);
  double const alpha = 0.7;
  auto f = [&](Tensor const &x) { return data_fidelity_step(x, y, maps, mask, alpha); };
  auto const b = f(torch::zeros({8, 8}, torch::kComplexDouble)).reshape({-1});
  auto const basis = torch::eye(64, torch::kComplexDouble);
  std::vector<Tensor> cols;
  for (int64_t j = 0; j < 64; ++j) { cols.push_back(f(basis[j].view({8, 8})).reshape({-1}) - b); }
  auto const M = torch::stack(cols, 1);
  double worst = 0;
  for (int t = 0; t < 5; ++t) {
    auto const x = crandn({8, 8}, g);
    worst = std::max(worst, max_abs(f(x).reshape({-1}) - (M.matmul(x.reshape({-1})) + b)));
  }
  return {worst, "max |DF(x) - (M x + b)| for the 64x64 dense form, 5 random x"};
}

// ---- data -----------------------------------------------------------------

Outcome check_mask_lines(Ctx const &c)
{
  double worst = 0;
  for (int64_t W : {32, 64, 96, 100, 128}) {
    for (int R : {1, 2, 4, 6, 8}) {
      for (auto kind : {MaskKind::Random, MaskKind::Equispaced}) {
        auto const m = make_mask(W, R, 0.08, kind, c.seed + static_cast<uint64_t>(W * R));
        worst = std::max(worst, std::abs(static_cast<double>(m.sampled_count()) - static_cast<double>(W) / R));
        auto const n = center_line_count(W, 0.08);
        auto const s = center_line_start(W, n);
        for (int64_t i = s; i < s + n; ++i) {
          if (!m.lines()[static_cast<size_t>(i)]) {
            return {kInf, "center line " + std::to_string(i) + " unsampled for W=" + std::to_string(W)};
          }
        }
      }
    }
  }
  return {worst, "max |sampled lines - W/R| over W in {32..128}, R in {1..8}, random and equispaced"};
}

Outcome check_determinism(Ctx const &c)
{
  AcquisitionConfig acq;
  acq.noise_std = 0.01;
  acq.seed = c.seed + 8;
  auto const spec = PhantomSpec::for_family(PhantomFamily::B, 24, 24, c.seed + 8);
  auto const a = generate_record("a", spec, acq);
  auto const b = generate_record("a", spec, acq);
  int diffs = 0;
  diffs += !torch::equal(a.xg, b.xg);
  diffs += !torch::equal(a.maps.tensor(), b.maps.tensor());
  diffs += !torch::equal(a.y, b.y);
  diffs += a.mask.lines() != b.mask.lines();
  diffs += !torch::equal(make_phantom(spec), make_phantom(spec));
  return {static_cast<double>(diffs), "arrays differing between two generations with the same seeds"};
}

Outcome check_measurement_consistency(Ctx const &c)
{
  auto const recs = small_records(c.seed + 9, 2, 16, 4, 4, false);
  int diffs = 0;
  for (auto const &r : recs) {
    auto const maps = r.maps.tensor();
    auto const mask = r.mask.tensor();
    auto const a = adjoint(r.y, maps, mask);
    diffs += !torch::equal(a, zero_filled(r.y, maps, mask));
    diffs += !torch::equal(a, adjoint(forward(r.xg, maps, mask), maps, mask));
  }
  return {static_cast<double>(diffs), "bitwise mismatches between adjoint(y), zero-filled and adjoint(forward(x_g))"};
}

// ---- score ----------------------------------------------------------------

Outcome check_score_antisymmetry(Ctx const &c)
{
  torch::manual_seed(c.seed + 10);
  auto model = small_psn();
  auto g = c.gen(10);
  auto const images = crandn({512, 8, 8}, g).to(torch::kComplexFloat);
  ScoreTrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch_size = 32;
  cfg.seed = c.seed + 10;
  train_score(model, images, cfg);
  model->eval();
  torch::NoGradGuard guard;
  auto const x = torch::randn({64, 2, 8, 8}, g, torch::kFloat);
  double sum = 0;
  auto const L = model->schedule().levels();
  for (int64_t j = 0; j < L; ++j) {
    auto const lvl = torch::full({64}, j, torch::kLong);
    auto const s1 = model->forward(x, lvl);
    auto const s2 = model->forward(-x, lvl);
    sum += (s1 + s2).norm().item<double>() / s1.norm().item<double>();
  }
  return {sum / static_cast<double>(L), "mean ||s(x) + s(-x)|| / ||s(x)|| over levels after 128 Gaussian DSM steps"};
}

Outcome check_dsm_gradient(Ctx const &c)
{
  torch::manual_seed(c.seed + 11);
  auto model = small_psn();
  model->to(torch::kDouble);
  auto g = c.gen(11);
  auto const clean = torch::randn({4, 2, 8, 8}, g, torch::kDouble);
  auto const draw = draw_dsm(clean, model->schedule(), g);
  auto const fn = as_score_fn(model);
  model->zero_grad();
  dsm_loss(fn, clean, draw, model->schedule()).backward();
  auto const entries = sample_entries(model->parameters(), 100, g);
  return fd_compare([&] { return dsm_loss(fn, clean, draw, model->schedule()).item<double>(); }, entries, 1e-5,
                    "DSM loss, sampled score-network parameters");
}

Outcome check_schedule(Ctx const &)
{
  double worst = 0;
  for (auto const &s : std::vector<std::tuple<double, double, int64_t>>{
         {1.0, 0.01, 10}, {50.0, 0.01, 232}, {3.3, 0.2, 4}, {1.0, 0.1, 2}, {12.5, 0.01, 10}}) {
    auto const sch = make_schedule(std::get<0>(s), std::get<1>(s), std::get<2>(s));
    auto const &v = sch.sigmas();
    for (size_t j = 1; j < v.size(); ++j) {
      if (!(v[j] < v[j - 1])) { return {kInf, "schedule not strictly decreasing"}; }
      worst = std::max(worst, std::abs(v[j] / v[j - 1] - sch.ratio()) / sch.ratio());
    }
  }
  return {worst, "max relative deviation of sigma_{j+1}/sigma_j from the common ratio"};
}

// ---- sampler --------------------------------------------------------------

struct SamplerSetup
{
  Batch b;
  NoiseSchedule schedule = make_schedule(1.0, 0.1, 4);
  SamplerConfig config;
};

SamplerSetup sampler_setup(Ctx const &c, int64_t n)
{
  SamplerSetup s{batch_d(small_records(c.seed + 12, n, 8, 2, 2, false))};
  s.config.epsilon = 2e-3;
  s.config.steps_per_level = 3;
  s.config.seed = c.seed + 12;
  return s;
}

Outcome check_sampler_determinism(Ctx const &c)
{
  auto const s = sampler_setup(c, 2);
  auto const fn = gaussian_score(s.schedule);
  auto const a = sample_pgi(fn, s.b.y, s.b.maps, s.b.mask, s.schedule, s.config);
  auto const b = sample_pgi(fn, s.b.y, s.b.maps, s.b.mask, s.schedule, s.config);
  return {torch::equal(a, b) ? 0.0 : 1.0, "two runs with the same seed differ (1) or not (0)"};
}

Outcome check_step_size_law(Ctx const &c)
{
  auto const s = sampler_setup(c, 1);
  std::vector<SamplerLogRow> log;
  sample_pgi(gaussian_score(s.schedule), s.b.y, s.b.maps, s.b.mask, s.schedule, s.config, &log);
  double worst = 0;
  auto const sL = s.schedule.sigma_min();
  for (auto const &row : log) {
    auto const sj = s.schedule.sigma(row.level - 1);
    worst = std::max(worst, std::abs(row.eta - s.config.epsilon * (sj * sj) / (sL * sL)));
  }
  if (log.size() != static_cast<size_t>(s.schedule.levels() * s.config.steps_per_level)) {
    return {kInf, "unexpected log length " + std::to_string(log.size())};
  }
  return {worst, "max |eta_t - epsilon sigma_j^2 / sigma_L^2| over " + std::to_string(log.size()) + " logged steps"};
}

Outcome check_consistency_pull(Ctx const &c)
{
  auto const s = sampler_setup(c, 1);
  int64_t const chains = 20, steps = 40;
  auto const y = s.b.y.expand({chains, -1, -1, -1});
  auto const maps = s.b.maps.expand({chains, -1, -1, -1});
  auto const mask = s.b.mask.expand({chains, -1, -1, -1});
  auto const level = s.schedule.levels() - 1;
  auto const step = step_parameters(s.config, s.schedule, level);
  auto g = c.gen(13);
  auto x = s.schedule.sigma_max() * complex_white_noise(torch::zeros({chains, 8, 8}, torch::kComplexDouble), g);
  auto const fn = gaussian_score(s.schedule);
  std::vector<double> r;
  for (int64_t t = 0; t < steps; ++t) {
    x = langevin_step(x, fn, y, maps, mask, level, step, complex_white_noise(x, g));
    r.push_back((forward(x, maps, mask) - y).abs().pow(2).sum({1, 2, 3}).sqrt().mean().item<double>());
  }
  double mt = 0, mr = 0;
  for (int64_t t = 0; t < steps; ++t) {
    mt += static_cast<double>(t) / steps;
    mr += r[static_cast<size_t>(t)] / steps;
  }
  double cov = 0, var = 0;
  for (int64_t t = 0; t < steps; ++t) {
    cov += (t - mt) * (r[static_cast<size_t>(t)] - mr);
    var += (t - mt) * (t - mt);
  }
  return {cov / var, "least-squares slope of the mean residual over 20 chains at the final level (" +
                       fmt(r.front()) + " -> " + fmt(r.back()) + ")"};
}

Outcome check_nan_abort(Ctx const &c)
{
  auto const s = sampler_setup(c, 1);
  ScoreFn bad = [](Tensor const &x, Tensor const &) { return torch::full_like(x, std::nan("")); };
  try {
    sample_pgi(bad, s.b.y, s.b.maps, s.b.mask, s.schedule, s.config);
  } catch (NumericalError const &) {
    return {0, "NumericalError raised for a NaN score"};
  }
  return {1, "sampler returned despite a NaN score"};
}

// ---- denoising module -------------------------------------------------------

Outcome check_residual_identity(Ctx const &c)
{
  torch::manual_seed(c.seed + 14);
  auto const b = make_batch(small_records(c.seed + 14, 2, 16, 2, 4, true));
  DenoisingModule dm(DenoiserConfig::desk(2), small_psn());
  auto g = c.gen(14);
  randomize_heads(*dm, g);
  {
    torch::NoGradGuard guard;
    for (auto &p : dm->fusion()->named_parameters()) {
      if (p.key().find("head") != std::string::npos) { p.value().zero_(); }
    }
  }
  torch::NoGradGuard guard;
  auto const out = dm->forward(b.pgi, b.y, b.maps, b.mask);
  return {max_abs(out.x_t0 - b.pgi), "max |x_T^0 - x_T| with the fusion head zeroed"};
}

Outcome check_dm_differentiability(Ctx const &c)
{
  torch::manual_seed(c.seed + 15);
  auto const b = batch_d(small_records(c.seed + 15, 2, 16, 2, 4, true));
  DenoisingModule dm(DenoiserConfig::desk(2), small_psn());
  dm->to(torch::kDouble);
  auto g = c.gen(15);
  randomize_heads(*dm, g);
  auto loss = [&] { return complex_mse(dm->forward(b.pgi, b.y, b.maps, b.mask).x_t0, b.xg); };
  dm->zero_grad();
  loss().backward();
  Outcome worst{0, ""};
  std::vector<std::pair<std::string, std::vector<Tensor>>> parts{
    {"CIE", dm->cie()->parameters()}, {"PSN copy", dm->sie()->psn()->parameters()}, {"fusion", dm->fusion()->parameters()}};
  std::vector<Tensor> sie_own;
  for (auto &p : dm->sie()->named_parameters()) {
    if (p.key().rfind("psn.", 0) != 0) { sie_own.push_back(p.value()); }
  }
  parts.emplace_back("SIE", sie_own);
  for (auto const &[what, params] : parts) {
    double total = 0;
    for (auto const &p : params) {
      if (p.grad().defined()) { total += p.grad().abs().sum().item<double>(); }
    }
    if (!(total > 0) || !std::isfinite(total)) { return {kInf, "no finite gradient reached the " + what}; }
    auto const o = fd_compare([&] { return loss().item<double>(); }, sample_entries(params, 12, g), 1e-4, what);
    if (o.measured >= worst.measured) { worst = o; }
  }
  worst.detail = "worst group " + worst.detail;
  return worst;
}

Outcome check_cie_dc(Ctx const &c)
{
  torch::manual_seed(c.seed + 16);
  auto const b = batch_d(small_records(c.seed + 16, 2, 16, 2, 4, true));
  Cie cie(2, std::vector<int64_t>{8, 16, 32, 64}, 10.0);
  cie->to(torch::kDouble);
  auto g = c.gen(16);
  randomize_heads(*cie, g);
  torch::NoGradGuard guard;
  auto const raw = cie->kspace(b.pgi, b.y, b.maps, b.mask, false);
  auto const dc = cie->kspace(b.pgi, b.y, b.maps, b.mask, true);
  return {max_abs((dc - raw) * (1 - b.mask)), "max change at unsampled frequencies"};
}

Outcome check_ablation_fidelity(Ctx const &c)
{
  auto const b = make_batch(small_records(c.seed + 17, 2, 16, 2, 4, true));
  auto const psn = small_psn();
  double violations = 0;
  torch::NoGradGuard guard;
  for (bool use_cie : {false, true}) {
    for (bool use_sie : {false, true}) {
      torch::manual_seed(c.seed + 17);
      auto cfg = DenoiserConfig::desk(2);
      cfg.use_cie = use_cie;
      cfg.use_sie = use_sie;
      DenoisingModule dm(cfg, psn);
      auto g = c.gen(17);
      randomize_heads(*dm, g);
      dm->eval();
      auto const o = dm->forward(b.pgi, b.y, b.maps, b.mask);
      violations += !torch::isfinite(torch::view_as_real(o.x_t0)).all().item<bool>();
      if (!use_cie) { violations += max_abs(o.x_d) != 0; }
      if (!use_sie) { violations += max_abs(o.x_p) != 0; }
      violations += max_abs(o.x_t0 - denoise(dm->fusion(), b.pgi, o.x_d, o.x_p)) != 0;
    }
  }
  return {violations, "violations over {x_T}, {x_T,x_d}, {x_T,x_p}, {x_T,x_d,x_p}"};
}

// ---- gic ------------------------------------------------------------------

Outcome check_gic_dc(Ctx const &c)
{
  double worst = 0;
  for (auto const &[coils, accel] : std::vector<std::pair<int64_t, int>>{{1, 4}, {4, 1}}) {
    torch::manual_seed(c.seed + 18);
    auto b = batch_d(small_records(c.seed + 18, 2, 16, coils, accel, true));
    b.maps = b.maps / b.maps.abs().pow(2).sum(1, true).sqrt();
    b.y = forward(b.xg, b.maps, b.mask);
    auto cfg = GICConfig::desk();
    cfg.hard_dc = true;
    SgmNet net(cfg);
    net->to(torch::kDouble);
    auto g = c.gen(18);
    randomize_heads(*net, g);
    torch::NoGradGuard guard;
    auto const out = net->forward(b.pgi, b.zero_filled(), b.y, b.maps, b.mask);
    worst = std::max(worst, max_abs(forward(out.final(), b.maps, b.mask) - b.y) / max_abs(b.y));
  }
  return {worst, "max |A x_z^K - y| / max|y| with hard DC (C=1 random mask, C=4 full mask)"};
}

Outcome check_attention_convexity(Ctx const &c)
{
  torch::manual_seed(c.seed + 19);
  auto const b = batch_d(small_records(c.seed + 19, 2, 16, 2, 4, true));
  SgmNet net(GICConfig::desk());
  net->to(torch::kDouble);
  auto g = c.gen(19);
  randomize_heads(*net, g);
  auto const I = net->config().blocks;
  auto cascade = net->cascade(0);
  Tensor last_t, last_z, m;
  GicOverrides o;
  o.regularizer = [&](char branch, int64_t i, std::vector<Tensor> const &in) {
    auto const out = 0.5 * in.back() + 0.25 * in.front();
    if (i == I - 1) { (branch == 'T' ? last_t : last_z) = out; }
    return out;
  };
  o.attention = [&](Tensor const &f) {
    m = cascade->attention()->forward(f);
    return m;
  };
  net->set_overrides(o);
  torch::NoGradGuard guard;
  BranchState in{b.pgi, b.zero_filled(), {}, {}};
  auto const out = gic_forward(net, in, b.y, b.maps, b.mask, 0);
  auto const mm = m.squeeze(1);
  auto const expected = image_data_consistency(in.x_z + last_z * mm + last_t * (1 - mm), b.y, b.maps, b.mask,
                                               cascade->mu('z'));
  if (m.min().item<double>() < 0 || m.max().item<double>() > 1) { return {kInf, "attention map outside [0, 1]"}; }
  return {max_abs(out.x_z - expected), "max deviation from DC(x_z^k + m x_z^I + (1 - m) x_T^I)"};
}

Outcome check_dense_toggle(Ctx const &c)
{
  auto const b = batch_d(small_records(c.seed + 20, 2, 16, 2, 4, true));
  double violations = 0;
  for (bool dense : {false, true}) {
    auto cfg = GICConfig::desk();
    cfg.use_dense = dense;
    torch::manual_seed(c.seed + 20);
    SgmNet net(cfg);
    net->to(torch::kDouble);
    auto cascade = net->cascade(0);
    std::vector<std::tuple<char, int64_t, std::vector<Tensor>>> seen;
    GicOverrides o;
    o.regularizer = [&](char branch, int64_t i, std::vector<Tensor> const &in) {
      seen.emplace_back(branch, i, in);
      return 0.5 * in.back();
    };
    net->set_overrides(o);
    torch::NoGradGuard guard;
    gic_forward(net, {b.pgi, b.zero_filled(), {}, {}}, b.y, b.maps, b.mask, 0);
    // Replay the DF chain of both branches with the same regularizer.
    Tensor xt = b.pgi, xz = b.zero_filled();
    std::vector<Tensor> rt, rz;
    for (auto const &[branch, i, in] : seen) {
      auto const size = static_cast<int64_t>(in.size());
      if (branch == 'T') {
        rt.push_back(data_fidelity_step(xt, b.y, b.maps, b.mask, cascade->alpha(i, 'T')));
        violations += size != (dense ? i + 2 : 1);
        violations += max_abs(in.back() - rt.back()) > 0;
        xt = 0.5 * in.back();
      } else {
        rz.push_back(data_fidelity_step(xz, b.y, b.maps, b.mask, cascade->alpha(i, 'z')));
        violations += size != (dense ? 2 * (i + 2) : 2);
        violations += max_abs(in.back() - rz.back()) > 0;
        if (!dense) { violations += max_abs(in.front() - rt.back()) > 0; }
        xz = 0.5 * in.back();
      }
    }
    violations += seen.size() != static_cast<size_t>(2 * cfg.blocks);
  }
  return {violations, "regularizer input lists that differ from the expected dense/non-dense inputs"};
}

Outcome check_gic_gradient(Ctx const &c)
{
  torch::manual_seed(c.seed + 21);
  auto const b = batch_d(small_records(c.seed + 21, 2, 8, 2, 2, true));
  auto cfg = GICConfig::desk();
  cfg.cascades = 1;
  cfg.blocks = 1;
  SgmNet net(cfg);
  net->to(torch::kDouble);
  auto g = c.gen(21);
  randomize_heads(*net, g);
  auto const zf = b.zero_filled();
  auto loss = [&] { return total_loss(b.pgi, net->forward(b.pgi, zf, b.y, b.maps, b.mask), b.xg, LossMode::Mse); };
  net->zero_grad();
  loss().backward();
  double worst = 0;
  std::string names;
  for (auto &p : net->named_parameters()) {
    if (p.key().find("alpha") == std::string::npos && p.key().find("raw_mu") == std::string::npos) { continue; }
    auto const o = fd_compare([&] { return loss().item<double>(); }, {{p.value(), 0}}, 1e-6, p.key());
    worst = std::max(worst, o.measured);
    names += (names.empty() ? "" : ", ") + p.key();
  }
  if (names.empty()) { return {kInf, "no alpha or mu parameters found"}; }
  return {worst, "max relative FD error over " + names};
}

Outcome check_intermediate_count(Ctx const &c)
{
  auto const b = make_batch(small_records(c.seed + 22, 1, 16, 2, 4, true));
  double bad = 0;
  for (int64_t K : {1, 2, 3}) {
    auto cfg = GICConfig::desk();
    cfg.cascades = K;
    torch::manual_seed(c.seed + 22);
    SgmNet net(cfg);
    torch::NoGradGuard guard;
    auto const out = net->forward(b.pgi, b.zero_filled(), b.y, b.maps, b.mask);
    bad += std::abs(static_cast<double>(out.x_z.size()) - static_cast<double>(K + 1));
    bad += std::abs(static_cast<double>(out.x_t.size()) - static_cast<double>(K + 1));
    bad += std::abs(static_cast<double>(loss_terms(b.pgi, out).size()) - static_cast<double>(2 + 2 * K));
  }
  return {bad, "count mismatches of intermediates (K+1 each incl. inputs) and loss terms (2 + 2K), K in {1,2,3}"};
}

// ---- loss -----------------------------------------------------------------

Outcome check_loss_linearity(Ctx const &c)
{
  auto g = c.gen(23);
  int64_t const K = 3;
  auto img = [&] { return crandn({2, 16, 16}, g); };
  auto const xg = img();
  GicOutput out;
  for (int64_t k = 0; k <= K; ++k) {
    out.x_t.push_back(img());
    out.x_z.push_back(img());
  }
  auto const x_t0 = img();
  double worst = 0;
  for (auto mode : {LossMode::Mse, LossMode::MseSsim}) {
    auto const total = total_loss(x_t0, out, xg, mode).item<double>();
    double sum = 0;
    for (auto const &t : loss_terms(x_t0, out)) { sum += t.weight * image_loss(t.image, xg, mode).item<double>(); }
    worst = std::max(worst, std::abs(total - sum) / total);
    // Replace one intermediate at a time by the target: the loss drops by exactly the
    // weighted terms that referenced it.
    // slot 0 is x_T^0, then (x_T^k, x_z^k) for k = 1..K
    for (int64_t slot = 0; slot <= 2 * K; ++slot) {
      auto modified = out;
      auto t0 = x_t0;
      auto &target = slot == 0 ? t0 : (slot % 2 ? modified.x_t : modified.x_z)[static_cast<size_t>((slot + 1) / 2)];
      double drop = 0;
      for (auto const &t : loss_terms(x_t0, out)) {
        if (t.image.is_same(target)) { drop += t.weight * image_loss(t.image, xg, mode).item<double>(); }
      }
      target = xg.clone();
      auto const after = total_loss(t0, modified, xg, mode).item<double>();
      worst = std::max(worst, std::abs((total - after) - drop) / total);
    }
  }
  return {worst, "relative error of additivity and of single-term removal, MSE and MSE+SSIM"};
}

Outcome check_ssim_bounds(Ctx const &c)
{
  auto g = c.gen(24);
  double lo = kInf, hi = -kInf;
  for (int t = 0; t < 50; ++t) {
    auto const a = torch::rand({1, 16, 16}, g, torch::kDouble);
    Tensor b;
    switch (t % 3) {
    case 0: b = torch::rand({1, 16, 16}, g, torch::kDouble); break;
    case 1: b = 1 - a; break;
    default: b = a + 0.1 * torch::randn({1, 16, 16}, g, torch::kDouble); break;
    }
    auto const v = ssim_loss(b.to(torch::kComplexDouble), a.to(torch::kComplexDouble)).item<double>();
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return {std::max({0.0, -lo, hi - 2}), "observed 1 - SSIM range [" + fmt(lo) + ", " + fmt(hi) + "] over 50 pairs"};
}

Outcome check_checkpoint(Ctx const &c)
{
  torch::manual_seed(c.seed + 25);
  auto const recs = small_records(c.seed + 25, 4, 16, 2, 4, true);
  auto bundle = tiny_bundle(2);
  auto g = c.gen(25);
  randomize_heads(*bundle, g);
  auto const before = validate(bundle, recs, LossMode::MseSsim);
  TempDir dir("ckpt");
  save_bundle(bundle, dir.path / "model");
  auto loaded = load_bundle(dir.path / "model");
  auto const after = validate(loaded, recs, LossMode::MseSsim);
  double const diff = std::abs(before.loss - after.loss) + std::abs(before.psnr - after.psnr);
  std::ostringstream os;
  os << std::setprecision(17) << "validation loss " << before.loss << " vs " << after.loss;
  return {diff, os.str()};
}

// ---- metrics --------------------------------------------------------------

Outcome check_metric_hand(Ctx const &)
{
  double worst = 0;
  {
    auto const xg = torch::full({4, 4}, 0.8, torch::kDouble);
    worst = std::max(worst, std::abs(psnr(xg + 0.1, xg) - 20 * std::log10(0.8 / 0.1)));
  }
  {
    double const a = 0.8, b = 0.6;
    auto const xg = torch::full({11, 11}, a, torch::kDouble);
    auto const x = torch::full({11, 11}, b, torch::kDouble);
    auto const c1 = (0.01 * a) * (0.01 * a);
    worst = std::max(worst, std::abs(ssim(x, xg) - (2 * a * b + c1) / (a * a + b * b + c1)));
  }
  return {worst, "max error against closed-form PSNR (4x4 offset) and SSIM (11x11 constants)"};
}

Outcome check_evaluate_read_only(Ctx const &c)
{
  torch::manual_seed(c.seed + 26);
  TempDir dir("eval");
  auto const data = dir.path / "data" / "test";
  for (auto const &r : small_records(c.seed + 26, 3, 16, 2, 4, true)) { write_record(r, data); }
  save_bundle(tiny_bundle(2), dir.path / "ckpt");
  auto const before_data = snapshot(dir.path / "data");
  auto const before_ckpt = snapshot(dir.path / "ckpt");
  auto bundle = load_bundle(dir.path / "ckpt");
  EvalOptions opt;
  opt.figures = true;
  auto const rep = evaluate(read_split(data), &bundle, opt, dir.path / "out" / "figures");
  write_report(rep, dir.path / "out");
  double changed = 0;
  changed += before_data != snapshot(dir.path / "data");
  changed += before_ckpt != snapshot(dir.path / "ckpt");
  return {changed, "dataset or checkpoint trees modified by evaluate"};
}

Outcome check_csv_schema(Ctx const &c)
{
  auto const recs = small_records(c.seed + 27, 2, 16, 2, 4, true);
  EvalOptions opt;
  opt.stages = {"zero-filled", "x_T", "x_z^K"};
  TempDir dir("csv");
  double bad = 0;
  std::string first;
  for (int run = 0; run < 2; ++run) {
    auto const out = dir.path / std::to_string(run);
    write_report(evaluate(recs, nullptr, opt), out);
    std::ifstream in(out / "metrics.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    auto const text = ss.str();
    bad += text.rfind("record_id,method,stage,acceleration,psnr_db,ssim,status\n", 0) != 0;
    if (run == 0) {
      first = text;
    } else {
      bad += text != first;
    }
    std::ifstream js(out / "summary.json");
    bad += nlohmann::json::parse(js).value("csv_schema", "") != kMetricsCsvSchema;
  }
  return {bad, "header, schema tag or content differences between two runs"};
}

// ---- registry -------------------------------------------------------------

std::vector<Check> const &registry();

SuiteReport run_checks(std::vector<std::string> const &groups, SuiteOptions const &options, bool include_suite);

Outcome check_suite_determinism(Ctx const &c)
{
  std::vector<std::string> const groups{"operators", "dc-df", "data", "sampler", "gic", "loss", "metrics"};
  SuiteOptions o;
  o.seed = c.seed;
  auto const a = run_checks(groups, o, false).to_json(false).dump();
  auto const b = run_checks(groups, o, false).to_json(false).dump();
  return {a == b ? 0.0 : 1.0, "two consecutive runs of operators, dc-df, data, sampler, gic, loss, metrics"};
}

std::vector<Check> const &registry()
{
  static std::vector<Check> const checks{
    {"operators", "unitarity", 1e-6, check_unitarity},
    {"operators", "adjointness", 1e-5, check_adjointness},
    {"operators", "reduce-expand", 1e-6, check_reduce_expand},
    {"operators", "gradient", 1e-4, check_operator_gradient},
    {"dc-df", "dc-projection", 0, check_dc_projection},
    {"dc-df", "dc-fixed-point", 1e-12, check_dc_fixed_point},
    {"dc-df", "df-affine", 1e-9, check_df_affine},
    {"data", "mask-line-count", 1, check_mask_lines},
    {"data", "determinism", 0, check_determinism},
    {"data", "measurement-consistency", 0, check_measurement_consistency},
    {"score", "antisymmetry", 0.5, check_score_antisymmetry},
    {"score", "dsm-gradient", 1e-3, check_dsm_gradient},
    {"score", "schedule-geometric", 1e-9, check_schedule},
    {"sampler", "determinism", 0, check_sampler_determinism},
    {"sampler", "step-size-law", 0, check_step_size_law},
    {"sampler", "consistency-pull", 0, check_consistency_pull},
    {"sampler", "nan-abort", 0, check_nan_abort},
    {"dm", "residual-identity", 0, check_residual_identity},
    {"dm", "differentiability", 1e-3, check_dm_differentiability},
    {"dm", "cie-dc-unsampled", 0, check_cie_dc},
    {"dm", "ablation-fidelity", 0, check_ablation_fidelity},
    {"gic", "dc-enforcement", 1e-9, check_gic_dc},
    {"gic", "attention-convexity", 1e-10, check_attention_convexity},
    {"gic", "dense-toggle", 0, check_dense_toggle},
    {"gic", "gradient-flow", 1e-3, check_gic_gradient},
    {"gic", "intermediate-count", 0, check_intermediate_count},
    {"loss", "linearity", 1e-12, check_loss_linearity},
    {"loss", "ssim-bounds", 0, check_ssim_bounds},
    {"loss", "checkpoint-round-trip", 0, check_checkpoint},
    {"metrics", "hand-checks", 1e-6, check_metric_hand},
    {"metrics", "evaluate-read-only", 0, check_evaluate_read_only},
    {"metrics", "csv-schema", 0, check_csv_schema},
    {"suite", "determinism", 0, check_suite_determinism},
  };
  return checks;
}

class FaultScope
{
public:
  explicit FaultScope(std::string const &fault)
  {
    if (fault.empty()) { return; }
    if (fault != "fft-scale") { throw ArgumentError("unknown fault '" + fault + "' (expected fft-scale)"); }
    fault::set_fft_scale(1.05);
  }
  ~FaultScope() { fault::set_fft_scale(1.0); }
};

SuiteReport run_checks(std::vector<std::string> const &groups, SuiteOptions const &options, bool include_suite)
{
  for (auto const &g : groups) {
    auto const &all = suite_groups();
    if (std::find(all.begin(), all.end(), g) == all.end()) { throw ArgumentError("unknown check group '" + g + "'"); }
  }
  FaultScope fault(options.fault);
  SuiteReport rep;
  rep.seed = options.seed;
  rep.fault = options.fault;
  Ctx const ctx{options.seed};
  for (auto const &check : registry()) {
    std::string const group = check.group;
    if (!include_suite && group == "suite") { continue; }
    if (!groups.empty() && std::find(groups.begin(), groups.end(), group) == groups.end()) { continue; }
    CheckResult r{group, check.name};
    r.tolerance = check.tolerance;
    auto const t0 = std::chrono::steady_clock::now();
    try {
      auto const o = check.run(ctx);
      r.measured = o.measured;
      r.detail = o.detail;
    } catch (std::exception const &e) {
      r.measured = kInf;
      r.detail = std::string("exception: ") + e.what();
    }
    r.passed = std::isfinite(r.measured) && r.measured <= r.tolerance;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rep.checks.push_back(std::move(r));
  }
  return rep;
}

} // namespace

bool SuiteReport::passed() const { return failed().empty() && !checks.empty(); }

std::vector<std::string> SuiteReport::failed() const
{
  std::vector<std::string> out;
  for (auto const &c : checks) {
    if (!c.passed) { out.push_back(c.id()); }
  }
  return out;
}

nlohmann::json SuiteReport::to_json(bool with_timings) const
{
  auto checks_json = nlohmann::json::array();
  for (auto const &c : checks) {
    nlohmann::json j{{"group", c.group},
                     {"name", c.name},
                     {"passed", c.passed},
                     {"measured", std::isfinite(c.measured) ? nlohmann::json(c.measured) : nlohmann::json("inf")},
                     {"tolerance", c.tolerance},
                     {"detail", c.detail}};
    if (with_timings) { j["seconds"] = c.seconds; }
    checks_json.push_back(j);
  }
  return {{"seed", seed}, {"fault", fault}, {"passed", passed()}, {"failed", failed()}, {"checks", checks_json}};
}

std::string SuiteReport::to_text() const
{
  std::ostringstream os;
  size_t width = 0;
  for (auto const &c : checks) { width = std::max(width, c.id().size()); }
  for (auto const &c : checks) {
    os << (c.passed ? "PASS  " : "FAIL  ") << std::left << std::setw(static_cast<int>(width) + 2) << c.id()
       << "measured " << std::setw(12) << fmt(c.measured) << "tol " << std::setw(10) << fmt(c.tolerance)
       << std::fixed << std::setprecision(2) << c.seconds << " s  " << c.detail << '\n';
    os.unsetf(std::ios::fixed);
  }
  auto const bad = failed();
  os << (checks.size() - bad.size()) << "/" << checks.size() << " checks passed";
  if (!fault.empty()) { os << " (fault injected: " << fault << ")"; }
  os << '\n';
  for (auto const &f : bad) { os << "failed: " << f << '\n'; }
  return os.str();
}

std::vector<std::string> const &suite_groups()
{
  static std::vector<std::string> const g{"operators", "dc-df", "data", "score", "sampler",
                                          "dm",        "gic",   "loss", "metrics", "suite"};
  return g;
}

std::vector<std::string> invariant_names()
{
  std::vector<std::string> out;
  for (auto const &c : registry()) { out.push_back(std::string(c.group) + "/" + c.name); }
  return out;
}

SuiteReport run_property_suite(std::vector<std::string> const &groups, SuiteOptions const &options)
{
  return run_checks(groups, options, true);
}

} // namespace sgm
