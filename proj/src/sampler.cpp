#include "sgm/sampler.hpp"

#include "sgm/errors.hpp"
#include "sgm/operators.hpp"
#include "sgm/phantom.hpp"

#include <cmath>

namespace sgm {

void SamplerConfig::validate() const
{
  if (!(epsilon >= 0)) { throw ArgumentError("sampler: epsilon must be >= 0"); }
  if (steps_per_level < 1) { throw ArgumentError("sampler: steps_per_level must be >= 1"); }
  if (!(measurement_noise_std >= 0)) { throw ArgumentError("sampler: measurement noise std must be >= 0"); }
}

SamplerConfig SamplerConfig::with_steps_fraction(double fraction) const
{
  if (!(fraction > 0 && fraction <= 1)) { throw ArgumentError("steps fraction must lie in (0, 1]"); }
  auto c = *this;
  c.steps_per_level = std::max<int64_t>(1, std::llround(static_cast<double>(steps_per_level) * fraction));
  return c;
}

LangevinStep step_parameters(SamplerConfig const &config, NoiseSchedule const &schedule, int64_t level)
{
  LangevinStep s;
  auto const sj = schedule.sigma(level);
  s.eta = config.epsilon * (sj * sj) / (schedule.sigma_min() * schedule.sigma_min());
  if (config.use_consistency) {
    auto const gamma = sj;
    s.consistency_weight = 1.0 / (gamma * gamma + config.measurement_noise_std * config.measurement_noise_std);
  }
  return s;
}

torch::Tensor complex_white_noise(torch::Tensor const &like, at::Generator &gen)
{
  auto const opts = torch::TensorOptions().dtype(real_dtype_of(like));
  auto const re = torch::randn(like.sizes(), gen, opts);
  auto const im = torch::randn(like.sizes(), gen, opts);
  return torch::complex(re, im);
}

torch::Tensor langevin_step(torch::Tensor const &x, ScoreFn const &score, torch::Tensor const &y,
                            torch::Tensor const &maps, torch::Tensor const &mask, int64_t level,
                            LangevinStep const &step, torch::Tensor const &xi)
{
  if (!(step.eta >= 0)) { throw ArgumentError("langevin_step: eta must be >= 0"); }
  if (!x.is_complex() || x.dim() != 3) { throw ShapeError("langevin_step: expected complex [N, H, W]"); }
  if (xi.defined() && xi.sizes() != x.sizes()) { throw ShapeError("langevin_step: noise shape differs from x"); }
  if (step.eta == 0) { return x; }

  auto const lv = torch::full({x.size(0)}, level, torch::kLong);
  auto drift = from_channels(score(to_channels(x), lv));
  if (step.consistency_weight != 0) {
    drift = drift + step.consistency_weight * adjoint(y - forward(x, maps, mask), maps, mask);
  }
  auto next = x + step.eta * drift;
  if (xi.defined()) { next = next + std::sqrt(2.0 * step.eta) * xi; }
  return next;
}

namespace {

torch::Tensor run_chain(ScoreFn const &score, torch::Tensor x, torch::Tensor const &y, torch::Tensor const &maps,
                        torch::Tensor const &mask, NoiseSchedule const &schedule, SamplerConfig const &config,
                        at::Generator &gen, std::vector<SamplerLogRow> *log)
{
  torch::NoGradGuard guard;
  bool const consistent = config.use_consistency && y.defined();
  for (int64_t j = 0; j < schedule.levels(); ++j) {
    auto params = step_parameters(config, schedule, j);
    if (!consistent) { params.consistency_weight = 0; }
    for (int64_t t = 0; t < config.steps_per_level; ++t) {
      auto const xi = complex_white_noise(x, gen);
      x = langevin_step(x, score, y, maps, mask, j, params, xi);
      if (!torch::isfinite(torch::view_as_real(x)).all().item<bool>()) {
        throw NumericalError("sampler: non-finite iterate at level " + std::to_string(j + 1) + ", step " +
                             std::to_string(t));
      }
      if (log) {
        SamplerLogRow row;
        row.level = j + 1;
        row.step = t;
        row.eta = params.eta;
        row.residual_norm = consistent ? (forward(x, maps, mask) - y).abs().square().sum().sqrt().item<double>() : 0.0;
        log->push_back(row);
      }
    }
  }
  return x;
}

} // namespace

torch::Tensor sample_pgi(ScoreFn const &score, torch::Tensor const &y, torch::Tensor const &maps,
                         torch::Tensor const &mask, NoiseSchedule const &schedule, SamplerConfig const &config,
                         std::vector<SamplerLogRow> *log, torch::Tensor init)
{
  config.validate();
  if (!y.defined() || y.dim() != 4) { throw ShapeError("sample_pgi: expected measurements [N, C, H, W]"); }
  auto gen = make_generator(config.seed);
  torch::Tensor x = init;
  if (!x.defined()) {
    auto const like = torch::empty({y.size(0), y.size(2), y.size(3)}, y.options());
    x = schedule.sigma_max() * complex_white_noise(like, gen);
  } else if (x.sizes() != torch::IntArrayRef({y.size(0), y.size(2), y.size(3)})) {
    throw ShapeError("sample_pgi: initial image does not match measurements");
  }
  return run_chain(score, x, y, maps, mask, schedule, config, gen, log);
}

torch::Tensor sample_unconditional(ScoreFn const &score, std::vector<int64_t> const &shape,
                                   torch::ScalarType complex_dtype, NoiseSchedule const &schedule,
                                   SamplerConfig const &config, std::vector<SamplerLogRow> *log)
{
  config.validate();
  if (shape.size() != 3) { throw ShapeError("sample_unconditional: expected [N, H, W]"); }
  auto gen = make_generator(config.seed);
  auto const like = torch::empty(shape, torch::TensorOptions().dtype(complex_dtype));
  auto x = schedule.sigma_max() * complex_white_noise(like, gen);
  return run_chain(score, x, {}, {}, {}, schedule, config, gen, log);
}

} // namespace sgm
