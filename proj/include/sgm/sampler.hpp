#pragma once

// Annealed Langevin dynamics with a measurement-consistency term:
//   x+ = x + eta (s(x; sigma_j) + A*(y - A x) / (gamma^2 + sigma^2)) + sqrt(2 eta) xi
// with eta = epsilon * sigma_j^2 / sigma_L^2 and gamma = sigma_j.

#include "sgm/schedule.hpp"
#include "sgm/score_net.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace sgm {

struct SamplerConfig
{
  double epsilon = 1e-4;
  int64_t steps_per_level = 5;
  /// sigma in the consistency denominator; the measurement noise std.
  double measurement_noise_std = 0.0;
  bool use_consistency = true;
  uint64_t seed = 0;

  void validate() const;
  /// steps_per_level scaled by `fraction`, at least one step.
  SamplerConfig with_steps_fraction(double fraction) const;
};

struct LangevinStep
{
  double eta = 0;
  /// 1 / (gamma^2 + sigma^2); zero disables the consistency term.
  double consistency_weight = 0;
};

/// Step parameters at zero-based level j.
LangevinStep step_parameters(SamplerConfig const &config, NoiseSchedule const &schedule, int64_t level);

struct SamplerLogRow
{
  int64_t chain_batch = 0;
  int64_t level = 0; // one-based
  int64_t step = 0;
  double eta = 0;
  double residual_norm = 0; // ||A x - y|| after the step, over the batch
};

/// One update of complex images x [N, H, W]. `xi` is the complex white-noise draw
/// (independent standard normal real and imaginary parts); pass an undefined tensor
/// to omit the noise term. When consistency_weight is zero, y/maps/mask may be undefined.
torch::Tensor langevin_step(torch::Tensor const &x, ScoreFn const &score, torch::Tensor const &y,
                            torch::Tensor const &maps, torch::Tensor const &mask, int64_t level,
                            LangevinStep const &step, torch::Tensor const &xi);

/// Complex standard white noise with the shape/dtype of x.
torch::Tensor complex_white_noise(torch::Tensor const &like, at::Generator &gen);

/// Runs steps_per_level updates at every level and returns the final iterate.
/// `init` defaults to sigma_1 times complex white noise. Throws NumericalError on a
/// non-finite iterate, naming the level and step.
torch::Tensor sample_pgi(ScoreFn const &score, torch::Tensor const &y, torch::Tensor const &maps,
                         torch::Tensor const &mask, NoiseSchedule const &schedule, SamplerConfig const &config,
                         std::vector<SamplerLogRow> *log = nullptr, torch::Tensor init = {});

/// Shape-only variant for unconditional sampling of [N, H, W] images (no consistency term).
torch::Tensor sample_unconditional(ScoreFn const &score, std::vector<int64_t> const &shape,
                                   torch::ScalarType complex_dtype, NoiseSchedule const &schedule,
                                   SamplerConfig const &config, std::vector<SamplerLogRow> *log = nullptr);

} // namespace sgm
