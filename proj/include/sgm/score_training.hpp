#pragma once

// Denoising score matching: for each sample draw a level j uniformly, perturb
// x~ = x + sigma_j z and regress s(x~; sigma_j) onto -(x~ - x) / sigma_j^2 with weight sigma_j^2.

#include "sgm/schedule.hpp"
#include "sgm/score_net.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <vector>

namespace sgm {

/// Noise draw for one DSM evaluation.
struct DsmDraw
{
  torch::Tensor levels; // int64 [N], zero-based
  torch::Tensor noise;  // real [N, 2, H, W], standard normal
};

DsmDraw draw_dsm(torch::Tensor const &clean, NoiseSchedule const &schedule, at::Generator &gen);

/// clean: real [N, 2, H, W]. Mean over the batch of sigma_j^2 * ||s(x~) + z / sigma_j||^2.
torch::Tensor dsm_loss(ScoreFn const &model, torch::Tensor const &clean, DsmDraw const &draw,
                       NoiseSchedule const &schedule);
torch::Tensor dsm_loss(ScoreFn const &model, torch::Tensor const &clean, NoiseSchedule const &schedule, uint64_t seed);

struct ScoreTrainConfig
{
  int64_t epochs = 40;
  int64_t batch_size = 16;
  double learning_rate = 1e-3;
  uint64_t seed = 0;
  /// Progress callback per epoch (epoch, mean loss); may be empty.
  std::function<void(int64_t, double)> on_epoch;
};

struct ScoreTrainLog
{
  std::vector<double> epoch_loss;
  std::vector<double> step_loss;
};

/// Trains in place on complex images [M, H, W]. Throws NumericalError on a non-finite loss.
ScoreTrainLog train_score(ScoreNet &model, torch::Tensor const &images, ScoreTrainConfig const &config);

} // namespace sgm
