#include "sgm/score_training.hpp"

#include "sgm/errors.hpp"
#include "sgm/operators.hpp"
#include "sgm/phantom.hpp"

#include <cmath>

namespace sgm {

DsmDraw draw_dsm(torch::Tensor const &clean, NoiseSchedule const &schedule, at::Generator &gen)
{
  if (clean.dim() != 4 || clean.size(0) == 0) { throw ArgumentError("dsm: expected a nonempty [N, 2, H, W] batch"); }
  DsmDraw d;
  d.levels = torch::randint(0, schedule.levels(), {clean.size(0)}, gen, torch::kLong);
  d.noise = torch::randn(clean.sizes(), gen, clean.options());
  return d;
}

torch::Tensor dsm_loss(ScoreFn const &model, torch::Tensor const &clean, DsmDraw const &draw,
                       NoiseSchedule const &schedule)
{
  if (clean.dim() != 4 || clean.size(0) == 0) { throw ArgumentError("dsm: expected a nonempty [N, 2, H, W] batch"); }
  auto const sigma = schedule.tensor(clean.scalar_type()).index_select(0, draw.levels).view({-1, 1, 1, 1});
  auto const perturbed = clean + sigma * draw.noise;
  auto const target = -(perturbed - clean) / sigma.square();
  auto const s = model(perturbed, draw.levels);
  auto const per_sample = (sigma.square() * (s - target).square()).sum({1, 2, 3});
  return per_sample.mean();
}

torch::Tensor dsm_loss(ScoreFn const &model, torch::Tensor const &clean, NoiseSchedule const &schedule, uint64_t seed)
{
  auto gen = make_generator(seed);
  return dsm_loss(model, clean, draw_dsm(clean, schedule, gen), schedule);
}

ScoreTrainLog train_score(ScoreNet &model, torch::Tensor const &images, ScoreTrainConfig const &config)
{
  if (images.dim() != 3 || images.size(0) == 0) { throw ArgumentError("train_score: empty dataset"); }
  if (config.epochs < 1 || config.batch_size < 1 || !(config.learning_rate > 0)) {
    throw ArgumentError("train_score: epochs, batch size and learning rate must be positive");
  }
  auto const data = to_channels(images).to(model->parameters().front().scalar_type());
  auto const m = data.size(0);
  auto gen = make_generator(config.seed);
  torch::optim::Adam opt(model->parameters(), torch::optim::AdamOptions(config.learning_rate));
  auto fn = as_score_fn(model);
  model->train();

  ScoreTrainLog log;
  for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    auto const perm = torch::randperm(m, gen, torch::kLong);
    double sum = 0;
    int64_t steps = 0;
    for (int64_t start = 0; start < m; start += config.batch_size) {
      auto const idx = perm.slice(0, start, std::min(m, start + config.batch_size));
      auto const batch = data.index_select(0, idx);
      auto const draw = draw_dsm(batch, model->schedule(), gen);
      opt.zero_grad();
      auto loss = dsm_loss(fn, batch, draw, model->schedule());
      auto const value = loss.item<double>();
      if (!std::isfinite(value)) {
        throw NumericalError("train_score: non-finite DSM loss at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(steps));
      }
      loss.backward();
      opt.step();
      log.step_loss.push_back(value);
      sum += value;
      ++steps;
    }
    log.epoch_loss.push_back(sum / static_cast<double>(steps));
    if (config.on_epoch) { config.on_epoch(epoch, log.epoch_loss.back()); }
  }
  model->eval();
  return log;
}

} // namespace sgm
