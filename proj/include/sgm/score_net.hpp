#pragma once

// Noise-conditional score network s(x; sigma_j).
//
// Six-level U shape: residual encoder blocks, RefineNet-style decoder blocks. The first
// three levels run at full resolution and each deeper level halves the grid, so on a
// 32x32 input the decoder blocks sit at 32, 32, 32, 16, 8, 4. Noise-level conditioning
// is a learned per-level bias added in every decoder block, and the output is divided
// by sigma_j.

#include "sgm/schedule.hpp"

#include "json.hpp"

#include <torch/torch.h>

#include <functional>
#include <string>
#include <vector>

namespace sgm {

struct ScoreModelConfig
{
  std::vector<int64_t> widths{16, 16, 32, 32, 32, 64};
  /// Levels whose encoder block halves the resolution.
  std::vector<bool> downsample{false, false, false, true, true, true};
  int64_t noise_levels = 10;
  int64_t channels = 2;

  static ScoreModelConfig desk();
  /// Full-size channel widths.
  static ScoreModelConfig large();
  void validate() const;
  int64_t depth() const { return static_cast<int64_t>(widths.size()); }
  /// Total resolution reduction at the deepest level.
  int64_t stride() const;

  nlohmann::json to_json() const;
  static ScoreModelConfig from_json(nlohmann::json const &j);
};

class ResBlockImpl : public torch::nn::Module
{
public:
  ResBlockImpl(int64_t in, int64_t out, bool down);
  torch::Tensor forward(torch::Tensor const &x);

private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, skip_{nullptr};
};
TORCH_MODULE(ResBlock);

/// Fuses the encoder feature at this level with the coarser decoder output, adds the
/// level embedding and applies a residual conv unit.
class RefineBlockImpl : public torch::nn::Module
{
public:
  RefineBlockImpl(int64_t enc, int64_t coarser, int64_t out, int64_t noise_levels);
  torch::Tensor forward(torch::Tensor const &enc, torch::Tensor const &coarser, torch::Tensor const &level);

private:
  torch::nn::Conv2d enc_conv_{nullptr}, coarse_conv_{nullptr}, rcu1_{nullptr}, rcu2_{nullptr};
  torch::nn::Embedding embed_{nullptr};
};
TORCH_MODULE(RefineBlock);

/// Decoder block outputs, deepest first. With the default layout on 32x32 the sizes are
/// 4, 8, 16, 32, 32, 32; the first four are the multi-level features the SIE taps, the
/// last two are the shallower full-resolution blocks.
struct ScoreTaps
{
  std::vector<torch::Tensor> blocks;
  torch::Tensor output; // [N, 2, H, W], already divided by sigma
};

class ScoreNetImpl : public torch::nn::Module
{
public:
  ScoreNetImpl(ScoreModelConfig config, NoiseSchedule schedule);

  /// x: real [N, 2, H, W]; level: int64 [N] of zero-based indices.
  torch::Tensor forward(torch::Tensor const &x, torch::Tensor const &level);
  ScoreTaps forward_taps(torch::Tensor const &x, torch::Tensor const &level);

  ScoreModelConfig const &config() const { return config_; }
  NoiseSchedule const &schedule() const { return schedule_; }
  /// Zeroes the output convolution so the score field vanishes.
  void zero_output();

private:
  ScoreModelConfig config_;
  NoiseSchedule schedule_;
  torch::nn::Conv2d head_{nullptr}, out_{nullptr};
  torch::nn::ModuleList encoder_, decoder_;
  torch::Tensor sigmas_;
};
TORCH_MODULE(ScoreNet);

/// Score of a batch of complex images at one level. level is 1-based (1 <= j <= L).
torch::Tensor score(ScoreNet &model, torch::Tensor const &x, int64_t level);
/// Decoder taps for complex images at a 1-based level.
ScoreTaps taps(ScoreNet &model, torch::Tensor const &x, int64_t level);

/// Deep copy of parameters and buffers into a fresh module.
ScoreNet clone_score_net(ScoreNet const &model);

/// Any score field: real [N, 2, H, W] and zero-based level indices [N] -> real [N, 2, H, W].
using ScoreFn = std::function<torch::Tensor(torch::Tensor const &, torch::Tensor const &)>;
ScoreFn as_score_fn(ScoreNet model);

} // namespace sgm
