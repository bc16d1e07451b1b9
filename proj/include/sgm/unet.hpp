#pragma once

#include "json.hpp"

#include <torch/torch.h>

#include <vector>

namespace sgm {

struct UNetConfig
{
  int64_t in_channels = 2;
  int64_t out_channels = 2;
  std::vector<int64_t> widths{16, 32, 64, 128};
  /// Start with a zero output layer so the block initially contributes nothing.
  bool zero_output = true;

  int64_t levels() const { return static_cast<int64_t>(widths.size()); }
  /// Required divisor of the spatial extent.
  int64_t stride() const { return int64_t{1} << (levels() - 1); }
};

/// Plain U-Net: two 3x3 conv + LeakyReLU per level, average-pool down, transposed-conv up,
/// skip concatenation, 1x1 output head.
class UNetImpl : public torch::nn::Module
{
public:
  explicit UNetImpl(UNetConfig config);
  torch::Tensor forward(torch::Tensor const &x);
  UNetConfig const &config() const { return config_; }

private:
  UNetConfig config_;
  torch::nn::ModuleList down_, up_, merge_;
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(UNet);

nlohmann::json to_json(UNetConfig const &c);

} // namespace sgm
