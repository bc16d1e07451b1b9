#include "sgm/unet.hpp"

#include "sgm/errors.hpp"

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace sgm {

namespace {

nn::Sequential double_conv(int64_t in, int64_t out)
{
  return nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1)),
                        nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)),
                        nn::Conv2d(nn::Conv2dOptions(out, out, 3).padding(1)),
                        nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
}

} // namespace

UNetImpl::UNetImpl(UNetConfig config)
  : config_(std::move(config))
{
  if (config_.widths.empty() || config_.in_channels < 1 || config_.out_channels < 1) {
    throw ArgumentError("unet: needs at least one level and positive channel counts");
  }
  auto const &w = config_.widths;
  down_ = register_module("down", nn::ModuleList());
  up_ = register_module("up", nn::ModuleList());
  merge_ = register_module("merge", nn::ModuleList());
  for (size_t l = 0; l < w.size(); ++l) {
    down_->push_back(double_conv(l == 0 ? config_.in_channels : w[l - 1], w[l]));
  }
  for (size_t l = w.size() - 1; l > 0; --l) {
    up_->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(w[l], w[l - 1], 2).stride(2)));
    merge_->push_back(double_conv(2 * w[l - 1], w[l - 1]));
  }
  head_ = register_module("head", nn::Conv2d(nn::Conv2dOptions(w[0], config_.out_channels, 1)));
  if (config_.zero_output) {
    nn::init::zeros_(head_->weight);
    nn::init::zeros_(head_->bias);
  }
}

torch::Tensor UNetImpl::forward(torch::Tensor const &x)
{
  if (x.dim() != 4 || x.size(1) != config_.in_channels) {
    throw ShapeError("unet: expected [N, " + std::to_string(config_.in_channels) + ", H, W] input");
  }
  auto const st = config_.stride();
  if (x.size(2) % st != 0 || x.size(3) % st != 0) {
    throw ShapeError("unet: spatial size must be divisible by " + std::to_string(st));
  }
  std::vector<torch::Tensor> skips;
  auto h = x;
  auto const n = down_->size();
  for (size_t l = 0; l < n; ++l) {
    if (l > 0) { h = F::avg_pool2d(h, F::AvgPool2dFuncOptions(2)); }
    h = down_[l]->as<nn::Sequential>()->forward(h);
    skips.push_back(h);
  }
  for (size_t u = 0; u + 1 < n; ++u) {
    h = up_[u]->as<nn::ConvTranspose2d>()->forward(h);
    h = torch::cat({h, skips[n - 2 - u]}, 1);
    h = merge_[u]->as<nn::Sequential>()->forward(h);
  }
  return head_->forward(h);
}

nlohmann::json to_json(UNetConfig const &c)
{
  return {{"in", c.in_channels}, {"out", c.out_channels}, {"widths", c.widths}, {"zero_output", c.zero_output}};
}

} // namespace sgm
