#include "sgm/score_net.hpp"

#include "sgm/errors.hpp"
#include "sgm/operators.hpp"

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace sgm {

namespace {

nn::Conv2d conv3(int64_t in, int64_t out, int64_t stride = 1)
{
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

nn::Conv2d conv1(int64_t in, int64_t out, int64_t stride = 1)
{
  return nn::Conv2d(nn::Conv2dOptions(in, out, 1).stride(stride));
}

torch::Tensor act(torch::Tensor const &x) { return F::elu(x); }

torch::Tensor level_tensor(int64_t level, int64_t levels, int64_t batch)
{
  if (level < 1 || level > levels) {
    throw ArgumentError("noise level " + std::to_string(level) + " outside [1, " + std::to_string(levels) + "]");
  }
  return torch::full({batch}, level - 1, torch::kLong);
}

torch::Tensor complex_batch(torch::Tensor const &x)
{
  if (!x.is_complex()) { throw ShapeError("score: expected complex images"); }
  return x.dim() == 2 ? x.unsqueeze(0) : x;
}

} // namespace

ScoreModelConfig ScoreModelConfig::desk() { return {}; }

ScoreModelConfig ScoreModelConfig::large()
{
  ScoreModelConfig c;
  c.widths = {128, 128, 256, 256, 256, 512};
  return c;
}

void ScoreModelConfig::validate() const
{
  if (widths.size() < 4) { throw ArgumentError("score model needs at least four levels"); }
  if (downsample.size() != widths.size()) { throw ArgumentError("score model: downsample flags per level"); }
  if (downsample.front()) { throw ArgumentError("score model: first level runs at full resolution"); }
  for (auto w : widths) {
    if (w < 1) { throw ArgumentError("score model widths must be positive"); }
  }
  if (noise_levels < 2) { throw ArgumentError("score model needs >= 2 noise levels"); }
  if (channels != 2) { throw ArgumentError("score model operates on two-channel complex images"); }
}

int64_t ScoreModelConfig::stride() const
{
  int64_t s = 1;
  for (bool d : downsample) { s *= d ? 2 : 1; }
  return s;
}

nlohmann::json ScoreModelConfig::to_json() const
{
  return {{"widths", widths}, {"downsample", downsample}, {"noise_levels", noise_levels}, {"channels", channels}};
}

ScoreModelConfig ScoreModelConfig::from_json(nlohmann::json const &j)
{
  ScoreModelConfig c;
  c.widths = j.at("widths").get<std::vector<int64_t>>();
  c.downsample = j.at("downsample").get<std::vector<bool>>();
  c.noise_levels = j.at("noise_levels").get<int64_t>();
  c.channels = j.value("channels", int64_t{2});
  c.validate();
  return c;
}

ResBlockImpl::ResBlockImpl(int64_t in, int64_t out, bool down)
{
  int64_t const s = down ? 2 : 1;
  conv1_ = register_module("conv1", conv3(in, out, s));
  conv2_ = register_module("conv2", conv3(out, out));
  if (in != out || down) { skip_ = register_module("skip", conv1(in, out, s)); }
}

torch::Tensor ResBlockImpl::forward(torch::Tensor const &x)
{
  auto h = conv2_->forward(act(conv1_->forward(act(x))));
  auto const s = skip_ ? skip_->forward(x) : x;
  return h + s;
}

RefineBlockImpl::RefineBlockImpl(int64_t enc, int64_t coarser, int64_t out, int64_t noise_levels)
{
  enc_conv_ = register_module("enc", conv3(enc, out));
  if (coarser > 0) { coarse_conv_ = register_module("coarse", conv1(coarser, out)); }
  rcu1_ = register_module("rcu1", conv3(out, out));
  rcu2_ = register_module("rcu2", conv3(out, out));
  embed_ = register_module("embed", nn::Embedding(noise_levels, out));
  nn::init::zeros_(embed_->weight);
}

torch::Tensor RefineBlockImpl::forward(torch::Tensor const &enc, torch::Tensor const &coarser, torch::Tensor const &level)
{
  auto fused = enc_conv_->forward(act(enc));
  if (coarse_conv_) {
    auto c = coarse_conv_->forward(coarser);
    if (c.size(-1) != fused.size(-1)) {
      c = F::interpolate(c, F::InterpolateFuncOptions()
                              .size(std::vector<int64_t>{fused.size(-2), fused.size(-1)})
                              .mode(torch::kNearest));
    }
    fused = fused + c;
  }
  fused = fused + embed_->forward(level).unsqueeze(-1).unsqueeze(-1);
  return fused + rcu2_->forward(act(rcu1_->forward(act(fused))));
}

ScoreNetImpl::ScoreNetImpl(ScoreModelConfig config, NoiseSchedule schedule)
  : config_(std::move(config))
  , schedule_(std::move(schedule))
{
  config_.validate();
  if (schedule_.levels() != config_.noise_levels) {
    throw ArgumentError("score model: schedule has " + std::to_string(schedule_.levels()) + " levels, config " +
                        std::to_string(config_.noise_levels));
  }
  auto const &w = config_.widths;
  auto const n = config_.depth();
  head_ = register_module("head", conv3(config_.channels, w[0]));
  encoder_ = register_module("encoder", nn::ModuleList());
  decoder_ = register_module("decoder", nn::ModuleList());
  for (int64_t l = 0; l < n; ++l) {
    auto const in = l == 0 ? w[0] : w[static_cast<size_t>(l - 1)];
    encoder_->push_back(ResBlock(in, w[static_cast<size_t>(l)], config_.downsample[static_cast<size_t>(l)]));
  }
  // decoder_[l] refines level l; evaluated deepest first.
  for (int64_t l = 0; l < n; ++l) {
    auto const coarser = l + 1 < n ? w[static_cast<size_t>(l + 1)] : 0;
    decoder_->push_back(RefineBlock(w[static_cast<size_t>(l)], coarser, w[static_cast<size_t>(l)], config_.noise_levels));
  }
  out_ = register_module("out", conv3(w[0], config_.channels));
  sigmas_ = register_buffer("sigmas", schedule_.tensor(torch::kFloat));
}

ScoreTaps ScoreNetImpl::forward_taps(torch::Tensor const &x, torch::Tensor const &level)
{
  if (x.dim() != 4 || x.size(1) != config_.channels) {
    throw ShapeError("score model expects [N, 2, H, W] input");
  }
  auto const st = config_.stride();
  if (x.size(2) % st != 0 || x.size(3) % st != 0) {
    throw ShapeError("score model input must be divisible by " + std::to_string(st));
  }
  if (level.dim() != 1 || level.size(0) != x.size(0)) { throw ShapeError("score model: one level per sample"); }
  if (level.min().item<int64_t>() < 0 || level.max().item<int64_t>() >= config_.noise_levels) {
    throw ArgumentError("score model: level index out of range");
  }

  auto const n = config_.depth();
  std::vector<torch::Tensor> enc;
  auto h = head_->forward(x);
  for (int64_t l = 0; l < n; ++l) {
    h = encoder_[static_cast<size_t>(l)]->as<ResBlock>()->forward(h);
    enc.push_back(h);
  }
  ScoreTaps taps;
  torch::Tensor d;
  for (int64_t l = n - 1; l >= 0; --l) {
    d = decoder_[static_cast<size_t>(l)]->as<RefineBlock>()->forward(enc[static_cast<size_t>(l)], d, level);
    taps.blocks.push_back(d);
  }
  auto const sigma = sigmas_.to(x.scalar_type()).index_select(0, level).view({-1, 1, 1, 1});
  taps.output = out_->forward(act(d)) / sigma;
  return taps;
}

torch::Tensor ScoreNetImpl::forward(torch::Tensor const &x, torch::Tensor const &level)
{
  return forward_taps(x, level).output;
}

void ScoreNetImpl::zero_output()
{
  torch::NoGradGuard guard;
  out_->weight.zero_();
  out_->bias.zero_();
}

torch::Tensor score(ScoreNet &model, torch::Tensor const &x, int64_t level)
{
  auto const xb = complex_batch(x);
  auto const lv = level_tensor(level, model->config().noise_levels, xb.size(0));
  auto const out = from_channels(model->forward(to_channels(xb), lv));
  return x.dim() == 2 ? out.squeeze(0) : out;
}

ScoreTaps taps(ScoreNet &model, torch::Tensor const &x, int64_t level)
{
  auto const xb = complex_batch(x);
  auto const lv = level_tensor(level, model->config().noise_levels, xb.size(0));
  return model->forward_taps(to_channels(xb), lv);
}

ScoreNet clone_score_net(ScoreNet const &model)
{
  ScoreNet copy(model->config(), model->schedule());
  if (auto const &ps = model->parameters(); !ps.empty()) { copy->to(ps.front().scalar_type()); }
  torch::NoGradGuard guard;
  auto src = model->named_parameters(true);
  for (auto &p : copy->named_parameters(true)) { p.value().copy_(src[p.key()]); }
  auto srcb = model->named_buffers(true);
  for (auto &b : copy->named_buffers(true)) { b.value().copy_(srcb[b.key()]); }
  copy->train(model->is_training());
  return copy;
}

ScoreFn as_score_fn(ScoreNet model)
{
  return [model](torch::Tensor const &x, torch::Tensor const &level) mutable { return model->forward(x, level); };
}

} // namespace sgm
