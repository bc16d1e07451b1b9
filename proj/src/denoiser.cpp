#include "sgm/denoiser.hpp"

#include "sgm/errors.hpp"
#include "sgm/operators.hpp"

namespace nn = torch::nn;

namespace sgm {

namespace {

torch::Tensor batched_image(torch::Tensor const &x, char const *what)
{
  if (!x.defined() || !x.is_complex() || x.dim() != 3) {
    throw ShapeError(std::string(what) + ": expected complex [N, H, W]");
  }
  return x;
}

} // namespace

DenoiserConfig DenoiserConfig::desk(int64_t coils)
{
  DenoiserConfig c;
  c.coils = coils;
  return c;
}

DenoiserConfig DenoiserConfig::large(int64_t coils)
{
  DenoiserConfig c;
  c.coils = coils;
  c.cie_widths = {32, 64, 128, 256};
  c.sie_reduced = {16, 32, 64, 128};
  c.fusion_widths = {32, 64, 128, 256};
  return c;
}

void DenoiserConfig::validate() const
{
  if (coils < 1) { throw ArgumentError("denoiser: coil count must be >= 1"); }
  if (cie_widths.empty() || fusion_widths.empty()) { throw ArgumentError("denoiser: empty U-Net widths"); }
  if (sie_reduced.size() != 4) { throw ArgumentError("denoiser: the SIE reduces exactly four taps"); }
  for (size_t i = 0; i < sie_reduced.size(); ++i) {
    if (sie_reduced[i] < 2 || sie_reduced[i] % 2 != 0) {
      throw ArgumentError("denoiser: SIE reduced widths must be even and >= 2");
    }
    if (i > 0 && sie_reduced[i] != 2 * sie_reduced[i - 1]) {
      throw ArgumentError("denoiser: SIE reduced widths must double from shallow to deep");
    }
  }
  if (sie_level < 0) { throw ArgumentError("denoiser: sie_level must be >= 0"); }
  if (!(mu_init > 0)) { throw ArgumentError("denoiser: mu_init must be > 0"); }
}

nlohmann::json DenoiserConfig::to_json() const
{
  return {{"coils", coils},
          {"cie_widths", cie_widths},
          {"sie_reduced", sie_reduced},
          {"fusion_widths", fusion_widths},
          {"trainable_psn", trainable_psn},
          {"sie_level", sie_level},
          {"mu_init", mu_init},
          {"use_cie", use_cie},
          {"use_sie", use_sie}};
}

DenoiserConfig DenoiserConfig::from_json(nlohmann::json const &j)
{
  DenoiserConfig c;
  c.coils = j.at("coils").get<int64_t>();
  c.cie_widths = j.at("cie_widths").get<std::vector<int64_t>>();
  c.sie_reduced = j.at("sie_reduced").get<std::vector<int64_t>>();
  c.fusion_widths = j.at("fusion_widths").get<std::vector<int64_t>>();
  c.trainable_psn = j.value("trainable_psn", true);
  c.sie_level = j.value("sie_level", int64_t{0});
  c.mu_init = j.value("mu_init", 10.0);
  c.use_cie = j.value("use_cie", true);
  c.use_sie = j.value("use_sie", true);
  c.validate();
  return c;
}

SieChannelTrace sie_channel_trace(std::vector<int64_t> const &reduced)
{
  SieChannelTrace t;
  auto h = reduced.back();
  for (size_t i = reduced.size() - 1; i > 0; --i) {
    auto const up = h / 2;
    t.dbr_out.push_back(up);
    t.concat.push_back(up + reduced[i - 1]);
    h = (up + reduced[i - 1]) / 2;
    t.cbr_out.push_back(h);
  }
  t.final_in = h;
  return t;
}

CieImpl::CieImpl(int64_t coils, std::vector<int64_t> const &widths, double mu_init)
  : coils_(coils)
{
  UNetConfig uc;
  uc.in_channels = 2 * coils;
  uc.out_channels = 2 * coils;
  uc.widths = widths;
  net_ = register_module("net", UNet(uc));
  raw_mu_ = register_parameter("raw_mu", torch::full({}, positive_inverse(mu_init)));
}

torch::Tensor CieImpl::kspace(torch::Tensor const &x, torch::Tensor const &y, torch::Tensor const &maps,
                              torch::Tensor const &mask, bool apply_dc)
{
  batched_image(x, "cie");
  auto const yt = fft2c(expand(x, maps));
  if (yt.size(1) != coils_) {
    throw ShapeError("cie: configured for " + std::to_string(coils_) + " coils, got " + std::to_string(yt.size(1)));
  }
  if (identity_hard_) { return apply_dc ? data_consistency(yt, y, mask, DcWeight::hard()) : yt; }
  auto const feat = coils_to_channels(yt);
  auto const yc = channels_to_coils(feat + net_->forward(feat));
  return apply_dc ? data_consistency(yc, y, mask, mu()) : yc;
}

torch::Tensor CieImpl::forward(torch::Tensor const &x, torch::Tensor const &y, torch::Tensor const &maps,
                               torch::Tensor const &mask)
{
  return reduce(ifft2c(kspace(x, y, maps, mask)), maps);
}

ConvBnReluImpl::ConvBnReluImpl(int64_t in, int64_t out, bool upsample)
{
  if (upsample) {
    deconv_ = register_module("deconv", nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 2).stride(2)));
  } else {
    conv_ = register_module("conv", nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1)));
  }
  bn_ = register_module("bn", nn::BatchNorm2d(out));
}

torch::Tensor ConvBnReluImpl::forward(torch::Tensor const &x)
{
  auto const h = deconv_ ? deconv_->forward(x) : conv_->forward(x);
  return torch::relu(bn_->forward(h));
}

SieImpl::SieImpl(ScoreNet psn, std::vector<int64_t> const &reduced, bool trainable_psn, int64_t level)
  : psn_(std::move(psn))
  , trainable_(trainable_psn)
  , level_(level)
{
  auto const &widths = psn_->config().widths;
  if (widths.size() < 4) { throw ArgumentError("sie: score network has fewer than four decoder blocks"); }
  if (reduced.size() != 4) { throw ArgumentError("sie: exactly four reduced widths"); }
  if (level_ < 0 || level_ > psn_->config().noise_levels) { throw ArgumentError("sie: level out of range"); }
  register_module("psn", psn_);
  if (!trainable_) {
    for (auto &p : psn_->parameters()) { p.set_requires_grad(false); }
  }
  reduce_ = register_module("reduce", nn::ModuleList());
  dbr_ = register_module("dbr", nn::ModuleList());
  cbr_ = register_module("cbr", nn::ModuleList());
  // Taps arrive deepest first: tap t has widths[depth - 1 - t] channels.
  auto const depth = widths.size();
  for (size_t i = 0; i < 4; ++i) {
    auto const tap_width = widths[depth - 4 + i];
    reduce_->push_back(nn::Conv2d(nn::Conv2dOptions(tap_width, reduced[i], 1)));
  }
  auto const trace = sie_channel_trace(reduced);
  auto h = reduced.back();
  for (size_t s = 0; s < trace.dbr_out.size(); ++s) {
    dbr_->push_back(ConvBnRelu(h, trace.dbr_out[s], true));
    cbr_->push_back(ConvBnRelu(trace.concat[s], trace.cbr_out[s], false));
    h = trace.cbr_out[s];
  }
  final_ = register_module("final", nn::Conv2d(nn::Conv2dOptions(trace.final_in, 2, 1)));
}

torch::Tensor SieImpl::forward(torch::Tensor const &x)
{
  batched_image(x, "sie");
  auto const levels = psn_->config().noise_levels;
  auto const lv = torch::full({x.size(0)}, (level_ == 0 ? levels : level_) - 1, torch::kLong);
  auto const t = psn_->forward_taps(to_channels(x), lv);
  // Deepest four blocks, reordered shallow to deep to line up with reduce_.
  std::vector<torch::Tensor> feats;
  for (size_t i = 0; i < 4; ++i) { feats.push_back(t.blocks[3 - i]); }
  for (size_t i = 0; i + 1 < 4; ++i) {
    if (feats[i].size(-1) != 2 * feats[i + 1].size(-1) || feats[i].size(-2) != 2 * feats[i + 1].size(-2)) {
      throw ShapeError("sie: taps must halve in resolution with depth");
    }
  }
  auto h = reduce_[3]->as<nn::Conv2d>()->forward(feats[3]);
  for (size_t s = 0; s < 3; ++s) {
    auto const skip = reduce_[2 - s]->as<nn::Conv2d>()->forward(feats[2 - s]);
    h = dbr_[s]->as<ConvBnRelu>()->forward(h);
    h = cbr_[s]->as<ConvBnRelu>()->forward(torch::cat({h, skip}, 1));
  }
  auto out = final_->forward(h);
  if (out.size(-1) != x.size(-1) || out.size(-2) != x.size(-2)) {
    throw ShapeError("sie: shallowest tap does not match the input grid");
  }
  return from_channels(out);
}

DenoisingModuleImpl::DenoisingModuleImpl(DenoiserConfig config, ScoreNet const &psn)
  : config_(std::move(config))
{
  config_.validate();
  cie_ = register_module("cie", Cie(config_.coils, config_.cie_widths, config_.mu_init));
  sie_ = register_module(
    "sie", Sie(clone_score_net(psn), config_.sie_reduced, config_.trainable_psn, config_.sie_level));
  UNetConfig fc;
  fc.in_channels = 6;
  fc.out_channels = 2;
  fc.widths = config_.fusion_widths;
  fusion_ = register_module("fusion", UNet(fc));
}

DenoiserOutput DenoisingModuleImpl::forward(torch::Tensor const &x_t, torch::Tensor const &y,
                                            torch::Tensor const &maps, torch::Tensor const &mask)
{
  batched_image(x_t, "denoiser");
  DenoiserOutput o;
  o.x_d = config_.use_cie ? cie_->forward(x_t, y, maps, mask) : torch::zeros_like(x_t);
  o.x_p = config_.use_sie ? sie_->forward(x_t) : torch::zeros_like(x_t);
  o.x_t0 = denoise(fusion_, x_t, o.x_d, o.x_p);
  return o;
}

torch::Tensor cie(Cie &module, torch::Tensor const &x_t, torch::Tensor const &y, torch::Tensor const &maps,
                  torch::Tensor const &mask)
{
  return module->forward(x_t, y, maps, mask);
}

torch::Tensor sie(Sie &module, torch::Tensor const &x_t) { return module->forward(x_t); }

torch::Tensor denoise(UNet &fusion, torch::Tensor const &x_t, torch::Tensor const &x_d, torch::Tensor const &x_p)
{
  batched_image(x_t, "denoise");
  if (x_d.sizes() != x_t.sizes() || x_p.sizes() != x_t.sizes()) {
    throw ShapeError("denoise: x_T, x_d and x_p must share a shape");
  }
  auto const in = torch::cat({to_channels(x_t), to_channels(x_p), to_channels(x_d)}, 1);
  return x_t + from_channels(fusion->forward(in));
}

} // namespace sgm
