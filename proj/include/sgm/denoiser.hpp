#pragma once

// Denoising module: turns a preliminary guidance image x_T into x_T^0 = x_T + N_d{x_T, x_p, x_d}.
//
//   CIE  k-space U-Net on fft2c(expand(x_T)) with the coils folded into 2C channels,
//        followed by a learnable data-consistency block and coil reduction -> x_d.
//   SIE  a trainable copy of the score network evaluated on x_T; its four deepest decoder
//        blocks are reduced by 1x1 convolutions and merged coarse-to-fine by
//        deconv (DBR) / conv (CBR) blocks that each halve the channels -> x_p.
//   N_d  fusion U-Net on the channel concatenation, added to x_T.

#include "sgm/operators.hpp"
#include "sgm/score_net.hpp"
#include "sgm/unet.hpp"

#include "json.hpp"

#include <torch/torch.h>

#include <vector>

namespace sgm {

struct DenoiserConfig
{
  int64_t coils = 4;
  std::vector<int64_t> cie_widths{8, 16, 32, 64};
  /// Output channels of the 1x1 reductions, shallowest tap first.
  std::vector<int64_t> sie_reduced{4, 8, 16, 32};
  std::vector<int64_t> fusion_widths{8, 16, 32, 64};
  bool trainable_psn = true;
  /// One-based noise level used when evaluating the PSN copy; 0 selects the finest level.
  int64_t sie_level = 0;
  double mu_init = 10.0;
  /// Ablation switches: absent inputs are zero-masked at the concatenation.
  bool use_cie = true;
  bool use_sie = true;

  static DenoiserConfig desk(int64_t coils);
  /// Full-size filter counts (15 coils -> 30 CIE channels).
  static DenoiserConfig large(int64_t coils = 15);
  void validate() const;

  nlohmann::json to_json() const;
  static DenoiserConfig from_json(nlohmann::json const &j);
};

/// Channel counts through the SIE decoder: for each merge step the DBR output, the
/// concatenated width and the CBR output, then the final 1x1 input width.
struct SieChannelTrace
{
  std::vector<int64_t> dbr_out, concat, cbr_out;
  int64_t final_in = 0;
};
SieChannelTrace sie_channel_trace(std::vector<int64_t> const &reduced);

class CieImpl : public torch::nn::Module
{
public:
  CieImpl(int64_t coils, std::vector<int64_t> const &widths, double mu_init);
  /// x_T complex [N, H, W] -> x_d complex [N, H, W].
  torch::Tensor forward(torch::Tensor const &x, torch::Tensor const &y, torch::Tensor const &maps,
                        torch::Tensor const &mask);
  /// k-space before reduction, with or without the DC block, for inspection.
  torch::Tensor kspace(torch::Tensor const &x, torch::Tensor const &y, torch::Tensor const &maps,
                       torch::Tensor const &mask, bool apply_dc = true);
  torch::Tensor mu() const { return to_positive(raw_mu_); }
  torch::Tensor &raw_mu() { return raw_mu_; }
  UNet &net() { return net_; }
  /// Forces the U-Net to pass k-space through and the DC block to hard replacement (tests).
  void set_identity_hard(bool on) { identity_hard_ = on; }

private:
  int64_t coils_;
  UNet net_{nullptr};
  torch::Tensor raw_mu_;
  bool identity_hard_ = false;
};
TORCH_MODULE(Cie);

class ConvBnReluImpl : public torch::nn::Module
{
public:
  ConvBnReluImpl(int64_t in, int64_t out, bool upsample);
  torch::Tensor forward(torch::Tensor const &x);

private:
  torch::nn::Conv2d conv_{nullptr};
  torch::nn::ConvTranspose2d deconv_{nullptr};
  torch::nn::BatchNorm2d bn_{nullptr};
};
TORCH_MODULE(ConvBnRelu);

class SieImpl : public torch::nn::Module
{
public:
  SieImpl(ScoreNet psn, std::vector<int64_t> const &reduced, bool trainable_psn, int64_t level);
  torch::Tensor forward(torch::Tensor const &x);
  ScoreNet &psn() { return psn_; }
  bool psn_trainable() const { return trainable_; }

private:
  ScoreNet psn_{nullptr};
  bool trainable_;
  int64_t level_;
  torch::nn::ModuleList reduce_, dbr_, cbr_;
  torch::nn::Conv2d final_{nullptr};
};
TORCH_MODULE(Sie);

struct DenoiserOutput
{
  torch::Tensor x_d, x_p, x_t0;
};

class DenoisingModuleImpl : public torch::nn::Module
{
public:
  /// `psn` is copied; the sampler's score network is never modified.
  DenoisingModuleImpl(DenoiserConfig config, ScoreNet const &psn);
  DenoiserOutput forward(torch::Tensor const &x_t, torch::Tensor const &y, torch::Tensor const &maps,
                         torch::Tensor const &mask);
  DenoiserConfig const &config() const { return config_; }
  Cie &cie() { return cie_; }
  Sie &sie() { return sie_; }
  UNet &fusion() { return fusion_; }

private:
  DenoiserConfig config_;
  Cie cie_{nullptr};
  Sie sie_{nullptr};
  UNet fusion_{nullptr};
};
TORCH_MODULE(DenoisingModule);

torch::Tensor cie(Cie &module, torch::Tensor const &x_t, torch::Tensor const &y, torch::Tensor const &maps,
                  torch::Tensor const &mask);
torch::Tensor sie(Sie &module, torch::Tensor const &x_t);
/// x_T + N_d{x_T, x_p, x_d}; the residual connection is unconditional.
torch::Tensor denoise(UNet &fusion, torch::Tensor const &x_t, torch::Tensor const &x_d, torch::Tensor const &x_p);

} // namespace sgm
