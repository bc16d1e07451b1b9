#pragma once

// Unrolled reconstruction network with a guidance branch (x_T^k) and a main branch (x_z^k).
//
// Inside cascade k, for i = 0..I-1 and each branch b:
//   r_b^{i+1} = x_b^{i} - alpha_i A*(A x_b^{i} - y)            (x_b^0 = x_b^k)
//   x_T^{i+1} = U_T^{i+1}{x_T^k, r_T^1..r_T^{i+1}}
//   x_z^{i+1} = U_z^{i+1}{x_T^k, r_T^1..r_T^{i+1}, x_z^k, r_z^1..r_z^{i+1}}
// then
//   x_T^{k+1} = DC(x_T^k + x_T^I)
//   m_A       = sigmoid(AM{x_T^k, r_T^1..r_T^I, x_z^k, r_z^1..r_z^I})
//   x_z^{k+1} = DC(x_z^k + x_z^I * m_A + x_T^I * (1 - m_A))

#include "sgm/operators.hpp"
#include "sgm/unet.hpp"

#include "json.hpp"

#include <torch/torch.h>

#include <functional>
#include <vector>

namespace sgm {

struct GICConfig
{
  int64_t cascades = 2;         // K
  int64_t blocks = 2;           // I
  std::vector<int64_t> reg_widths{8, 16, 32, 64};
  int64_t attention_hidden = 16;
  int64_t attention_layers = 4;
  bool use_dense = true;
  bool use_guidance_branch = true;
  bool use_guidance_updates = true;
  bool use_attention = true;
  /// One alpha per block for both branches; otherwise each branch has its own.
  bool share_alpha = true;
  bool hard_dc = false;
  double alpha_init = 1.0;
  double mu_init = 10.0;

  static GICConfig desk();
  static GICConfig large();
  void validate() const;

  /// Real input channels of the i-th (zero-based) regularizer of each branch.
  int64_t guidance_reg_channels(int64_t i) const;
  int64_t main_reg_channels(int64_t i) const;
  int64_t attention_channels() const;

  nlohmann::json to_json() const;
  static GICConfig from_json(nlohmann::json const &j);
};

/// State passed between cascades, with the DF histories of the last cascade.
struct BranchState
{
  torch::Tensor x_t, x_z;
  std::vector<torch::Tensor> r_t, r_z;
};

/// Test hooks. `regularizer(branch, i, inputs)` replaces U_b^{i+1} and receives the complex
/// images of its dense input list ('T' or 'z'); `attention(features)` replaces m_A and
/// receives real [N, 4(I+1), H, W] features.
struct GicOverrides
{
  std::function<torch::Tensor(char, int64_t, std::vector<torch::Tensor> const &)> regularizer;
  std::function<torch::Tensor(torch::Tensor const &)> attention;
};

class AttentionImpl : public torch::nn::Module
{
public:
  AttentionImpl(int64_t in, int64_t hidden, int64_t layers);
  /// Real [N, in, H, W] -> [N, 1, H, W] in [0, 1].
  torch::Tensor forward(torch::Tensor const &x);
  int64_t in_channels() const { return in_; }

private:
  int64_t in_;
  torch::nn::Sequential net_{nullptr};
};
TORCH_MODULE(Attention);

class GicCascadeImpl : public torch::nn::Module
{
public:
  explicit GicCascadeImpl(GICConfig config);
  BranchState forward(BranchState const &in, torch::Tensor const &y, torch::Tensor const &maps,
                      torch::Tensor const &mask, GicOverrides const *overrides = nullptr);

  torch::Tensor alpha(int64_t i, char branch) const;
  torch::Tensor mu(char branch) const;
  torch::Tensor attention_map(torch::Tensor const &features, GicOverrides const *overrides);
  Attention &attention() { return attention_; }

private:
  torch::Tensor regularize(char branch, int64_t i, std::vector<torch::Tensor> const &inputs,
                           GicOverrides const *overrides);
  torch::Tensor dc(torch::Tensor const &x, char branch, torch::Tensor const &y, torch::Tensor const &maps,
                   torch::Tensor const &mask);

  GICConfig config_;
  std::vector<torch::Tensor> alpha_t_, alpha_z_;
  torch::Tensor raw_mu_t_, raw_mu_z_;
  torch::nn::ModuleList reg_t_, reg_z_;
  Attention attention_{nullptr};
};
TORCH_MODULE(GicCascade);

/// Every intermediate; index 0 holds the inputs, index k the output of cascade k.
/// x_t is empty when the guidance branch is disabled.
struct GicOutput
{
  std::vector<torch::Tensor> x_t, x_z;
  torch::Tensor const &final() const { return x_z.back(); }
};

class SgmNetImpl : public torch::nn::Module
{
public:
  explicit SgmNetImpl(GICConfig config);
  GicOutput forward(torch::Tensor const &x_t0, torch::Tensor const &x_z0, torch::Tensor const &y,
                    torch::Tensor const &maps, torch::Tensor const &mask);
  GICConfig const &config() const { return config_; }
  GicCascade &cascade(int64_t k) { return cascades_[static_cast<size_t>(k)]; }
  void set_overrides(GicOverrides o) { overrides_ = std::move(o); }
  GicOverrides const *overrides() const
  {
    return overrides_.regularizer || overrides_.attention ? &overrides_ : nullptr;
  }

private:
  GICConfig config_;
  std::vector<GicCascade> cascades_;
  GicOverrides overrides_;
};
TORCH_MODULE(SgmNet);

/// One cascade applied to a state.
BranchState gic_forward(SgmNet &net, BranchState const &state, torch::Tensor const &y, torch::Tensor const &maps,
                        torch::Tensor const &mask, int64_t k);

} // namespace sgm
