#pragma once

// Deep-supervision objective
//   L(x_T^0, x_g) + L(x_z^K, x_g) + sum_{k=1..K} w_k [L(x_T^k, x_g) + L(x_z^k, x_g)]
// with w_k = 10^((k - K) / (K - 1)). x_z^K is counted twice on purpose.

#include "sgm/gic.hpp"

#include <torch/torch.h>

#include <string>
#include <vector>

namespace sgm {

enum class LossMode
{
  Mse,
  MseSsim,
};

std::string to_string(LossMode m);
LossMode parse_loss_mode(std::string const &s);

/// K >= 2; throws ArgumentError otherwise.
std::vector<double> loss_weights(int64_t K);
/// loss_weights(K), or {1} for a single cascade.
std::vector<double> supervision_weights(int64_t K);

/// Mean squared complex error.
torch::Tensor complex_mse(torch::Tensor const &x, torch::Tensor const &x_g);
/// Mean over the batch of 1 - SSIM on magnitudes, data range max|x_g| per image.
torch::Tensor ssim_loss(torch::Tensor const &x, torch::Tensor const &x_g);
torch::Tensor image_loss(torch::Tensor const &x, torch::Tensor const &x_g, LossMode mode);

struct LossTerm
{
  std::string label; // "x_T^0", "x_z^K", "x_T^k", "x_z^k"
  double weight = 1;
  torch::Tensor image;
};

/// The terms of the objective in order. `x_t0` may be undefined (no denoiser) and
/// `out` may be empty (denoiser only); absent branches contribute no terms.
std::vector<LossTerm> loss_terms(torch::Tensor const &x_t0, GicOutput const &out);
torch::Tensor total_loss(torch::Tensor const &x_t0, GicOutput const &out, torch::Tensor const &x_g, LossMode mode);

} // namespace sgm
