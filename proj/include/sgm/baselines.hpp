#pragma once

// Non-learned reconstructions: zero-filled adjoint and gradient descent on
//   f(x) = 1/2 ||A x - y||^2 + lambda * sum_p sqrt(|D_h x|^2 + |D_v x|^2 + eps)

#include <torch/torch.h>

#include <vector>

namespace sgm {

torch::Tensor zero_filled(torch::Tensor const &y, torch::Tensor const &maps, torch::Tensor const &mask);

struct TvConfig
{
  double lambda = 2e-3;
  int64_t steps = 200;
  double alpha = 0.5;
  double eps = 1e-6;
  /// An increase counts when f_t > f_{t-1} (1 + tolerance).
  double divergence_tolerance = 1e-6;
  int64_t divergence_patience = 10;

  void validate() const;
};

struct TvResult
{
  torch::Tensor x;
  /// Objective of the zero-filled start followed by one value per iteration.
  std::vector<double> objective;
};

/// Forward differences with a zero last row/column, stacked as [2, ..., H, W].
torch::Tensor tv_gradient_field(torch::Tensor const &x);
/// Smoothed total variation summed over the last two axes (and the batch).
torch::Tensor tv_value(torch::Tensor const &x, double eps);
/// Gradient of tv_value in the steepest-descent convention used by data_fidelity_step.
torch::Tensor tv_psi(torch::Tensor const &x, double eps);
double tv_objective(torch::Tensor const &x, torch::Tensor const &y, torch::Tensor const &maps,
                    torch::Tensor const &mask, double lambda, double eps);

/// Throws NumericalError after `divergence_patience` consecutive objective increases.
TvResult tv_reconstruct(torch::Tensor const &y, torch::Tensor const &maps, torch::Tensor const &mask,
                        TvConfig const &config);

} // namespace sgm
