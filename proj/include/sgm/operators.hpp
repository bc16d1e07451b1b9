#pragma once

// Multicoil Cartesian MRI linear algebra.
//
// Layout conventions used throughout the library:
//   image        complex [..., H, W]
//   coil images  complex [..., C, H, W]
//   maps         complex [C, H, W] or [N, C, H, W]
//   mask         real 0/1 line flags broadcastable along the last axis:
//                [W] for a single record, [N, 1, 1, W] for a batch.
// Every operator works for complex64 and complex128 and is differentiable.

#include "sgm/errors.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <limits>

namespace sgm {

/// Per-coil complex sensitivity profiles with sum_i |S_i(p)|^2 = 1 at every pixel.
class SensitivityMaps
{
public:
  /// Validates the normalization; throws ArgumentError beyond `tolerance`.
  explicit SensitivityMaps(torch::Tensor data, double tolerance = 1e-6);

  /// Rescales raw profiles pixelwise so they satisfy the normalization.
  static SensitivityMaps normalized(torch::Tensor const &raw);

  torch::Tensor const &tensor() const { return data_; }
  int64_t coils() const { return data_.size(-3); }
  int64_t height() const { return data_.size(-2); }
  int64_t width() const { return data_.size(-1); }

private:
  torch::Tensor data_;
};

/// Weight of the measurements in a data-consistency block; `hard()` is the mu = +inf limit.
class DcWeight
{
public:
  static DcWeight hard() { return DcWeight(std::numeric_limits<double>::infinity()); }
  /// Accepts any mu >= 0 including +inf; negative or NaN throws ArgumentError.
  static DcWeight of(double mu);

  bool is_hard() const { return mu_ == std::numeric_limits<double>::infinity(); }
  double value() const { return mu_; }

private:
  explicit DcWeight(double mu)
    : mu_(mu)
  {
  }
  double mu_;
};

torch::ScalarType real_dtype_of(torch::Tensor const &complex);
torch::ScalarType complex_dtype_of(torch::ScalarType real);

/// Complex [..., H, W] -> real [..., 2, H, W] (real part first).
torch::Tensor to_channels(torch::Tensor const &x);
/// Real [..., 2, H, W] -> complex [..., H, W]. Exact inverse of to_channels.
torch::Tensor from_channels(torch::Tensor const &x);
/// Coil images [N, C, H, W] -> real [N, 2C, H, W], coil-major with (re, im) pairs.
torch::Tensor coils_to_channels(torch::Tensor const &coils);
torch::Tensor channels_to_coils(torch::Tensor const &x);

/// Centered, orthonormal 2D DFT over the last two axes.
torch::Tensor fft2c(torch::Tensor const &x);
torch::Tensor ifft2c(torch::Tensor const &k);

/// Coil images S_i * x.
torch::Tensor expand(torch::Tensor const &x, torch::Tensor const &maps);
torch::Tensor expand(torch::Tensor const &x, SensitivityMaps const &maps);
/// Coil combination sum_i conj(S_i) * x_i.
torch::Tensor reduce(torch::Tensor const &coils, torch::Tensor const &maps);
torch::Tensor reduce(torch::Tensor const &coils, SensitivityMaps const &maps);

/// Applies line flags; unsampled entries become exactly zero.
torch::Tensor apply_mask(torch::Tensor const &k, torch::Tensor const &mask);

/// A = P F E
torch::Tensor forward(torch::Tensor const &x, torch::Tensor const &maps, torch::Tensor const &mask);
/// A* = R F^-1 P
torch::Tensor adjoint(torch::Tensor const &y, torch::Tensor const &maps, torch::Tensor const &mask);

/// On sampled entries (y_c + mu y) / (1 + mu); elsewhere y_c unchanged.
torch::Tensor data_consistency(
  torch::Tensor const &yc, torch::Tensor const &y, torch::Tensor const &mask, DcWeight mu);
/// Same with a (learnable) nonnegative scalar tensor mu.
torch::Tensor data_consistency(
  torch::Tensor const &yc, torch::Tensor const &y, torch::Tensor const &mask, torch::Tensor const &mu);

/// Image-domain DC: fft2c(expand(x)) is made consistent with y then reduced back.
torch::Tensor image_data_consistency(
  torch::Tensor const &x, torch::Tensor const &y, torch::Tensor const &maps, torch::Tensor const &mask,
  torch::Tensor const &mu);
torch::Tensor image_data_consistency(
  torch::Tensor const &x, torch::Tensor const &y, torch::Tensor const &maps, torch::Tensor const &mask,
  DcWeight mu);

/// x - alpha * A*(A x - y)
torch::Tensor data_fidelity_step(
  torch::Tensor const &x, torch::Tensor const &y, torch::Tensor const &maps, torch::Tensor const &mask,
  torch::Tensor const &alpha);
torch::Tensor data_fidelity_step(
  torch::Tensor const &x, torch::Tensor const &y, torch::Tensor const &maps, torch::Tensor const &mask,
  double alpha);

/// Learnable positive scalars are stored raw and mapped through softplus.
torch::Tensor to_positive(torch::Tensor const &raw);
/// Raw value whose softplus equals `value`.
double positive_inverse(double value);

/// Mutation hook for the property suite: scales every fft2c output. 1 disables it.
namespace fault {
void set_fft_scale(double scale);
double fft_scale();
} // namespace fault

} // namespace sgm
