#pragma once

// Image quality on magnitude images. PSNR uses max|x_g| as the peak and is capped at
// kPsnrCap for exact matches; SSIM uses an 11x11 Gaussian window (sigma 1.5), the usual
// constants K1 = 0.01, K2 = 0.03 and data range max|x_g|.

#include <torch/torch.h>

#include <vector>

namespace sgm {

inline constexpr double kPsnrCap = 100.0;
inline constexpr int64_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

/// Single image pair [H, W] (complex or real).
double psnr(torch::Tensor const &x, torch::Tensor const &x_g);
/// `data_range` <= 0 selects max|x_g|.
double ssim(torch::Tensor const &x, torch::Tensor const &x_g, double data_range = 0);

/// Differentiable mean SSIM per image of real magnitude batches [N, H, W] with a
/// per-image data range [N]. Throws ShapeError when the window exceeds the image.
torch::Tensor ssim_tensor(torch::Tensor const &a, torch::Tensor const &b, torch::Tensor const &data_range);

/// Normalized 2D Gaussian window [size, size] in double precision.
torch::Tensor gaussian_window(int64_t size, double sigma);

std::vector<double> psnr_batch(torch::Tensor const &x, torch::Tensor const &x_g);
std::vector<double> ssim_batch(torch::Tensor const &x, torch::Tensor const &x_g);

} // namespace sgm
