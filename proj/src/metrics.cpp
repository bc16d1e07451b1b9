#include "sgm/metrics.hpp"

#include "sgm/errors.hpp"

#include <cmath>

namespace sgm {

namespace {

torch::Tensor magnitude(torch::Tensor const &x) { return x.abs(); }

void check_pair(torch::Tensor const &x, torch::Tensor const &x_g, char const *what)
{
  if (x.sizes() != x_g.sizes()) { throw ShapeError(std::string(what) + ": image shapes differ"); }
  if (x.dim() != 2) { throw ShapeError(std::string(what) + ": expected a single [H, W] image"); }
}

constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;

} // namespace

double psnr(torch::Tensor const &x, torch::Tensor const &x_g)
{
  check_pair(x, x_g, "psnr");
  auto const a = magnitude(x).to(torch::kDouble);
  auto const b = magnitude(x_g).to(torch::kDouble);
  auto const peak = b.max().item<double>();
  if (!(peak > 0)) { throw ArgumentError("psnr: reference image is zero"); }
  auto const rmse = std::sqrt((a - b).square().mean().item<double>());
  if (!std::isfinite(rmse)) { throw NumericalError("psnr: non-finite image"); }
  if (rmse == 0) { return kPsnrCap; }
  return std::min(kPsnrCap, 20.0 * std::log10(peak / rmse));
}

torch::Tensor gaussian_window(int64_t size, double sigma)
{
  auto const r = torch::arange(size, torch::kDouble) - (size - 1) / 2.0;
  auto const g = torch::exp(-r.square() / (2 * sigma * sigma));
  auto const w = torch::outer(g, g);
  return w / w.sum();
}

torch::Tensor ssim_tensor(torch::Tensor const &a, torch::Tensor const &b, torch::Tensor const &data_range)
{
  if (a.sizes() != b.sizes() || a.dim() != 3) { throw ShapeError("ssim: expected matching [N, H, W] batches"); }
  if (a.size(1) < kSsimWindow || a.size(2) < kSsimWindow) {
    throw ShapeError("ssim: " + std::to_string(kSsimWindow) + "x" + std::to_string(kSsimWindow) +
                     " window exceeds the image");
  }
  auto const w = gaussian_window(kSsimWindow, kSsimSigma).to(a.scalar_type()).view({1, 1, kSsimWindow, kSsimWindow});
  auto filt = [&](torch::Tensor const &t) { return torch::conv2d(t.unsqueeze(1), w); };
  auto const mu_a = filt(a), mu_b = filt(b);
  auto const s_aa = filt(a * a) - mu_a * mu_a;
  auto const s_bb = filt(b * b) - mu_b * mu_b;
  auto const s_ab = filt(a * b) - mu_a * mu_b;
  auto const L = data_range.to(a.scalar_type()).view({-1, 1, 1, 1});
  auto const c1 = (kK1 * L).square(), c2 = (kK2 * L).square();
  auto const map = ((2 * mu_a * mu_b + c1) * (2 * s_ab + c2)) /
                   ((mu_a.square() + mu_b.square() + c1) * (s_aa + s_bb + c2));
  return map.mean({1, 2, 3});
}

double ssim(torch::Tensor const &x, torch::Tensor const &x_g, double data_range)
{
  check_pair(x, x_g, "ssim");
  auto const a = magnitude(x).to(torch::kDouble).unsqueeze(0);
  auto const b = magnitude(x_g).to(torch::kDouble).unsqueeze(0);
  auto const L = data_range > 0 ? data_range : b.max().item<double>();
  if (!(L > 0)) { throw ArgumentError("ssim: data range must be positive"); }
  return ssim_tensor(a, b, torch::full({1}, L, torch::kDouble)).item<double>();
}

std::vector<double> psnr_batch(torch::Tensor const &x, torch::Tensor const &x_g)
{
  if (x.sizes() != x_g.sizes() || x.dim() != 3) { throw ShapeError("psnr: expected matching [N, H, W] batches"); }
  std::vector<double> out;
  for (int64_t n = 0; n < x.size(0); ++n) { out.push_back(psnr(x[n], x_g[n])); }
  return out;
}

std::vector<double> ssim_batch(torch::Tensor const &x, torch::Tensor const &x_g)
{
  if (x.sizes() != x_g.sizes() || x.dim() != 3) { throw ShapeError("ssim: expected matching [N, H, W] batches"); }
  std::vector<double> out;
  for (int64_t n = 0; n < x.size(0); ++n) { out.push_back(ssim(x[n], x_g[n])); }
  return out;
}

} // namespace sgm
