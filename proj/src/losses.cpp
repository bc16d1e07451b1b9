#include "sgm/losses.hpp"

#include "sgm/errors.hpp"
#include "sgm/metrics.hpp"

#include <cmath>

namespace sgm {

std::string to_string(LossMode m) { return m == LossMode::Mse ? "mse" : "mse+ssim"; }

LossMode parse_loss_mode(std::string const &s)
{
  if (s == "mse") { return LossMode::Mse; }
  if (s == "mse+ssim") { return LossMode::MseSsim; }
  throw ArgumentError("unknown loss mode '" + s + "' (expected mse or mse+ssim)");
}

std::vector<double> loss_weights(int64_t K)
{
  if (K < 2) { throw ArgumentError("loss_weights: K must be >= 2, got " + std::to_string(K)); }
  std::vector<double> w;
  for (int64_t k = 1; k <= K; ++k) {
    w.push_back(std::pow(10.0, static_cast<double>(k - K) / static_cast<double>(K - 1)));
  }
  return w;
}

std::vector<double> supervision_weights(int64_t K)
{
  if (K == 1) { return {1.0}; }
  return loss_weights(K);
}

torch::Tensor complex_mse(torch::Tensor const &x, torch::Tensor const &x_g)
{
  if (x.sizes() != x_g.sizes()) { throw ShapeError("loss: image shapes differ"); }
  auto const d = x - x_g;
  return d.is_complex() ? (torch::real(d).square() + torch::imag(d).square()).mean() : d.square().mean();
}

torch::Tensor ssim_loss(torch::Tensor const &x, torch::Tensor const &x_g)
{
  if (x.sizes() != x_g.sizes() || x.dim() != 3) { throw ShapeError("ssim loss: expected matching [N, H, W]"); }
  auto const b = x_g.abs().detach();
  auto const range = std::get<0>(b.flatten(1).max(1));
  return (1.0 - ssim_tensor(x.abs(), b, range)).mean();
}

torch::Tensor image_loss(torch::Tensor const &x, torch::Tensor const &x_g, LossMode mode)
{
  auto l = complex_mse(x, x_g);
  if (mode == LossMode::MseSsim) { l = l + ssim_loss(x, x_g); }
  return l;
}

std::vector<LossTerm> loss_terms(torch::Tensor const &x_t0, GicOutput const &out)
{
  std::vector<LossTerm> terms;
  if (x_t0.defined()) { terms.push_back({"x_T^0", 1.0, x_t0}); }
  if (out.x_z.empty()) {
    if (terms.empty()) { throw ArgumentError("loss: nothing to supervise"); }
    return terms;
  }
  auto const K = static_cast<int64_t>(out.x_z.size()) - 1;
  if (K < 1) { throw ArgumentError("loss: intermediates incomplete"); }
  if (!out.x_t.empty() && static_cast<int64_t>(out.x_t.size()) != K + 1) {
    throw ArgumentError("loss: branch intermediates differ in count");
  }
  auto const w = supervision_weights(K);
  terms.push_back({"x_z^K", 1.0, out.x_z.back()});
  for (int64_t k = 1; k <= K; ++k) {
    auto const wk = w[static_cast<size_t>(k - 1)];
    if (!out.x_t.empty()) { terms.push_back({"x_T^" + std::to_string(k), wk, out.x_t[static_cast<size_t>(k)]}); }
    terms.push_back({"x_z^" + std::to_string(k), wk, out.x_z[static_cast<size_t>(k)]});
  }
  return terms;
}

torch::Tensor total_loss(torch::Tensor const &x_t0, GicOutput const &out, torch::Tensor const &x_g, LossMode mode)
{
  torch::Tensor total;
  for (auto const &t : loss_terms(x_t0, out)) {
    auto const l = t.weight * image_loss(t.image, x_g, mode);
    total = total.defined() ? total + l : l;
  }
  return total;
}

} // namespace sgm
