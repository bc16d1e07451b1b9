#include "sgm/operators.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace sgm {

namespace {

std::string shape_str(torch::Tensor const &t)
{
  std::ostringstream os;
  os << t.sizes();
  return os.str();
}

void require_complex(torch::Tensor const &t, char const *what)
{
  if (!t.defined() || !t.is_complex()) {
    throw ShapeError(std::string(what) + ": expected a complex tensor");
  }
}

void require_grid(torch::Tensor const &t, int64_t min_dim, char const *what)
{
  require_complex(t, what);
  if (t.dim() < min_dim) {
    throw ShapeError(std::string(what) + ": expected at least " + std::to_string(min_dim) + " dims, got " +
                     shape_str(t));
  }
}

void require_same_grid(torch::Tensor const &a, torch::Tensor const &b, char const *what)
{
  if (a.size(-1) != b.size(-1) || a.size(-2) != b.size(-2)) {
    throw ShapeError(std::string(what) + ": spatial shapes differ " + shape_str(a) + " vs " + shape_str(b));
  }
}

torch::Tensor cast_maps(torch::Tensor const &maps, torch::Tensor const &like)
{
  require_grid(maps, 3, "maps");
  return maps.scalar_type() == like.scalar_type() ? maps : maps.to(like.scalar_type());
}

torch::Tensor cast_mask(torch::Tensor const &mask, torch::Tensor const &like)
{
  if (!mask.defined() || mask.is_complex()) { throw ShapeError("mask: expected real line flags"); }
  if (mask.size(-1) != like.size(-1)) {
    throw ShapeError("mask: " + std::to_string(mask.size(-1)) + " lines for width " + std::to_string(like.size(-1)));
  }
  auto const dt = real_dtype_of(like);
  return mask.scalar_type() == dt ? mask : mask.to(dt);
}

std::vector<int64_t> const kSpatial{-2, -1};

std::atomic<double> g_fft_scale{1.0};

} // namespace

namespace fault {
void set_fft_scale(double scale) { g_fft_scale = scale; }
double fft_scale() { return g_fft_scale; }
} // namespace fault

SensitivityMaps::SensitivityMaps(torch::Tensor data, double tolerance)
  : data_(std::move(data))
{
  require_grid(data_, 3, "SensitivityMaps");
  if (!torch::isfinite(data_).all().item<bool>()) { throw ArgumentError("SensitivityMaps: non-finite entries"); }
  auto const energy = data_.abs().square().sum(-3).to(torch::kFloat64);
  auto const dev = (energy - 1.0).abs().max().item<double>();
  if (dev > tolerance) {
    throw ArgumentError("SensitivityMaps: sum |S_i|^2 deviates from 1 by " + std::to_string(dev));
  }
}

SensitivityMaps SensitivityMaps::normalized(torch::Tensor const &raw)
{
  require_grid(raw, 3, "SensitivityMaps");
  auto const norm = raw.abs().square().sum(-3, true).sqrt();
  if ((norm <= 0).any().item<bool>()) { throw ArgumentError("SensitivityMaps: pixel with zero coil energy"); }
  return SensitivityMaps(raw / norm);
}

DcWeight DcWeight::of(double mu)
{
  if (std::isnan(mu) || mu < 0) { throw ArgumentError("data consistency: mu must be >= 0, got " + std::to_string(mu)); }
  return DcWeight(mu);
}

torch::ScalarType real_dtype_of(torch::Tensor const &t)
{
  switch (t.scalar_type()) {
  case torch::kComplexDouble:
  case torch::kDouble: return torch::kDouble;
  default: return torch::kFloat;
  }
}

torch::ScalarType complex_dtype_of(torch::ScalarType real)
{
  return real == torch::kDouble ? torch::kComplexDouble : torch::kComplexFloat;
}

torch::Tensor to_channels(torch::Tensor const &x)
{
  require_grid(x, 2, "to_channels");
  return torch::stack({torch::real(x), torch::imag(x)}, -3);
}

torch::Tensor from_channels(torch::Tensor const &x)
{
  if (x.is_complex() || x.dim() < 3 || x.size(-3) != 2) {
    throw ShapeError("from_channels: expected real [..., 2, H, W], got " + shape_str(x));
  }
  return torch::complex(x.select(-3, 0), x.select(-3, 1));
}

torch::Tensor coils_to_channels(torch::Tensor const &coils)
{
  require_grid(coils, 4, "coils_to_channels");
  auto const n = coils.size(0), c = coils.size(1), h = coils.size(2), w = coils.size(3);
  return to_channels(coils).reshape({n, 2 * c, h, w});
}

torch::Tensor channels_to_coils(torch::Tensor const &x)
{
  if (x.is_complex() || x.dim() != 4 || x.size(1) % 2 != 0) {
    throw ShapeError("channels_to_coils: expected real [N, 2C, H, W], got " + shape_str(x));
  }
  return from_channels(x.reshape({x.size(0), x.size(1) / 2, 2, x.size(2), x.size(3)}));
}

torch::Tensor fft2c(torch::Tensor const &x)
{
  require_grid(x, 2, "fft2c");
  auto const shifted = torch::fft::ifftshift(x, kSpatial);
  auto k = torch::fft::fftshift(torch::fft::fft2(shifted, c10::nullopt, kSpatial, "ortho"), kSpatial);
  if (double const s = g_fft_scale; s != 1.0) { k = k * s; }
  return k;
}

torch::Tensor ifft2c(torch::Tensor const &k)
{
  require_grid(k, 2, "ifft2c");
  auto const shifted = torch::fft::ifftshift(k, kSpatial);
  return torch::fft::fftshift(torch::fft::ifft2(shifted, c10::nullopt, kSpatial, "ortho"), kSpatial);
}

torch::Tensor expand(torch::Tensor const &x, torch::Tensor const &maps)
{
  require_grid(x, 2, "expand");
  auto const s = cast_maps(maps, x);
  require_same_grid(x, s, "expand");
  return s * x.unsqueeze(-3);
}

torch::Tensor expand(torch::Tensor const &x, SensitivityMaps const &maps) { return expand(x, maps.tensor()); }

torch::Tensor reduce(torch::Tensor const &coils, torch::Tensor const &maps)
{
  require_grid(coils, 3, "reduce");
  auto const s = cast_maps(maps, coils);
  require_same_grid(coils, s, "reduce");
  if (coils.size(-3) != s.size(-3)) {
    throw ShapeError("reduce: " + std::to_string(coils.size(-3)) + " coil images for " + std::to_string(s.size(-3)) +
                     " maps");
  }
  return (torch::conj(s) * coils).sum(-3);
}

torch::Tensor reduce(torch::Tensor const &coils, SensitivityMaps const &maps) { return reduce(coils, maps.tensor()); }

torch::Tensor apply_mask(torch::Tensor const &k, torch::Tensor const &mask)
{
  require_grid(k, 2, "apply_mask");
  auto const m = cast_mask(mask, k);
  return torch::where(m > 0, k, torch::zeros({}, k.options()));
}

torch::Tensor forward(torch::Tensor const &x, torch::Tensor const &maps, torch::Tensor const &mask)
{
  return apply_mask(fft2c(expand(x, maps)), mask);
}

torch::Tensor adjoint(torch::Tensor const &y, torch::Tensor const &maps, torch::Tensor const &mask)
{
  return reduce(ifft2c(apply_mask(y, mask)), maps);
}

torch::Tensor data_consistency(
  torch::Tensor const &yc, torch::Tensor const &y, torch::Tensor const &mask, DcWeight mu)
{
  require_grid(yc, 2, "data_consistency");
  require_grid(y, 2, "data_consistency");
  if (yc.sizes() != y.sizes()) { throw ShapeError("data_consistency: " + shape_str(yc) + " vs " + shape_str(y)); }
  auto const m = cast_mask(mask, yc) > 0;
  if (mu.is_hard()) { return torch::where(m, y, yc); }
  return torch::where(m, (yc + mu.value() * y) / (1.0 + mu.value()), yc);
}

torch::Tensor data_consistency(
  torch::Tensor const &yc, torch::Tensor const &y, torch::Tensor const &mask, torch::Tensor const &mu)
{
  require_grid(yc, 2, "data_consistency");
  if (yc.sizes() != y.sizes()) { throw ShapeError("data_consistency: " + shape_str(yc) + " vs " + shape_str(y)); }
  if (mu.numel() != 1) { throw ShapeError("data_consistency: mu must be a scalar"); }
  if (mu.item<double>() < 0) { throw ArgumentError("data consistency: mu must be >= 0"); }
  auto const m = cast_mask(mask, yc) > 0;
  auto const w = mu.to(real_dtype_of(yc));
  return torch::where(m, (yc + w * y) / (1.0 + w), yc);
}

torch::Tensor image_data_consistency(
  torch::Tensor const &x, torch::Tensor const &y, torch::Tensor const &maps, torch::Tensor const &mask,
  torch::Tensor const &mu)
{
  return reduce(ifft2c(data_consistency(fft2c(expand(x, maps)), y, mask, mu)), maps);
}

torch::Tensor image_data_consistency(
  torch::Tensor const &x, torch::Tensor const &y, torch::Tensor const &maps, torch::Tensor const &mask,
  DcWeight mu)
{
  return reduce(ifft2c(data_consistency(fft2c(expand(x, maps)), y, mask, mu)), maps);
}

torch::Tensor data_fidelity_step(
  torch::Tensor const &x, torch::Tensor const &y, torch::Tensor const &maps, torch::Tensor const &mask,
  torch::Tensor const &alpha)
{
  auto const residual = forward(x, maps, mask) - y;
  return x - alpha.to(real_dtype_of(x)) * adjoint(residual, maps, mask);
}

torch::Tensor data_fidelity_step(
  torch::Tensor const &x, torch::Tensor const &y, torch::Tensor const &maps, torch::Tensor const &mask, double alpha)
{
  auto const residual = forward(x, maps, mask) - y;
  return x - alpha * adjoint(residual, maps, mask);
}

torch::Tensor to_positive(torch::Tensor const &raw) { return torch::nn::functional::softplus(raw); }

double positive_inverse(double value)
{
  if (!(value > 0)) { throw ArgumentError("positive_inverse: value must be > 0"); }
  return value > 30 ? value : std::log(std::expm1(value));
}

} // namespace sgm
