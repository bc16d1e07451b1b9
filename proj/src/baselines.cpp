#include "sgm/baselines.hpp"

#include "sgm/errors.hpp"
#include "sgm/operators.hpp"

#include <cmath>

using torch::indexing::None;
using torch::indexing::Slice;

namespace sgm {

torch::Tensor zero_filled(torch::Tensor const &y, torch::Tensor const &maps, torch::Tensor const &mask)
{
  return adjoint(y, maps, mask);
}

void TvConfig::validate() const
{
  if (std::isnan(lambda) || lambda < 0) { throw ArgumentError("tv: lambda must be >= 0"); }
  if (std::isnan(alpha) || alpha < 0) { throw ArgumentError("tv: alpha must be >= 0"); }
  if (steps < 0) { throw ArgumentError("tv: steps must be >= 0"); }
  if (!(eps > 0)) { throw ArgumentError("tv: eps must be > 0"); }
  if (divergence_patience < 1) { throw ArgumentError("tv: divergence patience must be >= 1"); }
}

torch::Tensor tv_gradient_field(torch::Tensor const &x)
{
  auto dh = torch::zeros_like(x);
  auto dv = torch::zeros_like(x);
  dh.index_put_({"...", Slice(), Slice(None, -1)},
                x.index({"...", Slice(), Slice(1, None)}) - x.index({"...", Slice(), Slice(None, -1)}));
  dv.index_put_({"...", Slice(None, -1), Slice()},
                x.index({"...", Slice(1, None), Slice()}) - x.index({"...", Slice(None, -1), Slice()}));
  return torch::stack({dh, dv});
}

namespace {

torch::Tensor weights(torch::Tensor const &g, double eps)
{
  return (g.abs().square().sum(0) + eps).sqrt();
}

// Adjoint of the forward difference along `dim` when the last entry of g is zero.
torch::Tensor diff_adjoint(torch::Tensor const &g, int64_t dim)
{
  auto const n = g.size(dim);
  auto shifted = torch::zeros_like(g);
  shifted.narrow(dim, 1, n - 1).copy_(g.narrow(dim, 0, n - 1));
  return shifted - g;
}

} // namespace

torch::Tensor tv_value(torch::Tensor const &x, double eps) { return weights(tv_gradient_field(x), eps).sum(); }

torch::Tensor tv_psi(torch::Tensor const &x, double eps)
{
  auto const g = tv_gradient_field(x);
  auto const w = weights(g, eps);
  return diff_adjoint(g[0] / w, -1) + diff_adjoint(g[1] / w, -2);
}

double tv_objective(torch::Tensor const &x, torch::Tensor const &y, torch::Tensor const &maps,
                    torch::Tensor const &mask, double lambda, double eps)
{
  auto const r = forward(x, maps, mask) - y;
  auto const data = 0.5 * r.abs().square().sum().item<double>();
  return lambda > 0 ? data + lambda * tv_value(x, eps).item<double>() : data;
}

TvResult tv_reconstruct(torch::Tensor const &y, torch::Tensor const &maps, torch::Tensor const &mask,
                        TvConfig const &config)
{
  config.validate();
  torch::NoGradGuard guard;
  TvResult res;
  res.x = zero_filled(y, maps, mask);
  res.objective.push_back(tv_objective(res.x, y, maps, mask, config.lambda, config.eps));
  int64_t increases = 0;
  for (int64_t t = 0; t < config.steps; ++t) {
    auto g = adjoint(forward(res.x, maps, mask) - y, maps, mask);
    if (config.lambda > 0) { g = g + config.lambda * tv_psi(res.x, config.eps); }
    res.x = res.x - config.alpha * g;
    auto const f = tv_objective(res.x, y, maps, mask, config.lambda, config.eps);
    if (!std::isfinite(f)) { throw NumericalError("tv: non-finite objective at iteration " + std::to_string(t + 1)); }
    auto const prev = res.objective.back();
    increases = f > prev * (1 + config.divergence_tolerance) ? increases + 1 : 0;
    res.objective.push_back(f);
    if (increases >= config.divergence_patience) {
      throw NumericalError("tv: objective increased for " + std::to_string(increases) +
                           " consecutive iterations (now " + std::to_string(f) + " at iteration " +
                           std::to_string(t + 1) + "); reduce alpha");
    }
  }
  return res;
}

} // namespace sgm
