#include "sgm/schedule.hpp"

#include "sgm/errors.hpp"

#include <cmath>

namespace sgm {

NoiseSchedule::NoiseSchedule(std::vector<double> sigmas)
  : sigmas_(std::move(sigmas))
{
  if (sigmas_.size() < 2) { throw ArgumentError("noise schedule needs at least two levels"); }
  for (size_t i = 0; i < sigmas_.size(); ++i) {
    if (!(sigmas_[i] > 0) || !std::isfinite(sigmas_[i])) { throw ArgumentError("noise scales must be positive"); }
    if (i > 0 && !(sigmas_[i] < sigmas_[i - 1])) { throw ArgumentError("noise scales must strictly decrease"); }
  }
  auto const r = ratio();
  for (size_t i = 1; i < sigmas_.size(); ++i) {
    if (std::abs(sigmas_[i] / sigmas_[i - 1] - r) > 1e-9) { throw ArgumentError("noise scales must be geometric"); }
  }
}

torch::Tensor NoiseSchedule::tensor(torch::ScalarType dtype) const
{
  return torch::tensor(sigmas_, torch::kFloat64).to(dtype);
}

NoiseSchedule make_schedule(double sigma_max, double sigma_min, int64_t levels)
{
  if (levels < 2) { throw ArgumentError("schedule needs L >= 2"); }
  if (!(sigma_min > 0) || !(sigma_max > sigma_min)) {
    throw ArgumentError("schedule needs sigma_max > sigma_min > 0");
  }
  std::vector<double> s(static_cast<size_t>(levels));
  auto const log_ratio = std::log(sigma_min / sigma_max) / static_cast<double>(levels - 1);
  for (int64_t j = 0; j < levels; ++j) { s[static_cast<size_t>(j)] = sigma_max * std::exp(log_ratio * j); }
  s.front() = sigma_max;
  s.back() = sigma_min;
  return NoiseSchedule(std::move(s));
}

double max_pairwise_distance(torch::Tensor const &images)
{
  if (images.dim() < 2 || images.size(0) < 2) { throw ArgumentError("need at least two images"); }
  auto const flat = torch::view_as_real(images.to(torch::kComplexDouble).contiguous()).reshape({images.size(0), -1});
  return torch::cdist(flat.unsqueeze(0), flat.unsqueeze(0)).max().item<double>();
}

} // namespace sgm
