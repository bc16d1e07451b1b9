#pragma once

#include <torch/torch.h>

#include <span>
#include <vector>

namespace sgm {

/// Strictly decreasing geometric noise scales sigma_1 > ... > sigma_L.
class NoiseSchedule
{
public:
  explicit NoiseSchedule(std::vector<double> sigmas);

  std::vector<double> const &sigmas() const { return sigmas_; }
  int64_t levels() const { return static_cast<int64_t>(sigmas_.size()); }
  /// Zero-based level index.
  double sigma(int64_t index) const { return sigmas_.at(static_cast<size_t>(index)); }
  double sigma_max() const { return sigmas_.front(); }
  double sigma_min() const { return sigmas_.back(); }
  double ratio() const { return sigmas_[1] / sigmas_[0]; }
  torch::Tensor tensor(torch::ScalarType dtype = torch::kFloat) const;

private:
  std::vector<double> sigmas_;
};

/// Geometric sequence from sigma_max down to sigma_min inclusive.
NoiseSchedule make_schedule(double sigma_max, double sigma_min, int64_t levels);

/// sigma_max heuristic: largest pairwise L2 distance between training images [M, H, W].
double max_pairwise_distance(torch::Tensor const &images);

} // namespace sgm
