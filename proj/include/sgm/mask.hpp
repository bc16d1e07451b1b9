#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

namespace sgm {

enum class MaskKind
{
  Random,
  Equispaced,
  Full
};

std::string to_string(MaskKind kind);
MaskKind parse_mask_kind(std::string const &name);

/// Cartesian line mask over the last (phase-encode) axis, replicated over rows.
class SamplingMask
{
public:
  /// Checks that the center block of ceil(center_fraction * W) lines is sampled.
  SamplingMask(std::vector<uint8_t> lines, int acceleration, double center_fraction, MaskKind kind, uint64_t seed = 0);

  std::vector<uint8_t> const &lines() const { return lines_; }
  int64_t width() const { return static_cast<int64_t>(lines_.size()); }
  int acceleration() const { return acceleration_; }
  double center_fraction() const { return center_fraction_; }
  MaskKind kind() const { return kind_; }
  uint64_t seed() const { return seed_; }
  int64_t sampled_count() const;

  /// Real 0/1 line flags of shape [W].
  torch::Tensor tensor(torch::ScalarType dtype = torch::kFloat) const;
  /// Explicit H x W binary grid.
  torch::Tensor grid(int64_t height, torch::ScalarType dtype = torch::kFloat) const;

private:
  std::vector<uint8_t> lines_;
  int acceleration_;
  double center_fraction_;
  MaskKind kind_;
  uint64_t seed_;
};

/// Number of fully sampled center lines for a given width.
int64_t center_line_count(int64_t width, double center_fraction);
/// First index of the center block; the block always contains index W/2.
int64_t center_line_start(int64_t width, int64_t count);

/// round(W/R) lines: the center block plus the remainder drawn at random (without
/// replacement) or equispaced among the non-center lines. R = 1 samples every line.
SamplingMask make_mask(int64_t width, int acceleration, double center_fraction, MaskKind kind, uint64_t seed);

} // namespace sgm
