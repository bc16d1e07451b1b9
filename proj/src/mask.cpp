#include "sgm/mask.hpp"

#include "sgm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace sgm {

std::string to_string(MaskKind kind)
{
  switch (kind) {
  case MaskKind::Random: return "random";
  case MaskKind::Equispaced: return "equispaced";
  case MaskKind::Full: return "full";
  }
  return "unknown";
}

MaskKind parse_mask_kind(std::string const &name)
{
  if (name == "random") { return MaskKind::Random; }
  if (name == "equispaced") { return MaskKind::Equispaced; }
  if (name == "full") { return MaskKind::Full; }
  throw ArgumentError("unknown mask kind '" + name + "'");
}

int64_t center_line_count(int64_t width, double center_fraction)
{
  if (!(center_fraction > 0 && center_fraction <= 1)) {
    throw ArgumentError("center_fraction must lie in (0, 1]");
  }
  // The epsilon keeps 0.08 * 100 from rounding up to 9.
  auto const n = static_cast<int64_t>(std::ceil(center_fraction * static_cast<double>(width) - 1e-9));
  return std::clamp<int64_t>(n, 1, width);
}

int64_t center_line_start(int64_t width, int64_t count) { return width / 2 - count / 2; }

SamplingMask::SamplingMask(
  std::vector<uint8_t> lines, int acceleration, double center_fraction, MaskKind kind, uint64_t seed)
  : lines_(std::move(lines))
  , acceleration_(acceleration)
  , center_fraction_(center_fraction)
  , kind_(kind)
  , seed_(seed)
{
  if (acceleration_ < 1) { throw ArgumentError("acceleration must be >= 1"); }
  if (lines_.empty()) { throw ArgumentError("mask needs at least one line"); }
  auto const w = width();
  auto const nc = center_line_count(w, center_fraction_);
  auto const start = center_line_start(w, nc);
  for (int64_t i = start; i < start + nc; ++i) {
    if (!lines_[static_cast<size_t>(i)]) { throw ArgumentError("mask center block is not fully sampled"); }
  }
}

int64_t SamplingMask::sampled_count() const
{
  return std::count_if(lines_.begin(), lines_.end(), [](uint8_t v) { return v != 0; });
}

torch::Tensor SamplingMask::tensor(torch::ScalarType dtype) const
{
  auto t = torch::empty({width()}, torch::kFloat64);
  auto *p = t.data_ptr<double>();
  for (size_t i = 0; i < lines_.size(); ++i) { p[i] = lines_[i] ? 1.0 : 0.0; }
  return t.to(dtype);
}

torch::Tensor SamplingMask::grid(int64_t height, torch::ScalarType dtype) const
{
  return tensor(dtype).unsqueeze(0).expand({height, width()}).contiguous();
}

SamplingMask make_mask(int64_t width, int acceleration, double center_fraction, MaskKind kind, uint64_t seed)
{
  if (acceleration < 1) { throw ArgumentError("acceleration must be >= 1, got " + std::to_string(acceleration)); }
  if (width < 1) { throw ArgumentError("mask width must be positive"); }
  std::vector<uint8_t> lines(static_cast<size_t>(width), 0);
  if (acceleration == 1 || kind == MaskKind::Full) {
    std::fill(lines.begin(), lines.end(), 1);
    return SamplingMask(std::move(lines), acceleration, center_fraction, acceleration == 1 ? kind : MaskKind::Full, seed);
  }

  auto const nc = center_line_count(width, center_fraction);
  auto const total = static_cast<int64_t>(std::llround(static_cast<double>(width) / acceleration));
  if (total < nc) {
    throw ArgumentError("round(W/R) = " + std::to_string(total) + " is smaller than the " + std::to_string(nc) +
                        " center lines");
  }
  auto const start = center_line_start(width, nc);
  std::vector<int64_t> outer;
  for (int64_t i = 0; i < width; ++i) {
    if (i >= start && i < start + nc) {
      lines[static_cast<size_t>(i)] = 1;
    } else {
      outer.push_back(i);
    }
  }
  auto const extra = total - nc;
  auto const n_outer = static_cast<int64_t>(outer.size());

  if (kind == MaskKind::Random) {
    std::mt19937_64 rng(seed);
    std::shuffle(outer.begin(), outer.end(), rng);
    for (int64_t i = 0; i < extra; ++i) { lines[static_cast<size_t>(outer[static_cast<size_t>(i)])] = 1; }
  } else {
    // Midpoints of `extra` equal bins over the ordered non-center lines.
    for (int64_t i = 0; i < extra; ++i) {
      auto const pick = ((2 * i + 1) * n_outer) / (2 * extra);
      lines[static_cast<size_t>(outer[static_cast<size_t>(pick)])] = 1;
    }
  }
  return SamplingMask(std::move(lines), acceleration, center_fraction, kind, seed);
}

} // namespace sgm
