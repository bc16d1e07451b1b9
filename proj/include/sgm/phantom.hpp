#pragma once

// Synthetic ground truth: ellipse phantoms, analytic coil maps and simulated measurements.

#include "sgm/mask.hpp"
#include "sgm/operators.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

namespace sgm {

/// Two ellipse-parameter distributions; B is shifted away from A to emulate
/// training a score model on one distribution and applying it to another.
///   A: 2-5 ellipses, minor/major axis ratio in [0.6, 1.0]
///   B: 4-8 ellipses, minor/major axis ratio in [0.2, 0.5]
enum class PhantomFamily
{
  A,
  B
};

std::string to_string(PhantomFamily f);
PhantomFamily parse_family(std::string const &name);

struct PhantomSpec
{
  PhantomFamily family = PhantomFamily::A;
  int64_t height = 32;
  int64_t width = 32;
  int min_ellipses = 2;
  int max_ellipses = 5;
  double min_axis_ratio = 0.6;
  double max_axis_ratio = 1.0;
  double min_intensity = 0.2;
  double max_intensity = 0.8;
  double phase_amplitude = 0.785398163397448; // pi/4
  uint64_t seed = 0;

  /// Documented parameter ranges for a family.
  static PhantomSpec for_family(PhantomFamily family, int64_t height, int64_t width, uint64_t seed);
  void validate() const;
};

/// One ellipse in normalized coordinates (the image spans [-1, 1) on both axes).
struct Ellipse
{
  double cx, cy;
  double major, minor; // semi-axes
  double angle;        // radians
  double intensity;

  double eccentricity() const;
};

struct PhantomLayout
{
  std::vector<Ellipse> ellipses;
  double phase_x, phase_y, phase_r; // coefficients of the smooth phase polynomial
};

/// Draws the ellipse parameters; deterministic in spec.seed.
PhantomLayout sample_layout(PhantomSpec const &spec);
/// Renders a complex64 [H, W] image: magnitude scaled into [0, 1] times exp(i phase).
torch::Tensor render_phantom(PhantomSpec const &spec, PhantomLayout const &layout);
torch::Tensor make_phantom(PhantomSpec const &spec);

/// Pixel position (x = column, y = row) of each coil center. Coil i sits where the ray
/// from the image center at angle 2 pi i / C meets the border, so C = 4 gives the four
/// edge midpoints (right, bottom, left, top).
std::vector<std::pair<double, double>> coil_centers(int64_t coils, int64_t height, int64_t width);

/// Gaussian magnitude profiles of standard deviation profile_width * max(H, W) around
/// each coil center with a smooth linear phase, normalized pixelwise.
SensitivityMaps make_coil_maps(int64_t coils, int64_t height, int64_t width, double profile_width = 0.5);

struct AcquisitionConfig
{
  int64_t coils = 4;
  int acceleration = 4;
  double center_fraction = 0.08;
  MaskKind mask_kind = MaskKind::Random;
  double noise_std = 0.0;
  uint64_t seed = 0;

  void validate(int64_t width) const;
};

/// forward(x_g) plus circular complex Gaussian noise of total std noise_std on sampled entries.
torch::Tensor simulate_measurement(
  torch::Tensor const &xg, SensitivityMaps const &maps, SamplingMask const &mask, double noise_std, uint64_t seed);

/// Seeded CPU generator for reproducible torch sampling.
at::Generator make_generator(uint64_t seed);

} // namespace sgm
