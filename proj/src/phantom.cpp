#include "sgm/phantom.hpp"

#include "sgm/errors.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <numbers>
#include <random>

namespace sgm {

std::string to_string(PhantomFamily f) { return f == PhantomFamily::A ? "A" : "B"; }

PhantomFamily parse_family(std::string const &name)
{
  if (name == "A" || name == "a") { return PhantomFamily::A; }
  if (name == "B" || name == "b") { return PhantomFamily::B; }
  throw ArgumentError("unknown phantom family '" + name + "'");
}

PhantomSpec PhantomSpec::for_family(PhantomFamily family, int64_t height, int64_t width, uint64_t seed)
{
  PhantomSpec s;
  s.family = family;
  s.height = height;
  s.width = width;
  s.seed = seed;
  if (family == PhantomFamily::B) {
    s.min_ellipses = 4;
    s.max_ellipses = 8;
    s.min_axis_ratio = 0.2;
    s.max_axis_ratio = 0.5;
  }
  return s;
}

void PhantomSpec::validate() const
{
  if (height < 4 || width < 4) { throw ArgumentError("phantom must be at least 4x4"); }
  if (min_ellipses < 1 || max_ellipses < min_ellipses) {
    throw ArgumentError("phantom ellipse count range [" + std::to_string(min_ellipses) + ", " +
                        std::to_string(max_ellipses) + "] must contain at least one ellipse");
  }
  if (!(min_axis_ratio > 0 && min_axis_ratio <= max_axis_ratio && max_axis_ratio <= 1)) {
    throw ArgumentError("phantom axis ratio range must satisfy 0 < min <= max <= 1");
  }
  if (!(min_intensity > 0 && min_intensity <= max_intensity)) {
    throw ArgumentError("phantom intensity range must satisfy 0 < min <= max");
  }
  if (!(phase_amplitude >= 0)) { throw ArgumentError("phase amplitude must be >= 0"); }
}

double Ellipse::eccentricity() const
{
  auto const r = minor / major;
  return std::sqrt(std::max(0.0, 1.0 - r * r));
}

PhantomLayout sample_layout(PhantomSpec const &spec)
{
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  PhantomLayout layout;
  auto const count = std::uniform_int_distribution<int>(spec.min_ellipses, spec.max_ellipses)(rng);
  for (int i = 0; i < count; ++i) {
    Ellipse e;
    // The first ellipse is a large low-intensity body; the rest are inclusions.
    bool const body = i == 0;
    e.major = body ? uniform(0.6, 0.85) : uniform(0.12, 0.4);
    e.minor = e.major * uniform(spec.min_axis_ratio, spec.max_axis_ratio);
    e.cx = body ? uniform(-0.1, 0.1) : uniform(-0.4, 0.4);
    e.cy = body ? uniform(-0.1, 0.1) : uniform(-0.4, 0.4);
    e.angle = uniform(0.0, std::numbers::pi);
    e.intensity = body ? spec.min_intensity : uniform(spec.min_intensity, spec.max_intensity);
    layout.ellipses.push_back(e);
  }
  layout.phase_x = uniform(-1.0, 1.0);
  layout.phase_y = uniform(-1.0, 1.0);
  layout.phase_r = uniform(-1.0, 1.0);
  return layout;
}

torch::Tensor render_phantom(PhantomSpec const &spec, PhantomLayout const &layout)
{
  spec.validate();
  auto const h = spec.height, w = spec.width;
  auto mag = torch::zeros({h, w}, torch::kFloat64);
  auto phase = torch::zeros({h, w}, torch::kFloat64);
  auto m = mag.accessor<double, 2>();
  auto ph = phase.accessor<double, 2>();
  for (int64_t r = 0; r < h; ++r) {
    double const v = (2.0 * r - (h - 1)) / h;
    for (int64_t c = 0; c < w; ++c) {
      double const u = (2.0 * c - (w - 1)) / w;
      double value = 0;
      for (auto const &e : layout.ellipses) {
        double const du = u - e.cx, dv = v - e.cy;
        double const cs = std::cos(e.angle), sn = std::sin(e.angle);
        double const a = (du * cs + dv * sn) / e.major;
        double const b = (-du * sn + dv * cs) / e.minor;
        if (a * a + b * b <= 1.0) { value += e.intensity; }
      }
      m[r][c] = value;
      ph[r][c] = spec.phase_amplitude * (layout.phase_x * u + layout.phase_y * v + layout.phase_r * (u * u + v * v)) / 3.0;
    }
  }
  auto const peak = mag.max().item<double>();
  if (peak > 0) { mag /= peak; }
  return torch::polar(mag, phase).to(torch::kComplexFloat);
}

torch::Tensor make_phantom(PhantomSpec const &spec) { return render_phantom(spec, sample_layout(spec)); }

std::vector<std::pair<double, double>> coil_centers(int64_t coils, int64_t height, int64_t width)
{
  if (coils < 1) { throw ArgumentError("coil count must be >= 1"); }
  double const cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
  std::vector<std::pair<double, double>> out;
  for (int64_t i = 0; i < coils; ++i) {
    double const theta = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(coils);
    double const dx = std::cos(theta), dy = std::sin(theta);
    double t = std::numeric_limits<double>::infinity();
    if (std::abs(dx) > 1e-12) { t = std::min(t, cx / std::abs(dx)); }
    if (std::abs(dy) > 1e-12) { t = std::min(t, cy / std::abs(dy)); }
    out.emplace_back(cx + t * dx, cy + t * dy);
  }
  return out;
}

SensitivityMaps make_coil_maps(int64_t coils, int64_t height, int64_t width, double profile_width)
{
  if (!(profile_width > 0)) { throw ArgumentError("coil profile width must be > 0"); }
  auto const centers = coil_centers(coils, height, width);
  double const sigma = profile_width * static_cast<double>(std::max(height, width));
  auto mag = torch::empty({coils, height, width}, torch::kFloat64);
  auto phase = torch::empty({coils, height, width}, torch::kFloat64);
  auto m = mag.accessor<double, 3>();
  auto ph = phase.accessor<double, 3>();
  for (int64_t i = 0; i < coils; ++i) {
    auto const [px, py] = centers[static_cast<size_t>(i)];
    double const base = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(coils);
    for (int64_t r = 0; r < height; ++r) {
      for (int64_t c = 0; c < width; ++c) {
        double const dx = c - px, dy = r - py;
        // Floor keeps every pixel covered by at least one coil.
        m[i][r][c] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)) + 1e-3;
        ph[i][r][c] = base + 0.5 * std::numbers::pi * (dx / width + dy / height);
      }
    }
  }
  return SensitivityMaps::normalized(torch::polar(mag, phase));
}

void AcquisitionConfig::validate(int64_t width) const
{
  if (coils < 1) { throw ArgumentError("coil count must be >= 1"); }
  if (acceleration < 1) { throw ArgumentError("acceleration must be >= 1"); }
  if (center_fraction * static_cast<double>(width) < 1.0 - 1e-9) {
    throw ArgumentError("center_fraction * W must be >= 1");
  }
  if (!(noise_std >= 0)) { throw ArgumentError("noise std must be >= 0"); }
}

at::Generator make_generator(uint64_t seed) { return at::detail::createCPUGenerator(seed); }

torch::Tensor simulate_measurement(
  torch::Tensor const &xg, SensitivityMaps const &maps, SamplingMask const &mask, double noise_std, uint64_t seed)
{
  if (!(noise_std >= 0)) { throw ArgumentError("noise std must be >= 0"); }
  auto const m = mask.tensor(real_dtype_of(xg));
  auto y = forward(xg, maps.tensor(), m);
  if (noise_std == 0) { return y; }
  auto gen = make_generator(seed);
  auto const opts = torch::TensorOptions().dtype(real_dtype_of(xg));
  auto const scale = noise_std / std::sqrt(2.0);
  auto const noise = torch::complex(torch::randn(y.sizes(), gen, opts), torch::randn(y.sizes(), gen, opts)) * scale;
  return y + apply_mask(noise, m);
}

} // namespace sgm
