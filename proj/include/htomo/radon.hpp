#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "htomo/core.hpp"
#include "htomo/distribution.hpp"

namespace htomo {

/// Line integrals indexed by (theta, p), theta-major.
struct Sinogram {
  std::vector<double> thetas;
  std::vector<double> ps;
  std::vector<double> values;

  Sinogram() = default;
  Sinogram(std::vector<double> thetas, std::vector<double> ps);

  double& at(std::size_t i, std::size_t j) { return values[i * ps.size() + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * ps.size() + j]; }
  double max_abs() const;
};

/// Per-ray histograms sharing one set of bin edges; mass is (theta, p, bin).
struct HistogramSinogram {
  std::vector<double> thetas;
  std::vector<double> ps;
  std::vector<double> edges;
  std::vector<double> mass;
  std::vector<double> underflow;  // (theta, p)
  std::vector<double> overflow;   // (theta, p)

  std::size_t bins() const { return edges.size() - 1; }
  std::size_t ray_index(std::size_t i, std::size_t j) const { return i * ps.size() + j; }
  std::span<const double> ray_mass(std::size_t i, std::size_t j) const {
    return {mass.data() + ray_index(i, j) * bins(), bins()};
  }
  Histogram slice(std::size_t i, std::size_t j) const;
};

/// n angles k * pi / n.
std::vector<double> uniform_angles(std::size_t n);
/// n offsets evenly spanning [-half_width, half_width].
std::vector<double> uniform_offsets(std::size_t n, double half_width);

/// Midpoint quadrature of sample_along_ray for every (theta, p). step <= 0 means h/2.
Sinogram radon(const ScalarGrid& grid, std::span<const double> thetas, std::span<const double> ps,
               double step = 0.0);

/// Ramp-filtered backprojection onto `out` (2D). The filter is the band-limited
/// ramp |sigma| with a raised-cosine rolloff from 80% to 100% of Nyquist.
ScalarGrid fbp(const Sinogram& sino, const GridSpec& out);

/// Fraction of Nyquist where the ramp filter rolloff starts.
inline constexpr double fbp_rolloff_start = 0.8;

HistogramSinogram hist_radon(const ScalarGrid& grid, std::span<const double> thetas,
                             std::span<const double> ps, std::span<const double> edges,
                             double step = 0.0);

/// Per-ray k-th moment (k >= 1).
Sinogram moment_sinogram(const HistogramSinogram& hs, int k);

/// Radon transform of the unit-circle delta: 2 / sqrt(1 - p^2) on |p| < 1, else 0.
double oracle_circle_delta(double p);

/// Plane transform of delta(x1) delta(x2) across the plane with unit normal theta: 1 / |theta_3|.
double oracle_line_delta_plane_transform(const Vec3& theta);

void write_sinogram_csv(const std::filesystem::path& path, const Sinogram& s);
Sinogram read_sinogram_csv(const std::filesystem::path& path);
/// `theta,p,bin_index,mass` plus a sidecar `edge` CSV.
void write_hist_sinogram_csv(const std::filesystem::path& path,
                             const std::filesystem::path& edges_path, const HistogramSinogram& hs);

}  // namespace htomo
