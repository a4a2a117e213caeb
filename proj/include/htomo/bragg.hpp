#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "htomo/core.hpp"
#include "htomo/distribution.hpp"
#include "htomo/tensor.hpp"

namespace htomo {

/// Transmission sampled at ascending wavelengths (Angstrom).
struct Spectrum {
  std::vector<double> wavelengths;
  std::vector<double> transmission;

  void validate() const;
};

/// Idealized edge: T(lambda) = (a + b lambda) H(lambda - lambda_e) for an unstrained path.
struct EdgeModel {
  double lambda_e = 4.0;
  double a = 1.0;
  double b = 0.0;

  double trend(double lambda) const { return a + b * lambda; }
  void validate() const;
};

/// Strain values along one path with their path-length weights.
struct StrainSamples {
  std::vector<double> strain;
  std::vector<double> weight;
};

/// T(lambda) = (a + b lambda) sum_i w_i H(lambda - lambda_e (1 + eps_i)) / sum_i w_i,
/// with H(0) = 1. Fails if the trend is not positive over the wavelengths.
Spectrum simulate_spectrum(const StrainSamples& samples, const EdgeModel& model,
                           std::span<const double> wavelengths);

/// n wavelengths covering shifted edges for strains in [eps_lo, eps_hi], with a
/// lower margin of 10% and an upper plateau of 25% of the edge span.
std::vector<double> bragg_window(const EdgeModel& model, double eps_lo, double eps_hi, std::size_t n);

struct ExtractOptions {
  /// Trailing fraction of the samples used to fit the linear trend.
  double plateau_fraction = 0.15;
  /// Allowed deviation of the normalized cumulative from 0 (first sample) and 1 (plateau).
  double flat_tolerance = 0.02;
};

/// Trend-corrected strain histogram from a spectrum. The trend a + b lambda is
/// refit on the trailing plateau (the model supplies lambda_e only). Each rise of
/// the normalized cumulative between neighbouring samples is spread uniformly
/// over the corresponding strain interval; falls are dropped. The result is
/// scaled to `path_length`. Throws InvalidArgument if the edge is incomplete.
Histogram extract_histogram(const Spectrum& sp, const EdgeModel& model, std::span<const double> edges,
                            double path_length, const ExtractOptions& opt = {});

/// Least-squares trend over the trailing plateau: returns {a, b}.
std::pair<double, double> fit_trend(const Spectrum& sp, double plateau_fraction);

/// Wasserstein-1 distance between a histogram (mass uniform within bins) and a
/// weighted point law, both normalized to unit mass.
double wasserstein1(const Histogram& h, std::span<const double> values, std::span<const double> weights);

struct BraggSetup {
  EdgeModel model;
  std::vector<double> wavelengths;
  std::vector<double> edges;  // strain bins
  double step = 0.0;          // ray sampling step, <= 0 for h/2
};

/// Per ray: sample xi.eps.xi, simulate the spectrum, extract the histogram and
/// return its k-th moment. Rays missing the grid give 0.
std::vector<double> bragg_moment_sinogram(const SymTensorField& strain, std::span<const Ray3> rays,
                                          const BraggSetup& setup, int k);

/// K_{a1a2a3a4} = e_{a1 p1 q1} e_{a2 p2 q2} e_{a3 p3 q3} e_{a4 p4 q4}
///   f_{q1 p2 q3 p4, p1 q2 p3 q4}
/// for a 3D rank-4 field (f indices before the comma, derivatives after).
SymTensorField gk_rank4(const SymTensorField& f);
/// All 81 index tuples of the same operator, evaluated independently, in
/// lexicographic tuple order (for symmetry checks).
std::vector<ScalarGrid> gk_rank4_full(const SymTensorField& f);
/// Planar analogue for a 2D rank-4 field: e_{p1 q1} e_{p2 q2} e_{p3 q3} e_{p4 q4}
/// f_{q1 p2 q3 p4, p1 q2 p3 q4}.
ScalarGrid gk_2d(const SymTensorField& f);
/// gk_2d of du (.) du for a 2D displacement field u (rank 1).
ScalarGrid gk_2d_scalar(const SymTensorField& u);

void write_spectrum_csv(const std::filesystem::path& path, const Spectrum& sp);
Spectrum read_spectrum_csv(const std::filesystem::path& path);

}  // namespace htomo
