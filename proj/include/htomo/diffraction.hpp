#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "htomo/core.hpp"
#include "htomo/distribution.hpp"

namespace htomo {

/// Transverse strain along one ray: a 2x2 symmetric A(s) sampled at s0 + i ds.
/// Between samples the curve is linear. A closed curve joins its last sample
/// back to the first (length n ds); an open one has length (n - 1) ds.
struct TransverseCurve {
  double s0 = 0.0;
  double ds = 0.0;
  bool closed = false;
  std::vector<double> a11, a12, a22;

  std::size_t size() const { return a11.size(); }
  double s(std::size_t i) const { return s0 + static_cast<double>(i) * ds; }
  double length() const;
  /// (u, v, w) = (a11 + a22, a11 - a22, 2 a12).
  Vec3 uvw(std::size_t i) const;
  /// Frequency coordinates (a11, sqrt2 a12, a22).
  Vec3 scaled(std::size_t i) const;
  /// Throws InvalidArgument naming s at the first non-positive-definite sample.
  void validate() const;
};

/// n_theta = (cos^2, sqrt2 sin cos, sin^2): unit normal of the pattern plane.
Vec3 n_theta(double theta);

/// Per-angle q = r^-2 histograms of the curve parameter.
struct DiffractionPattern {
  std::vector<double> thetas;
  std::vector<Histogram> slices;

  const std::vector<double>& q_edges() const { return slices.front().edges; }
  /// The slice with q-bins mapped to r = q^(-1/2), edges ascending.
  Histogram r_slice(std::size_t i) const;
};

/// Slice theta is the pushforward of parameter length under s -> n_theta . scaled(s),
/// exact for the piecewise-linear curve. Per-slice mass (including underflow and
/// overflow) equals curve.length().
DiffractionPattern pattern_from_curve(const TransverseCurve& curve, std::span<const double> thetas,
                                      std::span<const double> q_edges);

/// (1 + cos^2 s, sin s cos s, 1 + sin^2 s) for s = k pi / n, closed. n >= 8.
TransverseCurve a1_curve(std::size_t n);

/// sqrt(2)^-1 * 2 / sqrt(1 - (2 sqrt2 r^-2 - 3)^2) on the support where the
/// argument lies in [-1, 1], zero outside. Throws SingularInput within 1e-9 of
/// a support endpoint and InvalidArgument for r <= 0.
double g1_analytic(double r);
/// Support of g1_analytic: [2^(-1/4), 2^(1/4)].
std::pair<double, double> g1_support();
/// The endpoints 2 / sqrt(2 + 3 sqrt2) and 2 / sqrt(4 + 3 sqrt2) of the closed form
/// as usually quoted; note the first exceeds the second.
std::pair<double, double> g1_quoted_endpoints();

/// Curve A2(s) = q(s) I on [0, length] (open, n samples) whose pattern matches the
/// reference q-histogram at every angle: q(s) is the inverse of the normalized
/// cumulative of the reference, linear within bins. Under/overflow is ignored.
TransverseCurve build_equivalent_uniaxial(const Histogram& reference, std::size_t n, double length = pi);

enum class Marginal { a11, a22 };

/// The theta = 0 (a11) or theta = pi/2 (a22) slice. Throws InvalidArgument if
/// that angle is not sampled.
Histogram marginal_from_pattern(const DiffractionPattern& dp, Marginal which);

struct ConeMembership {
  bool member = false;
  double theta = 0.0;  // in [0, pi), the angle whose n_theta is closest in direction
};

/// Whether alpha is a non-negative multiple of some n_theta: alpha_1, alpha_3 >= 0
/// and alpha_2^2 = 2 alpha_1 alpha_3, both to tol * |alpha|^2.
ConeMembership cone_membership(const Vec3& alpha, double tol = 1e-9);

struct RenderOptions {
  double s_lo = 0.0;
  double s_hi = pi;
  double half_width = 0.0;         // image covers [-hw, hw]^2; <= 0 picks 1.1 x largest radius
  std::size_t angular_samples = 0;  // per ellipse; 0 picks 4 x width
};

/// Superposition of the ellipses y^T A(s) y = 1 for samples with s in
/// [s_lo, s_hi], each with uniform angular density and weight ds, splatted
/// bilinearly onto a width x width image.
ScalarGrid render_ellipse_superposition(const TransverseCurve& curve, std::size_t width,
                                        const RenderOptions& opt = {});

/// sum_k |a_k - b_k| over bins skip .. n-1-skip, divided by the total mass of a.
double slice_l1_mismatch(const Histogram& a, const Histogram& b, std::size_t skip = 0);

/// CSV `theta,q,mass` with q the bin centre (uniform q bins).
void write_pattern_csv(const std::filesystem::path& path, const DiffractionPattern& dp);
DiffractionPattern read_pattern_csv(const std::filesystem::path& path);

}  // namespace htomo
