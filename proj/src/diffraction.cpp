#include "htomo/diffraction.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "htomo/csv.hpp"
#include "htomo/parallel.hpp"

namespace htomo {

namespace {

const double sqrt2 = std::sqrt(2.0);

}  // namespace

double TransverseCurve::length() const {
  if (size() == 0) return 0.0;
  return (closed ? static_cast<double>(size()) : static_cast<double>(size() - 1)) * ds;
}

Vec3 TransverseCurve::uvw(std::size_t i) const { return {a11[i] + a22[i], a11[i] - a22[i], 2.0 * a12[i]}; }

Vec3 TransverseCurve::scaled(std::size_t i) const { return {a11[i], sqrt2 * a12[i], a22[i]}; }

void TransverseCurve::validate() const {
  if (a12.size() != size() || a22.size() != size()) throw InvalidArgument("curve component lengths differ");
  if (size() > 0 && !(ds > 0.0)) throw InvalidArgument("curve spacing must be positive");
  for (std::size_t i = 0; i < size(); ++i) {
    if (!(a11[i] > 0.0) || !(a11[i] * a22[i] - a12[i] * a12[i] > 0.0))
      throw InvalidArgument("A(s) is not positive definite at s = " + std::to_string(s(i)));
  }
}

Vec3 n_theta(double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return {c * c, sqrt2 * s * c, s * s};
}

Histogram DiffractionPattern::r_slice(std::size_t i) const {
  const Histogram& h = slices.at(i);
  if (!(h.edges.front() > 0.0)) throw InvalidArgument("r view needs positive q edges");
  Histogram r;
  r.edges.resize(h.edges.size());
  r.mass.resize(h.mass.size());
  const std::size_t n = h.mass.size();
  for (std::size_t k = 0; k < h.edges.size(); ++k) r.edges[k] = 1.0 / std::sqrt(h.edges[n - k]);
  for (std::size_t k = 0; k < n; ++k) r.mass[k] = h.mass[n - 1 - k];
  r.underflow = h.overflow;
  r.overflow = h.underflow;
  return r;
}

DiffractionPattern pattern_from_curve(const TransverseCurve& curve, std::span<const double> thetas,
                                      std::span<const double> q_edges) {
  curve.validate();
  check_edges(q_edges);
  if (thetas.empty()) throw InvalidArgument("need at least one angle");
  DiffractionPattern dp;
  dp.thetas.assign(thetas.begin(), thetas.end());
  dp.slices.resize(thetas.size());
  const BinLocator loc(q_edges);
  const std::size_t n = curve.size();
  const std::size_t segments = n == 0 ? 0 : (curve.closed ? n : n - 1);
  parallel_for(thetas.size(), [&](std::size_t t) {
    Histogram& h = dp.slices[t];
    h.edges.assign(q_edges.begin(), q_edges.end());
    h.mass.assign(q_edges.size() - 1, 0.0);
    const Vec3 nt = n_theta(thetas[t]);
    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i) q[i] = dot(nt, curve.scaled(i));
    for (std::size_t i = 0; i < segments; ++i) spread_uniform(h, loc, q[i], q[(i + 1) % n], curve.ds);
  });
  return dp;
}

TransverseCurve a1_curve(std::size_t n) {
  if (n < 8) throw InvalidArgument("a1_curve needs at least 8 samples");
  TransverseCurve c;
  c.s0 = 0.0;
  c.ds = pi / static_cast<double>(n);
  c.closed = true;
  c.a11.resize(n);
  c.a12.resize(n);
  c.a22.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = c.s(i), cs = std::cos(s), sn = std::sin(s);
    c.a11[i] = 1.0 + cs * cs;
    c.a12[i] = sn * cs;
    c.a22[i] = 1.0 + sn * sn;
  }
  return c;
}

std::pair<double, double> g1_support() { return {std::pow(2.0, -0.25), std::pow(2.0, 0.25)}; }

std::pair<double, double> g1_quoted_endpoints() {
  return {2.0 / std::sqrt(2.0 + 3.0 * sqrt2), 2.0 / std::sqrt(4.0 + 3.0 * sqrt2)};
}

double g1_analytic(double r) {
  if (!(r > 0.0)) throw InvalidArgument("g1 needs r > 0");
  const auto [lo, hi] = g1_support();
  if (std::abs(r - lo) <= 1e-9 || std::abs(r - hi) <= 1e-9)
    throw SingularInput("g1 is singular at the support endpoint r = " + std::to_string(r));
  if (r < lo || r > hi) return 0.0;
  const double p = 2.0 * sqrt2 / (r * r) - 3.0;
  return (1.0 / sqrt2) * 2.0 / std::sqrt(1.0 - p * p);
}

TransverseCurve build_equivalent_uniaxial(const Histogram& reference, std::size_t n, double length) {
  reference.validate();
  if (n < 2) throw InvalidArgument("need at least two curve samples");
  if (!(length > 0.0)) throw InvalidArgument("curve length must be positive");
  const double total = reference.total();
  if (!(total > 0.0)) throw InvalidArgument("reference pattern has zero mass");
  const std::size_t bins = reference.bins();
  std::vector<double> cum(bins + 1, 0.0);
  for (std::size_t k = 0; k < bins; ++k) cum[k + 1] = cum[k] + reference.mass[k];

  TransverseCurve c;
  c.s0 = 0.0;
  c.ds = length / static_cast<double>(n - 1);
  c.closed = false;
  c.a11.resize(n);
  c.a12.assign(n, 0.0);
  c.a22.resize(n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double target = total * static_cast<double>(i) / static_cast<double>(n - 1);
    // First bin with positive mass whose cumulative reaches the target.
    while (k + 1 < bins && (reference.mass[k] == 0.0 || cum[k + 1] < target)) ++k;
    double f = reference.mass[k] > 0.0 ? (target - cum[k]) / reference.mass[k] : 0.0;
    f = std::clamp(f, 0.0, 1.0);
    const double q = reference.edges[k] + f * reference.width(k);
    c.a11[i] = q;
    c.a22[i] = q;
  }
  return c;
}

Histogram marginal_from_pattern(const DiffractionPattern& dp, Marginal which) {
  const double want = which == Marginal::a11 ? 0.0 : pi / 2;
  for (std::size_t t = 0; t < dp.thetas.size(); ++t)
    if (std::abs(dp.thetas[t] - want) <= 1e-12) return dp.slices[t];
  throw InvalidArgument(std::string("pattern has no slice at theta = ") + (which == Marginal::a11 ? "0" : "pi/2"));
}

ConeMembership cone_membership(const Vec3& alpha, double tol) {
  const double n2 = dot(alpha, alpha);
  if (!(n2 > 0.0)) throw InvalidArgument("cone membership of the zero vector");
  ConeMembership out;
  const double slack = tol * n2;
  out.member = alpha[0] >= -slack && alpha[2] >= -slack &&
               std::abs(alpha[1] * alpha[1] - 2.0 * alpha[0] * alpha[2]) <= slack;
  double theta = std::atan2(std::sqrt(std::max(alpha[2], 0.0)), std::sqrt(std::max(alpha[0], 0.0)));
  if (alpha[1] < 0.0) theta = pi - theta;
  if (theta >= pi) theta -= pi;
  out.theta = theta;
  return out;
}

ScalarGrid render_ellipse_superposition(const TransverseCurve& curve, std::size_t width, const RenderOptions& opt) {
  curve.validate();
  if (width < 2) throw InvalidArgument("image width must be at least 2");
  double hw = opt.half_width;
  if (!(hw > 0.0)) {
    double rmax = 0.0;
    for (std::size_t i = 0; i < curve.size(); ++i) {
      // Largest radius is 1 / sqrt(smallest eigenvalue).
      const double tr = curve.a11[i] + curve.a22[i];
      const double det = curve.a11[i] * curve.a22[i] - curve.a12[i] * curve.a12[i];
      const double lmin = 0.5 * tr - std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
      rmax = std::max(rmax, 1.0 / std::sqrt(lmin));
    }
    hw = rmax > 0.0 ? 1.1 * rmax : 1.0;
  }
  ScalarGrid img(GridSpec::cube(2, width, -hw, hw));
  const std::size_t m = opt.angular_samples > 0 ? opt.angular_samples : 4 * width;
  const double h = img.spacing();
  std::vector<double> cs(m), sn(m);
  for (std::size_t j = 0; j < m; ++j) {
    const double phi = 2.0 * pi * (static_cast<double>(j) + 0.5) / static_cast<double>(m);
    cs[j] = std::cos(phi);
    sn[j] = std::sin(phi);
  }
  const double w = curve.ds / static_cast<double>(m);
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const double s = curve.s(i);
    if (s < opt.s_lo || s > opt.s_hi) continue;
    for (std::size_t j = 0; j < m; ++j) {
      const double quad = curve.a11[i] * cs[j] * cs[j] + 2.0 * curve.a12[i] * cs[j] * sn[j] + curve.a22[i] * sn[j] * sn[j];
      const double rho = 1.0 / std::sqrt(quad);
      const double fx = (rho * cs[j] + hw) / h, fy = (rho * sn[j] + hw) / h;
      if (fx < 0.0 || fy < 0.0 || fx > static_cast<double>(width - 1) || fy > static_cast<double>(width - 1)) continue;
      const auto ix = std::min(static_cast<std::size_t>(fx), width - 2);
      const auto iy = std::min(static_cast<std::size_t>(fy), width - 2);
      const double tx = fx - static_cast<double>(ix), ty = fy - static_cast<double>(iy);
      img[img.spec().index(ix, iy)] += w * (1 - tx) * (1 - ty);
      img[img.spec().index(ix + 1, iy)] += w * tx * (1 - ty);
      img[img.spec().index(ix, iy + 1)] += w * (1 - tx) * ty;
      img[img.spec().index(ix + 1, iy + 1)] += w * tx * ty;
    }
  }
  return img;
}

double slice_l1_mismatch(const Histogram& a, const Histogram& b, std::size_t skip) {
  if (a.edges != b.edges) throw InvalidArgument("slices have different bins");
  const double total = a.total();
  if (!(total > 0.0)) throw InvalidArgument("reference slice has zero mass");
  double diff = 0.0;
  for (std::size_t k = skip; k + skip < a.bins(); ++k) diff += std::abs(a.mass[k] - b.mass[k]);
  return diff / total;
}

void write_pattern_csv(const std::filesystem::path& path, const DiffractionPattern& dp) {
  CsvWriter w(path, "theta,q,mass");
  for (std::size_t t = 0; t < dp.thetas.size(); ++t) {
    const Histogram& h = dp.slices[t];
    for (std::size_t k = 0; k < h.bins(); ++k) w.row(dp.thetas[t], h.midpoint(k), h.mass[k]);
  }
  w.close();
}

DiffractionPattern read_pattern_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const auto ct = t.column("theta");
  const auto cq = t.column("q");
  const auto cm = t.column("mass");
  DiffractionPattern dp;
  std::vector<double> centres;
  for (const auto& row : t.rows) {
    if (dp.thetas.empty() || row[ct] != dp.thetas.back()) dp.thetas.push_back(row[ct]);
    if (dp.thetas.size() == 1) centres.push_back(row[cq]);
  }
  if (centres.size() < 2 || t.rows.size() != dp.thetas.size() * centres.size())
    throw FormatError(FormatErrc::invalid_value, "pattern CSV is not a full theta x q table");
  const double d = (centres.back() - centres.front()) / static_cast<double>(centres.size() - 1);
  std::vector<double> edges(centres.size() + 1);
  for (std::size_t k = 0; k < edges.size(); ++k) edges[k] = centres.front() + (static_cast<double>(k) - 0.5) * d;
  dp.slices.resize(dp.thetas.size());
  for (std::size_t s = 0; s < dp.thetas.size(); ++s) {
    dp.slices[s].edges = edges;
    dp.slices[s].mass.resize(centres.size());
    for (std::size_t k = 0; k < centres.size(); ++k) {
      const auto& row = t.rows[s * centres.size() + k];
      if (std::abs(row[cq] - centres[k]) > 1e-9 * std::max(1.0, std::abs(d)))
        throw FormatError(FormatErrc::invalid_value, "pattern CSV q values differ between angles");
      dp.slices[s].mass[k] = row[cm];
    }
    dp.slices[s].validate();
  }
  return dp;
}

}  // namespace htomo
