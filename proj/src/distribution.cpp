#include "htomo/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "htomo/csv.hpp"

namespace htomo {

double Histogram::total() const {
  double t = 0.0;
  for (double m : mass) t += m;
  return t;
}

void Histogram::validate() const {
  check_edges(edges);
  if (mass.size() + 1 != edges.size()) throw InvalidArgument("histogram needs n+1 edges for n bins");
  for (double m : mass)
    if (!(m >= 0.0) || !std::isfinite(m)) throw InvalidArgument("histogram mass must be finite and non-negative");
}

void check_edges(std::span<const double> edges) {
  if (edges.size() < 2) throw InvalidArgument("need at least two bin edges");
  for (std::size_t i = 0; i + 1 < edges.size(); ++i)
    if (!(edges[i] < edges[i + 1])) throw InvalidArgument("bin edges must be strictly increasing");
}

std::vector<double> uniform_edges(double lo, double hi, std::size_t n) {
  if (n == 0 || !(hi > lo)) throw InvalidArgument("uniform edges need n > 0 and hi > lo");
  std::vector<double> e(n + 1);
  for (std::size_t i = 0; i <= n; ++i) e[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n);
  e[n] = hi;
  return e;
}

BinLocator::BinLocator(std::span<const double> edges) : edges_(edges.begin(), edges.end()) {
  check_edges(edges_);
  const double w = (edges_.back() - edges_.front()) / static_cast<double>(bins());
  uniform_ = true;
  for (std::size_t i = 0; i + 1 < edges_.size(); ++i)
    if (std::abs(edges_[i + 1] - edges_[i] - w) > 1e-9 * w) {
      uniform_ = false;
      break;
    }
  inv_width_ = 1.0 / w;
}

std::size_t BinLocator::find(double value) const {
  const std::size_t n = bins();
  if (value < edges_.front()) return below;
  if (value > edges_.back()) return above;
  if (value == edges_.back()) return n - 1;
  std::size_t k;
  if (uniform_) {
    const double t = (value - edges_.front()) * inv_width_;
    k = std::min(n - 1, static_cast<std::size_t>(std::max(0.0, t)));
    while (k > 0 && value < edges_[k]) --k;
    while (k + 1 < n && value >= edges_[k + 1]) ++k;
  } else {
    k = static_cast<std::size_t>(std::upper_bound(edges_.begin(), edges_.end(), value) - edges_.begin()) - 1;
  }
  return k;
}

Histogram bin_samples(std::span<const double> values, double step, std::span<const double> edges) {
  if (edges.empty()) throw InvalidArgument("empty edge list");
  if (!(step > 0.0)) throw InvalidArgument("step must be positive");
  const BinLocator loc(edges);
  Histogram h;
  h.edges.assign(edges.begin(), edges.end());
  std::vector<std::size_t> counts(loc.bins(), 0);
  std::size_t under = 0;
  std::size_t over = 0;
  for (double v : values) {
    const std::size_t k = loc.find(v);
    if (k == BinLocator::below)
      ++under;
    else if (k == BinLocator::above)
      ++over;
    else
      ++counts[k];
  }
  h.mass.resize(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) h.mass[k] = step * static_cast<double>(counts[k]);
  h.underflow = step * static_cast<double>(under);
  h.overflow = step * static_cast<double>(over);
  return h;
}

Histogram bin_samples(const RaySamples& samples, std::span<const double> edges) {
  if (samples.empty()) {
    if (edges.empty()) throw InvalidArgument("empty edge list");
    check_edges(edges);
    Histogram h;
    h.edges.assign(edges.begin(), edges.end());
    h.mass.assign(edges.size() - 1, 0.0);
    return h;
  }
  return bin_samples(samples.values, samples.step, edges);
}

void spread_uniform(Histogram& h, const BinLocator& loc, double lo, double hi, double mass) {
  if (hi < lo) std::swap(lo, hi);
  if (!(hi > lo)) {
    const std::size_t k = loc.find(lo);
    if (k == BinLocator::below)
      h.underflow += mass;
    else if (k == BinLocator::above)
      h.overflow += mass;
    else
      h.mass[k] += mass;
    return;
  }
  const double density = mass / (hi - lo);
  const double first = h.edges.front(), last = h.edges.back();
  if (lo < first) h.underflow += density * (std::min(hi, first) - lo);
  if (hi > last) h.overflow += density * (hi - std::max(lo, last));
  const double a = std::max(lo, first), b = std::min(hi, last);
  if (!(b > a)) return;
  for (std::size_t k = loc.find(a); k < h.mass.size() && h.edges[k] < b; ++k) {
    const double overlap = std::min(b, h.edges[k + 1]) - std::max(a, h.edges[k]);
    if (overlap > 0.0) h.mass[k] += density * overlap;
  }
}

namespace {

constexpr int scan_points = 4096;
constexpr double root_tol = 1e-12;
constexpr double singular_tol = 1e-9;

double bisect(const RealFunction& g, double a, double b, double ga) {
  for (int it = 0; it < 200 && b - a > root_tol; ++it) {
    const double m = 0.5 * (a + b);
    const double gm = g(m);
    if (gm == 0.0) return m;
    if ((gm < 0.0) == (ga < 0.0)) {
      a = m;
      ga = gm;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

std::vector<double> scan_roots(const RealFunction& g, double lo, double hi) {
  std::vector<double> roots;
  double xa = lo;
  double ga = g(xa);
  if (ga == 0.0) roots.push_back(xa);
  for (int i = 1; i <= scan_points; ++i) {
    const double xb = lo + (hi - lo) * i / scan_points;
    const double gb = g(xb);
    if (gb == 0.0) {
      roots.push_back(xb);
    } else if (ga != 0.0 && (ga < 0.0) != (gb < 0.0)) {
      roots.push_back(bisect(g, xa, xb, ga));
    }
    xa = xb;
    ga = gb;
  }
  return roots;
}

}  // namespace

std::vector<double> analytic_critical_values(const RealFunction& f, const RealFunction& fprime,
                                             double lo, double hi) {
  if (!(hi > lo)) throw InvalidArgument("interval must have hi > lo");
  std::vector<double> out;
  for (double xc : scan_roots(fprime, lo, hi)) out.push_back(f(xc));
  return out;
}

double analytic_distribution(const RealFunction& f, const RealFunction& fprime, double lo,
                             double hi, double y) {
  if (!(hi > lo)) throw InvalidArgument("interval must have hi > lo");
  for (double yc : analytic_critical_values(f, fprime, lo, hi))
    if (std::abs(y - yc) <= singular_tol)
      throw SingularInput("y = " + std::to_string(y) + " is a critical value");
  const auto roots = scan_roots([&](double x) { return f(x) - y; }, lo, hi);
  double density = 0.0;
  for (double x : roots) {
    const double d = std::abs(fprime(x));
    if (d == 0.0) throw SingularInput("vanishing derivative at a preimage");
    density += 1.0 / d;
  }
  return density;
}

CumulativeHistogram cumulative(const Histogram& h) {
  h.validate();
  CumulativeHistogram c;
  c.edges = h.edges;
  c.values.resize(h.edges.size());
  c.values[0] = 0.0;
  for (std::size_t k = 0; k < h.mass.size(); ++k) c.values[k + 1] = c.values[k] + h.mass[k];
  return c;
}

std::vector<double> difference(const CumulativeHistogram& c) {
  std::vector<double> m(c.values.size() > 0 ? c.values.size() - 1 : 0);
  for (std::size_t k = 0; k < m.size(); ++k) m[k] = c.values[k + 1] - c.values[k];
  return m;
}

double moment(const Histogram& h, int k) {
  if (k < 0) throw InvalidArgument("moment order must be non-negative");
  double sum = 0.0;
  for (std::size_t b = 0; b < h.mass.size(); ++b) {
    if (h.mass[b] == 0.0) continue;
    sum += std::pow(h.midpoint(b), k) * h.mass[b];
  }
  return sum;
}

std::vector<double> critical_values(const Histogram& h, double threshold) {
  h.validate();
  const std::size_t n = h.bins();
  std::vector<double> sorted = h.mass;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n / 2), sorted.end());
  double median = sorted[n / 2];
  if (n % 2 == 0) {
    const double lower = *std::max_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n / 2));
    median = 0.5 * (median + lower);
  }
  const double floor_mass = median * threshold;
  auto at = [&](std::ptrdiff_t i) {
    return (i < 0 || i >= static_cast<std::ptrdiff_t>(n)) ? 0.0 : h.mass[static_cast<std::size_t>(i)];
  };

  std::vector<bool> flagged(n, false);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && h.mass[j + 1] == h.mass[i]) ++j;
    const double m = h.mass[i];
    const auto left = static_cast<std::ptrdiff_t>(i) - 1;
    const auto right = static_cast<std::ptrdiff_t>(j) + 1;
    if (m > floor_mass && m > at(left) && m > at(right))
      for (std::size_t k = i; k <= j; ++k) flagged[k] = true;
    i = j + 1;
  }

  std::vector<double> out;
  i = 0;
  while (i < n) {
    if (!flagged[i]) {
      ++i;
      continue;
    }
    std::size_t best = i;
    std::size_t j = i;
    while (j < n && flagged[j]) {
      if (h.mass[j] > h.mass[best]) best = j;
      ++j;
    }
    // Adjacent peak runs separated by a single unflagged bin above the floor merge too.
    while (j + 1 < n && !flagged[j] && h.mass[j] > floor_mass && flagged[j + 1]) {
      ++j;
      while (j < n && flagged[j]) {
        if (h.mass[j] > h.mass[best]) best = j;
        ++j;
      }
    }
    out.push_back(h.midpoint(best));
    i = j;
  }
  return out;
}

void write_histogram_csv(const std::filesystem::path& path, const Histogram& h) {
  CsvWriter w(path, "bin_left,bin_right,mass");
  for (std::size_t k = 0; k < h.mass.size(); ++k) w.row(h.edges[k], h.edges[k + 1], h.mass[k]);
  w.close();
}

Histogram read_histogram_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const auto cl = t.column("bin_left");
  const auto cr = t.column("bin_right");
  const auto cm = t.column("mass");
  Histogram h;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (r == 0) h.edges.push_back(t.rows[r][cl]);
    else if (t.rows[r][cl] != h.edges.back())
      throw FormatError(FormatErrc::invalid_value, "histogram bins are not contiguous");
    h.edges.push_back(t.rows[r][cr]);
    h.mass.push_back(t.rows[r][cm]);
  }
  h.validate();
  return h;
}

}  // namespace htomo
