#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "htomo/core.hpp"

namespace htomo {

/// Binned pushforward of length: mass[k] is the measure of the preimage of
/// bin k, never normalized to a probability. Bin k is [edges[k], edges[k+1]),
/// except the last bin, which also holds values equal to the final edge.
/// Values outside the edges are tallied in underflow / overflow.
struct Histogram {
  std::vector<double> edges;
  std::vector<double> mass;
  double underflow = 0.0;
  double overflow = 0.0;

  std::size_t bins() const { return mass.size(); }
  double width(std::size_t k) const { return edges[k + 1] - edges[k]; }
  double midpoint(std::size_t k) const { return 0.5 * (edges[k] + edges[k + 1]); }
  double total() const;
  void validate() const;
};

/// Running sum of mass at every edge: values[0] = 0, values[n] = total.
struct CumulativeHistogram {
  std::vector<double> edges;
  std::vector<double> values;
};

/// Bin lookup that is O(1) for uniform edges and exact at bin boundaries.
class BinLocator {
 public:
  explicit BinLocator(std::span<const double> edges);

  static constexpr std::size_t below = static_cast<std::size_t>(-1);
  static constexpr std::size_t above = static_cast<std::size_t>(-2);

  /// Bin index, or `below` / `above` for out-of-range values.
  std::size_t find(double value) const;
  std::size_t bins() const { return edges_.size() - 1; }

 private:
  std::vector<double> edges_;
  bool uniform_ = false;
  double inv_width_ = 0.0;
};

void check_edges(std::span<const double> edges);

/// Uniform edges: n bins spanning [lo, hi].
std::vector<double> uniform_edges(double lo, double hi, std::size_t n);

/// mass[k] = step * (number of values in bin k).
Histogram bin_samples(std::span<const double> values, double step, std::span<const double> edges);
Histogram bin_samples(const RaySamples& samples, std::span<const double> edges);

/// Adds `mass` spread uniformly over [lo, hi] (an atom when lo == hi), by bin
/// overlap; parts outside the edges go to underflow / overflow. `loc` must be
/// built from h.edges.
void spread_uniform(Histogram& h, const BinLocator& loc, double lo, double hi, double mass);

using RealFunction = std::function<double(double)>;

/// Density of the pushforward of length on [lo, hi] under f at a regular value y:
/// sum over preimages x of 1 / |f'(x)|. Preimages and critical points are found
/// by a sign-change scan followed by bisection. Throws SingularInput when y lies
/// within 1e-9 of a critical value.
double analytic_distribution(const RealFunction& f, const RealFunction& fprime, double lo,
                             double hi, double y);

/// Values of f at the interior zeros of f' on [lo, hi].
std::vector<double> analytic_critical_values(const RealFunction& f, const RealFunction& fprime,
                                             double lo, double hi);

CumulativeHistogram cumulative(const Histogram& h);
/// Inverse of cumulative(): first differences.
std::vector<double> difference(const CumulativeHistogram& c);

/// Midpoint-rule moment: sum over bins of midpoint^k * mass.
double moment(const Histogram& h, int k);

/// Bin midpoints of peaks whose mass exceeds threshold * median(mass). A peak is
/// a maximal run of equal bins strictly above both neighbours (zero beyond the
/// ends); adjacent detected runs are merged and reported at the heavier bin.
std::vector<double> critical_values(const Histogram& h, double threshold);

/// CSV header `bin_left,bin_right,mass`.
void write_histogram_csv(const std::filesystem::path& path, const Histogram& h);
Histogram read_histogram_csv(const std::filesystem::path& path);

}  // namespace htomo
