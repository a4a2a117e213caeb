#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "htomo/error.hpp"

namespace htomo {

constexpr double pi = std::numbers::pi;

using Vec3 = std::array<double, 3>;

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double norm(const Vec3& a);
Vec3 normalized(const Vec3& a);

/// Geometry of a uniformly sampled axis-aligned box. Axes beyond ndim have
/// one sample and are ignored. Sample (i, j, k) sits at origin + (i, j, k) * spacing.
struct GridSpec {
  int ndim = 2;
  std::array<std::size_t, 3> dims{1, 1, 1};
  Vec3 origin{0.0, 0.0, 0.0};
  double spacing = 1.0;

  /// n samples per axis covering [lo, hi] on every axis.
  static GridSpec cube(int ndim, std::size_t n, double lo, double hi);
  /// Per-axis box with per-axis sample counts; the implied spacing must agree across axes.
  static GridSpec from_box(std::span<const double> lo, std::span<const double> hi,
                           std::span<const std::size_t> dims);

  std::size_t size() const;
  std::array<std::size_t, 3> strides() const;
  std::size_t index(std::size_t i, std::size_t j = 0, std::size_t k = 0) const;
  std::array<std::size_t, 3> unravel(std::size_t flat) const;
  Vec3 position(std::size_t flat) const;
  double lower(int axis) const { return origin[axis]; }
  double upper(int axis) const;
  void validate() const;

  bool operator==(const GridSpec&) const = default;
};

/// Up to eight (flat index, weight) pairs of a multilinear interpolation.
struct InterpStencil {
  std::array<std::size_t, 8> index{};
  std::array<double, 8> weight{};
  int count = 0;
};

/// Multilinear stencil at x (ndim components used). Empty outside the box.
InterpStencil interp_stencil(const GridSpec& spec, const double* x);

/// Uniformly sampled scalar field, row-major with the last axis fastest.
class ScalarGrid {
 public:
  ScalarGrid() = default;
  explicit ScalarGrid(const GridSpec& spec);
  ScalarGrid(const GridSpec& spec, std::vector<double> values);

  const GridSpec& spec() const { return spec_; }
  int ndim() const { return spec_.ndim; }
  double spacing() const { return spec_.spacing; }
  std::size_t size() const { return values_.size(); }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double at(std::size_t i, std::size_t j = 0, std::size_t k = 0) const {
    return values_[spec_.index(i, j, k)];
  }

  /// Bilinear/trilinear interpolation, zero outside the sampled box.
  double interpolate(const double* x) const;
  double interpolate(const Vec3& x) const { return interpolate(x.data()); }

  double max_abs() const;

  bool operator==(const ScalarGrid& o) const { return spec_ == o.spec_ && values_ == o.values_; }

 private:
  GridSpec spec_{};
  std::vector<double> values_;
};

using Sampler = std::function<double(const Vec3&)>;

/// Evaluate sampler at every grid position. Throws InvalidArgument naming the
/// first sample index whose value is not finite.
ScalarGrid grid_from_function(const GridSpec& spec, const Sampler& sampler);

/// Line in the plane: { x : x . Theta = p }, Theta = (cos theta, sin theta).
/// Points are p * Theta + s * Theta_perp with Theta_perp = (-sin theta, cos theta).
struct Ray {
  double theta = 0.0;
  double p = 0.0;

  std::array<double, 2> direction() const;
  std::array<double, 2> normal() const;
};

/// Line x + s * xi in 3-space. Any multiple of xi may be added to x.
struct Ray3 {
  Vec3 x{0.0, 0.0, 0.0};
  Vec3 xi{0.0, 0.0, 1.0};

  /// Throws InvalidArgument when |xi| differs from 1 by more than tol.
  void check_unit(double tol = 1e-12) const;
};

/// Midpoint samples of a field along the part of a ray inside the grid box.
/// The step is adjusted down so that an integer number of steps spans the chord,
/// hence step * s.size() equals the chord length.
struct RaySamples {
  double step = 0.0;
  std::vector<double> s;
  std::vector<double> values;

  bool empty() const { return s.empty(); }
  double chord() const { return step * static_cast<double>(s.size()); }
  double integral() const;
};

/// Sample positions along a ray clipped to the grid box (positions are ndim-strided).
struct RayPath {
  double step = 0.0;
  std::vector<double> s;
  std::vector<double> points;
};

RayPath ray_path(const GridSpec& spec, const Vec3& base, const Vec3& dir, double step);

/// Requires a 2D grid. step <= 0 selects half the grid spacing.
RaySamples sample_along_ray(const ScalarGrid& grid, const Ray& ray, double step = 0.0);
/// For 3D grids, or 2D grids when xi and x have vanishing third component.
RaySamples sample_along_ray(const ScalarGrid& grid, const Ray3& ray, double step = 0.0);

/// Symmetric tensor of rank 0..4 in 2 or 3 dimensions, one grid per independent
/// component. Components are the sorted index multisets in lexicographic order
/// (rank 2, 3D: 00 01 02 11 12 22).
class SymTensorField {
 public:
  SymTensorField() = default;
  SymTensorField(int rank, const GridSpec& spec);
  SymTensorField(int rank, std::vector<ScalarGrid> components);

  static std::size_t num_components(int rank, int ndim);
  /// Sorted multisets for (rank, ndim), cached.
  static const std::vector<std::vector<int>>& multisets(int rank, int ndim);
  /// Number of distinct orderings of a multiset.
  static double multiplicity(std::span<const int> multiset);
  static std::size_t component_index(int ndim, std::span<const int> idx);

  int rank() const { return rank_; }
  int ndim() const { return spec_.ndim; }
  const GridSpec& spec() const { return spec_; }
  std::size_t num_components() const { return components_.size(); }

  const ScalarGrid& component(std::size_t c) const { return components_[c]; }
  ScalarGrid& component(std::size_t c) { return components_[c]; }
  const ScalarGrid& component(std::span<const int> idx) const {
    return components_[component_index(spec_.ndim, idx)];
  }
  const ScalarGrid& component(std::initializer_list<int> idx) const {
    return component(std::span<const int>(idx.begin(), idx.size()));
  }
  const std::vector<ScalarGrid>& components() const { return components_; }

  double max_abs() const;

 private:
  int rank_ = 0;
  GridSpec spec_{};
  std::vector<ScalarGrid> components_;
};

using WarningHandler = std::function<void(const std::string&)>;
/// Route library warnings (default: one line on stderr). Returns the previous handler.
WarningHandler set_warning_handler(WarningHandler handler);
void warn(const std::string& message);

/// Axis-parallel bounds of a line inside a box: parameter interval [s0, s1].
bool clip_line(const GridSpec& spec, const double* base, const double* dir, double& s0,
               double& s1);

}  // namespace htomo
