#include "htomo/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>
#include <string>

namespace htomo {

const char* to_string(FormatErrc code) {
  switch (code) {
    case FormatErrc::bad_magic: return "bad magic";
    case FormatErrc::unsupported_version: return "unsupported version";
    case FormatErrc::bad_ndim: return "bad ndim";
    case FormatErrc::truncated: return "truncated payload";
    case FormatErrc::dim_overflow: return "dimension overflow";
    case FormatErrc::invalid_value: return "invalid value";
    case FormatErrc::io_failure: return "i/o failure";
  }
  return "unknown";
}

double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

Vec3 normalized(const Vec3& a) {
  const double n = norm(a);
  if (n == 0.0) throw InvalidArgument("cannot normalize a zero vector");
  return {a[0] / n, a[1] / n, a[2] / n};
}

// ---------------------------------------------------------------------------
// GridSpec

GridSpec GridSpec::cube(int ndim, std::size_t n, double lo, double hi) {
  GridSpec g;
  g.ndim = ndim;
  for (int a = 0; a < 3; ++a) {
    g.dims[a] = a < ndim ? n : 1;
    g.origin[a] = a < ndim ? lo : 0.0;
  }
  g.spacing = n > 1 ? (hi - lo) / static_cast<double>(n - 1) : 0.0;
  g.validate();
  return g;
}

GridSpec GridSpec::from_box(std::span<const double> lo, std::span<const double> hi,
                            std::span<const std::size_t> dims) {
  if (lo.size() != hi.size() || lo.size() != dims.size() || lo.empty() || lo.size() > 3)
    throw InvalidArgument("box bounds and dims must have matching length 1..3");
  GridSpec g;
  g.ndim = static_cast<int>(lo.size());
  for (int a = 0; a < g.ndim; ++a) {
    if (dims[a] < 2) throw InvalidArgument("need at least 2 samples per axis");
    g.dims[a] = dims[a];
    g.origin[a] = lo[a];
  }
  g.spacing = (hi[0] - lo[0]) / static_cast<double>(dims[0] - 1);
  for (int a = 1; a < g.ndim; ++a) {
    const double h = (hi[a] - lo[a]) / static_cast<double>(dims[a] - 1);
    if (std::abs(h - g.spacing) > 1e-12 * std::abs(g.spacing))
      throw InvalidArgument("box extents imply non-uniform spacing");
  }
  g.validate();
  return g;
}

std::size_t GridSpec::size() const { return dims[0] * dims[1] * dims[2]; }

std::array<std::size_t, 3> GridSpec::strides() const {
  return {dims[1] * dims[2], dims[2], 1};
}

std::size_t GridSpec::index(std::size_t i, std::size_t j, std::size_t k) const {
  return (i * dims[1] + j) * dims[2] + k;
}

std::array<std::size_t, 3> GridSpec::unravel(std::size_t flat) const {
  const std::size_t k = flat % dims[2];
  flat /= dims[2];
  const std::size_t j = flat % dims[1];
  return {flat / dims[1], j, k};
}

Vec3 GridSpec::position(std::size_t flat) const {
  const auto ijk = unravel(flat);
  Vec3 x{0.0, 0.0, 0.0};
  for (int a = 0; a < ndim; ++a) x[a] = origin[a] + static_cast<double>(ijk[a]) * spacing;
  return x;
}

double GridSpec::upper(int axis) const {
  return origin[axis] + static_cast<double>(dims[axis] - 1) * spacing;
}

void GridSpec::validate() const {
  if (ndim < 1 || ndim > 3) throw InvalidArgument("grid ndim must be 1, 2 or 3");
  for (int a = 0; a < 3; ++a) {
    if (a < ndim && dims[a] < 2) throw InvalidArgument("need at least 2 samples per axis");
    if (a >= ndim && dims[a] != 1) throw InvalidArgument("unused axes must have one sample");
    if (!std::isfinite(origin[a])) throw InvalidArgument("grid origin must be finite");
  }
  if (!(spacing > 0.0) || !std::isfinite(spacing))
    throw InvalidArgument("grid spacing must be positive and finite");
}

// ---------------------------------------------------------------------------
// Interpolation

InterpStencil interp_stencil(const GridSpec& spec, const double* x) {
  InterpStencil st;
  std::array<std::size_t, 3> base{0, 0, 0};
  std::array<double, 3> frac{0.0, 0.0, 0.0};
  const double slack = 1e-12 * spec.spacing;
  for (int a = 0; a < spec.ndim; ++a) {
    const double t = (x[a] - spec.origin[a]) / spec.spacing;
    const double tmax = static_cast<double>(spec.dims[a] - 1);
    if (t < -slack || t > tmax + slack || !std::isfinite(t)) return st;
    const double tc = std::clamp(t, 0.0, tmax);
    std::size_t i = static_cast<std::size_t>(std::floor(tc));
    if (i >= spec.dims[a] - 1) i = spec.dims[a] - 2;
    base[a] = i;
    frac[a] = tc - static_cast<double>(i);
  }
  const auto stride = spec.strides();
  const int corners = 1 << spec.ndim;
  for (int c = 0; c < corners; ++c) {
    double w = 1.0;
    std::size_t flat = 0;
    for (int a = 0; a < spec.ndim; ++a) {
      const int bit = (c >> a) & 1;
      w *= bit ? frac[a] : 1.0 - frac[a];
      flat += (base[a] + static_cast<std::size_t>(bit)) * stride[a];
    }
    st.index[st.count] = flat;
    st.weight[st.count] = w;
    ++st.count;
  }
  return st;
}

ScalarGrid::ScalarGrid(const GridSpec& spec) : spec_(spec) {
  spec_.validate();
  values_.assign(spec_.size(), 0.0);
}

ScalarGrid::ScalarGrid(const GridSpec& spec, std::vector<double> values)
    : spec_(spec), values_(std::move(values)) {
  spec_.validate();
  if (values_.size() != spec_.size())
    throw InvalidArgument("value count does not match grid dims");
  for (std::size_t i = 0; i < values_.size(); ++i)
    if (!std::isfinite(values_[i]))
      throw InvalidArgument("non-finite grid value at index " + std::to_string(i));
}

double ScalarGrid::interpolate(const double* x) const {
  const InterpStencil st = interp_stencil(spec_, x);
  double v = 0.0;
  for (int c = 0; c < st.count; ++c) v += st.weight[c] * values_[st.index[c]];
  return v;
}

double ScalarGrid::max_abs() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

ScalarGrid grid_from_function(const GridSpec& spec, const Sampler& sampler) {
  spec.validate();
  std::vector<double> values(spec.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = sampler(spec.position(i));
    if (!std::isfinite(v))
      throw InvalidArgument("sampler returned a non-finite value at sample index " +
                            std::to_string(i));
    values[i] = v;
  }
  return ScalarGrid(spec, std::move(values));
}

// ---------------------------------------------------------------------------
// Rays

std::array<double, 2> Ray::direction() const { return {-std::sin(theta), std::cos(theta)}; }
std::array<double, 2> Ray::normal() const { return {std::cos(theta), std::sin(theta)}; }

void Ray3::check_unit(double tol) const {
  if (std::abs(norm(xi) - 1.0) > tol) throw InvalidArgument("ray direction is not a unit vector");
}

double RaySamples::integral() const {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum * step;
}

bool clip_line(const GridSpec& spec, const double* base, const double* dir, double& s0,
               double& s1) {
  s0 = -std::numeric_limits<double>::infinity();
  s1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < spec.ndim; ++a) {
    const double lo = spec.lower(a);
    const double hi = spec.upper(a);
    if (std::abs(dir[a]) < 1e-15) {
      if (base[a] < lo || base[a] > hi) return false;
      continue;
    }
    double t0 = (lo - base[a]) / dir[a];
    double t1 = (hi - base[a]) / dir[a];
    if (t0 > t1) std::swap(t0, t1);
    s0 = std::max(s0, t0);
    s1 = std::min(s1, t1);
  }
  return s1 > s0;
}

RayPath ray_path(const GridSpec& spec, const Vec3& base, const Vec3& dir, double step) {
  if (step <= 0.0) step = 0.5 * spec.spacing;
  RayPath path;
  double s0 = 0.0;
  double s1 = 0.0;
  if (!clip_line(spec, base.data(), dir.data(), s0, s1)) return path;
  const double chord = s1 - s0;
  const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(chord / step - 1e-9)));
  path.step = chord / static_cast<double>(n);
  path.s.resize(n);
  path.points.resize(n * static_cast<std::size_t>(spec.ndim));
  for (std::size_t i = 0; i < n; ++i) {
    const double s = s0 + (static_cast<double>(i) + 0.5) * path.step;
    path.s[i] = s;
    for (int a = 0; a < spec.ndim; ++a)
      path.points[i * static_cast<std::size_t>(spec.ndim) + static_cast<std::size_t>(a)] =
          base[a] + s * dir[a];
  }
  return path;
}

namespace {

RaySamples sample_path(const ScalarGrid& grid, const RayPath& path) {
  RaySamples out;
  out.step = path.step;
  out.s = path.s;
  out.values.resize(path.s.size());
  const auto nd = static_cast<std::size_t>(grid.ndim());
  for (std::size_t i = 0; i < path.s.size(); ++i)
    out.values[i] = grid.interpolate(&path.points[i * nd]);
  return out;
}

}  // namespace

RaySamples sample_along_ray(const ScalarGrid& grid, const Ray& ray, double step) {
  if (grid.ndim() != 2) throw InvalidArgument("planar rays need a 2D grid");
  const auto n = ray.normal();
  const auto d = ray.direction();
  const Vec3 base{ray.p * n[0], ray.p * n[1], 0.0};
  return sample_path(grid, ray_path(grid.spec(), base, {d[0], d[1], 0.0}, step));
}

RaySamples sample_along_ray(const ScalarGrid& grid, const Ray3& ray, double step) {
  ray.check_unit(1e-9);
  if (grid.ndim() == 2 && (ray.xi[2] != 0.0 || ray.x[2] != 0.0))
    throw InvalidArgument("3D ray leaves the plane of a 2D grid");
  if (grid.ndim() == 1) throw InvalidArgument("rays need a 2D or 3D grid");
  return sample_path(grid, ray_path(grid.spec(), ray.x, ray.xi, step));
}

// ---------------------------------------------------------------------------
// SymTensorField

namespace {

void enumerate_multisets(int rank, int ndim, int start, std::vector<int>& cur,
                         std::vector<std::vector<int>>& out) {
  if (static_cast<int>(cur.size()) == rank) {
    out.push_back(cur);
    return;
  }
  for (int i = start; i < ndim; ++i) {
    cur.push_back(i);
    enumerate_multisets(rank, ndim, i, cur, out);
    cur.pop_back();
  }
}

struct MultisetTable {
  std::vector<std::vector<int>> sets;
  std::vector<std::size_t> lookup;  // base-ndim code of sorted tuple -> component
};

const MultisetTable& table(int rank, int ndim) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, MultisetTable> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto [it, inserted] = cache.try_emplace({rank, ndim});
  if (inserted) {
    std::vector<int> cur;
    enumerate_multisets(rank, ndim, 0, cur, it->second.sets);
    std::size_t codes = 1;
    for (int r = 0; r < rank; ++r) codes *= static_cast<std::size_t>(ndim);
    it->second.lookup.assign(codes, 0);
    for (std::size_t c = 0; c < it->second.sets.size(); ++c) {
      std::size_t code = 0;
      for (int v : it->second.sets[c]) code = code * static_cast<std::size_t>(ndim) + static_cast<std::size_t>(v);
      it->second.lookup[code] = c;
    }
  }
  return it->second;
}

void check_rank(int rank, int ndim) {
  if (rank < 0 || rank > 4) throw InvalidArgument("tensor rank must be 0..4");
  if (ndim < 2 || ndim > 3) throw InvalidArgument("tensor fields need ndim 2 or 3");
}

}  // namespace

std::size_t SymTensorField::num_components(int rank, int ndim) {
  check_rank(rank, ndim);
  return table(rank, ndim).sets.size();
}

const std::vector<std::vector<int>>& SymTensorField::multisets(int rank, int ndim) {
  check_rank(rank, ndim);
  return table(rank, ndim).sets;
}

double SymTensorField::multiplicity(std::span<const int> multiset) {
  std::array<int, 3> counts{0, 0, 0};
  for (int v : multiset) ++counts[static_cast<std::size_t>(v)];
  auto fact = [](int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
  };
  return fact(static_cast<int>(multiset.size())) /
         (fact(counts[0]) * fact(counts[1]) * fact(counts[2]));
}

std::size_t SymTensorField::component_index(int ndim, std::span<const int> idx) {
  std::array<int, 4> sorted{};
  const int rank = static_cast<int>(idx.size());
  check_rank(rank, ndim);
  std::copy(idx.begin(), idx.end(), sorted.begin());
  std::sort(sorted.begin(), sorted.begin() + rank);
  std::size_t code = 0;
  for (int r = 0; r < rank; ++r) {
    if (sorted[r] < 0 || sorted[r] >= ndim) throw InvalidArgument("tensor index out of range");
    code = code * static_cast<std::size_t>(ndim) + static_cast<std::size_t>(sorted[r]);
  }
  return table(rank, ndim).lookup[code];
}

SymTensorField::SymTensorField(int rank, const GridSpec& spec) : rank_(rank), spec_(spec) {
  check_rank(rank, spec.ndim);
  components_.assign(num_components(rank, spec.ndim), ScalarGrid(spec));
}

SymTensorField::SymTensorField(int rank, std::vector<ScalarGrid> components)
    : rank_(rank), components_(std::move(components)) {
  if (components_.empty()) throw InvalidArgument("tensor field needs components");
  spec_ = components_.front().spec();
  check_rank(rank, spec_.ndim);
  if (components_.size() != num_components(rank, spec_.ndim))
    throw InvalidArgument("wrong number of symmetric components");
  for (const auto& c : components_)
    if (!(c.spec() == spec_)) throw InvalidArgument("component grids must share geometry");
}

double SymTensorField::max_abs() const {
  double m = 0.0;
  for (const auto& c : components_) m = std::max(m, c.max_abs());
  return m;
}

namespace {

std::mutex warning_mutex;
WarningHandler warning_handler = [](const std::string& m) { std::fprintf(stderr, "warning: %s\n", m.c_str()); };

}  // namespace

WarningHandler set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(warning_mutex);
  std::swap(handler, warning_handler);
  return handler;
}

void warn(const std::string& message) {
  std::lock_guard lock(warning_mutex);
  if (warning_handler) warning_handler(message);
}

}  // namespace htomo
