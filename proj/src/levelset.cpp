#include "htomo/levelset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "htomo/csv.hpp"
#include "htomo/grid_io.hpp"
#include "htomo/parallel.hpp"

namespace htomo {

void LevelStack::validate() const {
  if (levels.size() != masks.size()) throw InvalidArgument("level stack needs one mask per level");
  for (std::size_t k = 1; k < levels.size(); ++k)
    if (!(levels[k] > levels[k - 1])) throw InvalidArgument("levels must be strictly ascending");
  for (std::size_t k = 1; k < masks.size(); ++k)
    if (!(masks[k].spec() == masks[0].spec())) throw InvalidArgument("level masks must share one grid");
}

namespace {

void check_level(const HistogramSinogram& hs, std::size_t k) {
  if (k >= hs.bins())
    throw InvalidArgument("level index " + std::to_string(k) + " out of range for " + std::to_string(hs.bins()) +
                          " bins");
}

}  // namespace

Sinogram sublevel_sinogram(const HistogramSinogram& hs, std::size_t k) {
  check_level(hs, k);
  Sinogram s(hs.thetas, hs.ps);
  const std::size_t nb = hs.bins();
  for (std::size_t r = 0; r < s.values.size(); ++r) {
    double acc = hs.underflow[r];
    for (std::size_t b = 0; b <= k; ++b) acc += hs.mass[r * nb + b];
    s.values[r] = acc;
  }
  return s;
}

Sinogram superlevel_sinogram(const HistogramSinogram& hs, std::size_t k) {
  check_level(hs, k);
  Sinogram s(hs.thetas, hs.ps);
  const std::size_t nb = hs.bins();
  for (std::size_t r = 0; r < s.values.size(); ++r) {
    double acc = hs.overflow[r];
    for (std::size_t b = nb; b-- > k + 1;) acc += hs.mass[r * nb + b];
    s.values[r] = acc;
  }
  return s;
}

Sinogram chord_sinogram(const HistogramSinogram& hs) {
  Sinogram s(hs.thetas, hs.ps);
  const std::size_t nb = hs.bins();
  for (std::size_t r = 0; r < s.values.size(); ++r) {
    double acc = hs.underflow[r] + hs.overflow[r];
    for (std::size_t b = 0; b < nb; ++b) acc += hs.mass[r * nb + b];
    s.values[r] = acc;
  }
  return s;
}

ScalarGrid reconstruct_level(const Sinogram& sino, const GridSpec& out) {
  ScalarGrid g = fbp(sino, out);
  for (double& v : g.values()) v = v >= 0.5 ? 1.0 : 0.0;
  return g;
}

LevelStack reconstruct_stack(const HistogramSinogram& hs, const GridSpec& out) {
  LevelStack stack;
  const std::size_t nb = hs.bins();
  stack.levels.assign(hs.edges.begin() + 1, hs.edges.end());
  stack.masks.resize(nb);
  for (std::size_t k = 0; k < nb; ++k) {
    ScalarGrid above = reconstruct_level(superlevel_sinogram(hs, k), out);
    for (double& v : above.values()) v = 1.0 - v;
    stack.masks[k] = std::move(above);
  }
  enforce_nesting(stack);
  return stack;
}

std::size_t enforce_nesting(LevelStack& stack) {
  stack.validate();
  std::size_t changed = 0;
  for (std::size_t k = 1; k < stack.masks.size(); ++k) {
    auto lower = stack.masks[k - 1].values();
    auto upper = stack.masks[k].values();
    for (std::size_t i = 0; i < upper.size(); ++i)
      if (lower[i] > upper[i]) {
        upper[i] = lower[i];
        ++changed;
      }
  }
  return changed;
}

ScalarGrid assemble(const LevelStack& stack, double y_min) {
  stack.validate();
  if (stack.masks.empty()) throw InvalidArgument("cannot assemble an empty level stack");
  if (!(stack.levels.front() >= y_min)) throw InvalidArgument("y_min must not exceed the lowest level");
  LevelStack clean = stack;
  const std::size_t fixed = enforce_nesting(clean);
  if (fixed > 0) warn("level stack was not nested; " + std::to_string(fixed) + " samples repaired");
  ScalarGrid f(clean.masks[0].spec());
  auto out = f.values();
  std::fill(out.begin(), out.end(), y_min);
  double prev = y_min;
  for (std::size_t k = 0; k < clean.size(); ++k) {
    const double dy = clean.levels[k] - prev;
    prev = clean.levels[k];
    const auto m = clean.masks[k].values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += dy * (1.0 - m[i]);
  }
  return f;
}

namespace {

double median_nonzero(std::span<const double> mass) {
  std::vector<double> nz;
  for (double m : mass)
    if (m > 0.0) nz.push_back(m);
  if (nz.empty()) return 0.0;
  const auto mid = nz.begin() + static_cast<std::ptrdiff_t>(nz.size() / 2);
  std::nth_element(nz.begin(), mid, nz.end());
  return *mid;
}

bool peaks_near(std::span<const double> mass, std::size_t centre, int window, double ratio) {
  const auto n = static_cast<std::ptrdiff_t>(mass.size());
  auto at = [&](std::ptrdiff_t i) { return i < 0 || i >= n ? 0.0 : mass[static_cast<std::size_t>(i)]; };
  const auto c = static_cast<std::ptrdiff_t>(centre);
  double best = 0.0;
  for (std::ptrdiff_t k = c - window; k <= c + window; ++k) best = std::max(best, at(k));
  return best > ratio * median_nonzero(mass) && best >= at(c - window - 1) && best >= at(c + window + 1);
}

}  // namespace

ScalarGrid critical_point_score(const HistogramSinogram& hs, double y_c, const GridSpec& out,
                                const CriticalPointOptions& opt) {
  if (out.ndim != 2) throw InvalidArgument("critical point search needs a 2D output grid");
  const std::size_t nt = hs.thetas.size();
  const std::size_t np = hs.ps.size();
  if (nt == 0 || np < 2) throw InvalidArgument("need at least one angle and two offsets");
  ScalarGrid score(out);
  if (y_c < hs.edges.front() || y_c > hs.edges.back()) return score;
  const BinLocator loc(hs.edges);
  const std::size_t centre = loc.find(y_c);

  std::vector<double> indicator(nt * np, 0.0);
  for (std::size_t i = 0; i < nt; ++i)
    for (std::size_t j = 0; j < np; ++j)
      indicator[i * np + j] = peaks_near(hs.ray_mass(i, j), centre, opt.bin_window, opt.peak_ratio) ? 1.0 : 0.0;

  const double p0 = hs.ps.front();
  const double dp = (hs.ps.back() - p0) / static_cast<double>(np - 1);
  parallel_for(out.dims[0], [&](std::size_t ix) {
    const double x = out.origin[0] + static_cast<double>(ix) * out.spacing;
    for (std::size_t iy = 0; iy < out.dims[1]; ++iy) {
      const double y = out.origin[1] + static_cast<double>(iy) * out.spacing;
      double acc = 0.0;
      for (std::size_t i = 0; i < nt; ++i) {
        const double t = (x * std::cos(hs.thetas[i]) + y * std::sin(hs.thetas[i]) - p0) / dp;
        if (t < 0.0 || t > static_cast<double>(np - 1)) continue;
        std::size_t j = std::min(static_cast<std::size_t>(t), np - 2);
        const double f = t - static_cast<double>(j);
        acc += (1.0 - f) * indicator[i * np + j] + f * indicator[i * np + j + 1];
      }
      score[out.index(ix, iy)] = acc;
    }
  });
  return score;
}

std::vector<Vec3> locate_critical_points(const HistogramSinogram& hs, double y_c, const GridSpec& out,
                                         const CriticalPointOptions& opt) {
  const ScalarGrid score = critical_point_score(hs, y_c, out, opt);
  const double cut = opt.score_fraction * static_cast<double>(hs.thetas.size());
  const std::size_t nx = out.dims[0];
  const std::size_t ny = out.dims[1];
  std::vector<int> label(score.size(), -1);
  struct Blob {
    double weight = 0.0, peak = 0.0;
    Vec3 sum{0.0, 0.0, 0.0};
  };
  std::vector<Blob> blobs;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < score.size(); ++start) {
    if (label[start] >= 0 || score[start] < cut) continue;
    const int id = static_cast<int>(blobs.size());
    blobs.emplace_back();
    Blob& b = blobs.back();
    label[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t c = stack.back();
      stack.pop_back();
      const double w = score[c];
      const Vec3 x = out.position(c);
      b.weight += w;
      b.peak = std::max(b.peak, w);
      for (int a = 0; a < 2; ++a) b.sum[a] += w * x[a];
      const auto ij = out.unravel(c);
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          const auto ii = static_cast<std::ptrdiff_t>(ij[0]) + di;
          const auto jj = static_cast<std::ptrdiff_t>(ij[1]) + dj;
          if (ii < 0 || jj < 0 || ii >= static_cast<std::ptrdiff_t>(nx) || jj >= static_cast<std::ptrdiff_t>(ny))
            continue;
          const std::size_t n = out.index(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj));
          if (label[n] < 0 && score[n] >= cut) {
            label[n] = id;
            stack.push_back(n);
          }
        }
    }
  }
  std::stable_sort(blobs.begin(), blobs.end(), [](const Blob& a, const Blob& b) { return a.peak > b.peak; });
  std::vector<Vec3> points;
  for (const auto& b : blobs) points.push_back({b.sum[0] / b.weight, b.sum[1] / b.weight, 0.0});
  return points;
}

void write_level_stack(const std::filesystem::path& dir, const LevelStack& stack) {
  stack.validate();
  std::filesystem::create_directories(dir);
  CsvWriter w(dir / "levels.csv", "index,level");
  for (std::size_t k = 0; k < stack.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "level_%04zu.htgd", k);
    write_grid(dir / name, stack.masks[k]);
    w.row(k, stack.levels[k]);
  }
  w.close();
}

LevelStack read_level_stack(const std::filesystem::path& dir) {
  const CsvTable t = read_csv(dir / "levels.csv");
  const auto ci = t.column("index");
  const auto cl = t.column("level");
  LevelStack stack;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.rows[r][ci] != static_cast<double>(r))
      throw FormatError(FormatErrc::invalid_value, "levels.csv indices must be 0, 1, 2, ...");
    char name[32];
    std::snprintf(name, sizeof name, "level_%04zu.htgd", r);
    stack.levels.push_back(t.rows[r][cl]);
    stack.masks.push_back(read_grid(dir / name));
  }
  stack.validate();
  return stack;
}

}  // namespace htomo
