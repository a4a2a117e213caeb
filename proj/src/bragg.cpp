#include "htomo/bragg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "htomo/csv.hpp"
#include "htomo/finite_diff.hpp"
#include "htomo/parallel.hpp"

namespace htomo {

void Spectrum::validate() const {
  if (wavelengths.size() < 16) throw InvalidArgument("a spectrum needs at least 16 samples");
  if (transmission.size() != wavelengths.size()) throw InvalidArgument("spectrum columns differ in length");
  for (std::size_t i = 1; i < wavelengths.size(); ++i)
    if (!(wavelengths[i] > wavelengths[i - 1])) throw InvalidArgument("wavelengths must be strictly increasing");
  for (double t : transmission)
    if (!std::isfinite(t)) throw InvalidArgument("transmission values must be finite");
}

void EdgeModel::validate() const {
  if (!(lambda_e > 0.0) || !std::isfinite(lambda_e)) throw InvalidArgument("edge wavelength must be positive");
  if (!std::isfinite(a) || !std::isfinite(b)) throw InvalidArgument("trend coefficients must be finite");
}

Spectrum simulate_spectrum(const StrainSamples& samples, const EdgeModel& model,
                           std::span<const double> wavelengths) {
  model.validate();
  if (samples.strain.empty()) throw InvalidArgument("no strain samples along the path");
  if (samples.weight.size() != samples.strain.size()) throw InvalidArgument("one weight per strain sample needed");
  std::vector<std::pair<double, double>> edges;  // (edge wavelength, weight)
  double total = 0.0;
  for (std::size_t i = 0; i < samples.strain.size(); ++i) {
    if (!(samples.weight[i] >= 0.0)) throw InvalidArgument("path weights must be non-negative");
    edges.emplace_back(model.lambda_e * (1.0 + samples.strain[i]), samples.weight[i]);
    total += samples.weight[i];
  }
  if (!(total > 0.0)) throw InvalidArgument("total path weight must be positive");
  std::sort(edges.begin(), edges.end());
  Spectrum sp;
  sp.wavelengths.assign(wavelengths.begin(), wavelengths.end());
  sp.transmission.resize(wavelengths.size());
  std::size_t next = 0;
  double passed = 0.0;
  for (std::size_t j = 0; j < wavelengths.size(); ++j) {
    const double lam = wavelengths[j];
    if (j > 0 && !(lam > wavelengths[j - 1])) throw InvalidArgument("wavelengths must be strictly increasing");
    const double tr = model.trend(lam);
    if (!(tr > 0.0)) throw InvalidArgument("edge trend must be positive over the wavelength window");
    while (next < edges.size() && edges[next].first <= lam) passed += edges[next++].second;
    sp.transmission[j] = tr * passed / total;
  }
  return sp;
}

std::vector<double> bragg_window(const EdgeModel& model, double eps_lo, double eps_hi, std::size_t n) {
  model.validate();
  if (n < 16) throw InvalidArgument("a spectrum needs at least 16 samples");
  if (eps_hi < eps_lo) throw InvalidArgument("strain range is reversed");
  double lo = model.lambda_e * (1.0 + eps_lo);
  double hi = model.lambda_e * (1.0 + eps_hi);
  const double span = std::max(hi - lo, 1e-6 * model.lambda_e);
  lo -= 0.10 * span;
  hi += 0.25 * span;
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return w;
}

std::pair<double, double> fit_trend(const Spectrum& sp, double plateau_fraction) {
  sp.validate();
  if (!(plateau_fraction > 0.0 && plateau_fraction < 1.0)) throw InvalidArgument("plateau fraction must lie in (0, 1)");
  const std::size_t n = sp.wavelengths.size();
  const auto m = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(plateau_fraction * static_cast<double>(n))));
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t j = n - m; j < n; ++j) {
    const double x = sp.wavelengths[j], y = sp.transmission[j];
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double mm = static_cast<double>(m);
  const double det = mm * sxx - sx * sx;
  const double b = (mm * sxy - sx * sy) / det;
  const double a = (sy - b * sx) / mm;
  return {a, b};
}

Histogram extract_histogram(const Spectrum& sp, const EdgeModel& model, std::span<const double> edges,
                            double path_length, const ExtractOptions& opt) {
  sp.validate();
  model.validate();
  check_edges(edges);
  if (!(path_length >= 0.0)) throw InvalidArgument("path length must be non-negative");
  const auto [a, b] = fit_trend(sp, opt.plateau_fraction);
  const std::size_t n = sp.wavelengths.size();
  std::vector<double> c(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double tr = a + b * sp.wavelengths[j];
    if (!(tr > 0.0)) throw InvalidArgument("fitted trend is not positive over the window");
    c[j] = sp.transmission[j] / tr;
  }
  const auto m = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(opt.plateau_fraction * static_cast<double>(n))));
  double dev = 0.0;
  for (std::size_t j = n - m; j < n; ++j) dev = std::max(dev, std::abs(c[j] - 1.0));
  if (dev > opt.flat_tolerance)
    throw InvalidArgument("incomplete edge: upper plateau deviates by " + std::to_string(dev));
  if (std::abs(c[0]) > opt.flat_tolerance)
    throw InvalidArgument("incomplete edge: spectrum starts at normalized level " + std::to_string(c[0]));

  Histogram h;
  h.edges.assign(edges.begin(), edges.end());
  h.mass.assign(h.edges.size() - 1, 0.0);
  const BinLocator loc(edges);
  double total = 0.0;
  for (std::size_t j = 0; j + 1 < n; ++j) {
    const double rise = c[j + 1] - c[j];
    if (!(rise > 0.0)) continue;
    total += rise;
    const double e0 = sp.wavelengths[j] / model.lambda_e - 1.0;
    const double e1 = sp.wavelengths[j + 1] / model.lambda_e - 1.0;
    spread_uniform(h, loc, e0, e1, rise);
  }
  if (!(total > 0.0)) throw InvalidArgument("spectrum contains no edge");
  const double scale = path_length / total;
  for (double& v : h.mass) v *= scale;
  h.underflow *= scale;
  h.overflow *= scale;
  return h;
}

double wasserstein1(const Histogram& h, std::span<const double> values, std::span<const double> weights) {
  h.validate();
  if (values.size() != weights.size() || values.empty()) throw InvalidArgument("point law needs matching values and weights");
  const double mh = h.total();
  double mw = 0.0;
  for (double w : weights) mw += w;
  if (!(mh > 0.0) || !(mw > 0.0)) throw InvalidArgument("both laws need positive mass");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });

  std::vector<double> cum_h(h.edges.size(), 0.0);
  for (std::size_t k = 0; k < h.mass.size(); ++k) cum_h[k + 1] = cum_h[k] + h.mass[k] / mh;
  auto fh = [&](double x) {
    if (x <= h.edges.front()) return 0.0;
    if (x >= h.edges.back()) return 1.0;
    const std::size_t k = static_cast<std::size_t>(std::upper_bound(h.edges.begin(), h.edges.end(), x) - h.edges.begin()) - 1;
    return cum_h[k] + (cum_h[k + 1] - cum_h[k]) * (x - h.edges[k]) / h.width(k);
  };
  std::vector<double> pts(h.edges.begin(), h.edges.end());
  for (double v : values) pts.push_back(v);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

  double dist = 0.0;
  std::size_t next = 0;
  double fw = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    while (next < order.size() && values[order[next]] <= pts[i]) fw += weights[order[next++]] / mw;
    const double x0 = pts[i], x1 = pts[i + 1];
    const double d0 = fh(x0) - fw, d1 = fh(x1) - fw;
    const double len = x1 - x0;
    if ((d0 >= 0.0) == (d1 >= 0.0)) {
      dist += 0.5 * (std::abs(d0) + std::abs(d1)) * len;
    } else {
      const double t = d0 / (d0 - d1);
      dist += 0.5 * (std::abs(d0) * t + std::abs(d1) * (1.0 - t)) * len;
    }
  }
  return dist;
}

std::vector<double> bragg_moment_sinogram(const SymTensorField& strain, std::span<const Ray3> rays,
                                          const BraggSetup& setup, int k) {
  if (strain.rank() != 2) throw InvalidArgument("strain must be a rank-2 field");
  if (k < 1) throw InvalidArgument("moment order must be at least 1");
  std::vector<double> out(rays.size(), 0.0);
  parallel_for(rays.size(), [&](std::size_t r) {
    const std::vector<Vec3> xi(2, rays[r].xi);
    const RaySamples rs = contracted_samples(strain, rays[r], xi, setup.step);
    if (rs.empty()) return;
    StrainSamples s;
    s.strain = rs.values;
    s.weight.assign(rs.values.size(), rs.step);
    const Spectrum sp = simulate_spectrum(s, setup.model, setup.wavelengths);
    out[r] = moment(extract_histogram(sp, setup.model, setup.edges, rs.chord()), k);
  });
  return out;
}

namespace {

int eps3(int i, int j, int k) {
  if (i == j || j == k || i == k) return 0;
  return ((j - i + 3) % 3 == 1) ? 1 : -1;
}

int eps2(int i, int j) { return i == j ? 0 : (i < j ? 1 : -1); }

struct GkTerm {
  std::size_t component;
  std::size_t derivative;
  int sign;
};

// Terms of one output tuple a, grouped later by derivative multiset.
std::vector<GkTerm> gk_terms(int ndim, const std::array<int, 4>& a) {
  std::vector<GkTerm> terms;
  std::array<int, 4> p{}, q{};
  const int choices = ndim == 3 ? 9 : 4;
  for (int code = 0; code < choices * choices * choices * choices; ++code) {
    int rem = code;
    int sign = 1;
    for (int k = 0; k < 4; ++k) {
      const int pq = rem % choices;
      rem /= choices;
      p[static_cast<std::size_t>(k)] = pq / ndim;
      q[static_cast<std::size_t>(k)] = pq % ndim;
      sign *= ndim == 3 ? eps3(a[static_cast<std::size_t>(k)], p[static_cast<std::size_t>(k)], q[static_cast<std::size_t>(k)])
                        : eps2(p[static_cast<std::size_t>(k)], q[static_cast<std::size_t>(k)]);
      if (sign == 0) break;
    }
    if (sign == 0) continue;
    // Odd positions take the field index from the third slot, even positions from the second.
    const int fidx[4] = {q[0], p[1], q[2], p[3]};
    const int didx[4] = {p[0], q[1], p[2], q[3]};
    terms.push_back({SymTensorField::component_index(ndim, fidx), SymTensorField::component_index(ndim, didx), sign});
  }
  return terms;
}

std::vector<ScalarGrid> gk_apply(const SymTensorField& f, const std::vector<std::array<int, 4>>& outputs) {
  if (f.rank() != 4) throw InvalidArgument("GK operator needs a rank-4 field");
  const int nd = f.ndim();
  for (int a = 0; a < nd; ++a)
    if (f.spec().dims[static_cast<std::size_t>(a)] < min_samples_for_derivative(4))
      throw InvalidArgument("grid too small for fourth derivatives: need " + std::to_string(min_samples_for_derivative(4)) +
                            " samples per axis");
  std::vector<std::vector<GkTerm>> terms;
  for (const auto& a : outputs) terms.push_back(gk_terms(nd, a));
  std::vector<ScalarGrid> out(outputs.size(), ScalarGrid(f.spec()));
  const auto& dsets = SymTensorField::multisets(4, nd);
  for (std::size_t d = 0; d < dsets.size(); ++d) {
    std::vector<ScalarGrid> deriv(f.num_components());
    std::vector<bool> ready(f.num_components(), false);
    for (std::size_t o = 0; o < outputs.size(); ++o) {
      auto dst = out[o].values();
      for (const GkTerm& t : terms[o]) {
        if (t.derivative != d) continue;
        if (!ready[t.component]) {
          deriv[t.component] = partial(f.component(t.component), dsets[d]);
          ready[t.component] = true;
        }
        const auto src = deriv[t.component].values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += t.sign * src[i];
      }
    }
  }
  return out;
}

}  // namespace

SymTensorField gk_rank4(const SymTensorField& f) {
  if (f.ndim() != 3) throw InvalidArgument("gk_rank4 needs a 3D field");
  std::vector<std::array<int, 4>> outputs;
  for (const auto& s : SymTensorField::multisets(4, 3)) outputs.push_back({s[0], s[1], s[2], s[3]});
  auto grids = gk_apply(f, outputs);
  return SymTensorField(4, std::move(grids));
}

std::vector<ScalarGrid> gk_rank4_full(const SymTensorField& f) {
  if (f.ndim() != 3) throw InvalidArgument("gk_rank4 needs a 3D field");
  std::vector<std::array<int, 4>> outputs;
  for (int code = 0; code < 81; ++code) outputs.push_back({code / 27, code / 9 % 3, code / 3 % 3, code % 3});
  return gk_apply(f, outputs);
}

ScalarGrid gk_2d(const SymTensorField& f) {
  if (f.ndim() != 2) throw InvalidArgument("gk_2d needs a 2D field");
  return gk_apply(f, {{0, 0, 0, 0}}).front();
}

ScalarGrid gk_2d_scalar(const SymTensorField& u) {
  if (u.ndim() != 2 || u.rank() != 1) throw InvalidArgument("gk_2d_scalar needs a 2D vector field");
  return gk_2d(sym_power(sym_d(u), 2));
}

void write_spectrum_csv(const std::filesystem::path& path, const Spectrum& sp) {
  CsvWriter w(path, "wavelength,transmission");
  for (std::size_t j = 0; j < sp.wavelengths.size(); ++j) w.row(sp.wavelengths[j], sp.transmission[j]);
  w.close();
}

Spectrum read_spectrum_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const auto cw = t.column("wavelength");
  const auto ct = t.column("transmission");
  Spectrum sp;
  for (const auto& row : t.rows) {
    sp.wavelengths.push_back(row[cw]);
    sp.transmission.push_back(row[ct]);
  }
  sp.validate();
  return sp;
}

}  // namespace htomo
