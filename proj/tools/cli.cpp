#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "htomo/bragg.hpp"
#include "htomo/csv.hpp"
#include "htomo/diffraction.hpp"
#include "htomo/distribution.hpp"
#include "htomo/grid_io.hpp"
#include "htomo/levelset.hpp"
#include "htomo/parallel.hpp"
#include "htomo/phantom.hpp"
#include "htomo/radon.hpp"
#include "htomo/tensor.hpp"

namespace htomo::cli {

namespace fs = std::filesystem;

void emit_plot_csv(const fs::path& path, const std::vector<PlotColumn>& columns) {
  const std::size_t rows = columns.empty() ? 0 : columns.front().values.size();
  for (const auto& c : columns)
    if (c.values.size() != rows) throw InvalidArgument("plot column '" + c.name + "' has a different length");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatErrc::io_failure, "cannot open " + path.string());
  for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c].name;
  out << '\n';
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << format_double(columns[c].values[r]);
    out << '\n';
  }
  out.close();
  if (out.fail()) throw FormatError(FormatErrc::io_failure, "write failed: " + path.string());
}

void emit_plot_pgm(const fs::path& path, const ScalarGrid& image) { write_pgm(path, image); }

namespace {

using nlohmann::json;

double number_of(const json& v, const std::string& key) {
  if (!v.is_number()) throw UsageError("config key '" + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw UsageError("config key '" + key + "' must be finite");
  return d;
}

double positive(const json& v, const std::string& key) {
  const double d = number_of(v, key);
  if (!(d > 0.0)) throw UsageError("config key '" + key + "' must be positive");
  return d;
}

std::size_t count_of(const json& v, const std::string& key, std::size_t min) {
  if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min))
    throw UsageError("config key '" + key + "' must be an integer >= " + std::to_string(min));
  return static_cast<std::size_t>(v.get<long long>());
}

}  // namespace

DopplerConfig parse_doppler_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw UsageError("config must be a JSON object");
  DopplerConfig c;
  auto& fit = c.options.fit;
  for (const auto& [key, v] : doc.items()) {
    if (key == "grid") c.grid = count_of(v, key, 8);
    else if (key == "half_width") c.half_width = positive(v, key);
    else if (key == "sigma") c.sigma = positive(v, key);
    else if (key == "radius") c.radius = positive(v, key);
    else if (key == "directions") c.directions = count_of(v, key, 1);
    else if (key == "offsets") c.offsets = count_of(v, key, 2);
    else if (key == "bins") c.bins = count_of(v, key, 2);
    else if (key == "lambda") fit.lambda = number_of(v, key);
    else if (key == "lambda_l2") fit.lambda_l2 = number_of(v, key);
    else if (key == "fit_tolerance") fit.tolerance = positive(v, key);
    else if (key == "tau_det") c.options.tau_det = number_of(v, key);
    else if (key == "min_conditioning") c.options.min_conditioning = number_of(v, key);
    else if (key == "support_fraction") c.options.support_fraction = positive(v, key);
    else if (key == "fill_fraction") c.options.fill_fraction = positive(v, key);
    else if (key == "max_degenerate_fraction") c.options.max_degenerate_fraction = number_of(v, key);
    else if (key == "kroner_order") {
      const std::size_t k = count_of(v, key, 2);
      if (k != 2 && k != 4) throw UsageError("config key 'kroner_order' must be 2 or 4");
      c.options.kroner_order = static_cast<int>(k);
    } else if (key == "probe") {
      if (!v.is_object()) throw UsageError("config key 'probe' must be an object");
      Probe p;
      bool has_point = false, has_value = false;
      for (const auto& [pk, pv] : v.items()) {
        if (pk == "point") {
          if (!pv.is_array() || pv.size() != 3) throw UsageError("probe.point must be an array of 3 numbers");
          for (std::size_t i = 0; i < 3; ++i) p.point[i] = number_of(pv[i], "probe.point");
          has_point = true;
        } else if (pk == "value") {
          p.value = number_of(pv, "probe.value");
          if (p.value == 0.0) throw UsageError("probe.value must be nonzero");
          has_value = true;
        } else {
          throw UsageError("unknown config key 'probe." + pk + "'");
        }
      }
      if (!has_point || !has_value) throw UsageError("probe needs both 'point' and 'value'");
      c.probe = p;
    } else {
      throw UsageError("unknown config key '" + key + "'");
    }
  }
  if (fit.lambda < 0.0 || fit.lambda_l2 < 0.0) throw UsageError("regularization weights must be >= 0");
  if (c.options.fill_fraction > c.options.support_fraction)
    throw UsageError("fill_fraction must not exceed support_fraction");
  return c;
}

namespace {

double rel_l2(const ScalarGrid& a, const ScalarGrid& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

std::pair<double, double> value_range(const ScalarGrid& g) {
  const auto [lo, hi] = std::minmax_element(g.values().begin(), g.values().end());
  return {*lo, *hi};
}

/// Uniform edges over [lo, hi], widened to unit width when the range is a point.
std::vector<double> range_edges(double lo, double hi, std::size_t bins) {
  if (!(hi > lo)) hi = lo + 1.0;
  return uniform_edges(lo, hi, bins);
}

}  // namespace

std::vector<double> moment_identity_errors(const ScalarGrid& f, std::size_t angles, std::size_t offsets,
                                           double half_width, std::size_t bins, int kmax) {
  const auto thetas = uniform_angles(angles);
  const auto ps = uniform_offsets(offsets, half_width);
  const auto [lo, hi] = value_range(f);
  const auto hs = hist_radon(f, thetas, ps, range_edges(lo, hi, bins));
  std::vector<double> errs;
  for (int k = 1; k <= kmax; ++k) {
    const auto m = moment_sinogram(hs, k);
    ScalarGrid fk = f;
    for (double& v : fk.values()) v = std::pow(v, k);
    const auto direct = radon(fk, thetas, ps);
    double worst = 0.0;
    for (std::size_t i = 0; i < m.values.size(); ++i) worst = std::max(worst, std::abs(m.values[i] - direct.values[i]));
    const double scale = direct.max_abs();
    errs.push_back(scale > 0.0 ? worst / scale : worst);
  }
  return errs;
}

double annulus_pushforward_error(double width, std::size_t bins, double p_max, double theta) {
  const auto edges = uniform_edges(-1.0, 1.0, bins);
  Histogram h{edges, std::vector<double>(bins, 0.0)};
  const BinLocator loc(edges);
  const std::size_t radial = 8;
  const std::size_t angular = 400 * bins;
  const double dr = width / static_cast<double>(radial);
  const double dphi = 2.0 * pi / static_cast<double>(angular);
  for (std::size_t i = 0; i < radial; ++i) {
    const double r = 1.0 - 0.5 * width + (static_cast<double>(i) + 0.5) * dr;
    const double w = r * dr * dphi / width;
    for (std::size_t j = 0; j < angular; ++j) {
      const double phi = (static_cast<double>(j) + 0.5) * dphi;
      const double p = r * std::cos(phi - theta);
      const std::size_t k = loc.find(p);
      if (k == BinLocator::below) h.underflow += w;
      else if (k == BinLocator::above) h.overflow += w;
      else h.mass[k] += w;
    }
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < bins; ++k) {
    const double p = h.midpoint(k);
    if (std::abs(p) > p_max) continue;
    const double want = oracle_circle_delta(p);
    worst = std::max(worst, std::abs(h.mass[k] / h.width(k) - want) / want);
  }
  return worst;
}

double line_delta_plane_error(std::uint64_t seed, std::size_t count, double sigma) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> off(-1.0, 1.0);
  double worst = 0.0;
  for (std::size_t n = 0; n < count;) {
    const Vec3 theta = normalized(Vec3{g(rng), g(rng), g(rng)});
    if (std::abs(theta[2]) < 0.3) continue;
    ++n;
    const double s = off(rng);
    const auto [e1, e2] = transverse_frame(theta);
    // The tube crosses the plane at (0, 0, s / Theta_3); integrate around it.
    const Vec3 hit{0.0, 0.0, s / theta[2]};
    const double a0 = dot(hit, e1), b0 = dot(hit, e2);
    const double half = 8.0 * sigma / std::abs(theta[2]);
    const std::size_t m = 600;
    const double da = 2.0 * half / static_cast<double>(m);
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double a = a0 - half + (static_cast<double>(i) + 0.5) * da;
      for (std::size_t j = 0; j < m; ++j) {
        const double b = b0 - half + (static_cast<double>(j) + 0.5) * da;
        Vec3 x;
        for (int c = 0; c < 3; ++c) x[c] = s * theta[c] + a * e1[c] + b * e2[c];
        sum += std::exp(-(x[0] * x[0] + x[1] * x[1]) / (2.0 * sigma * sigma));
      }
    }
    const double value = sum * da * da / (2.0 * pi * sigma * sigma);
    const double want = oracle_line_delta_plane_transform(theta);
    worst = std::max(worst, std::abs(value - want) / want);
  }
  return worst;
}

std::vector<CheckResult> selftest_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, pi);
  out.push_back({"circle_oracle_origin", std::abs(oracle_circle_delta(0.0) - 2.0), 1e-15});
  out.push_back({"circle_oracle_p0.8", std::abs(oracle_circle_delta(0.8) - 2.0 / 0.6), 1e-12});
  out.push_back({"line_oracle_tilted", std::abs(oracle_line_delta_plane_transform({0.0, std::sqrt(3.0) / 2, 0.5}) - 2.0), 1e-12});
  out.push_back({"annulus_pushforward", annulus_pushforward_error(1e-3, 100, 0.9, angle(rng)), 0.02});
  out.push_back({"line_delta_plane", line_delta_plane_error(seed, 6, 0.02), 1e-3});
  const auto f = make_phantom({"two-gaussians"}, GridSpec::cube(2, 65, -1.0, 1.0));
  const auto errs = moment_identity_errors(f, 24, 48, std::sqrt(2.0), 512, 4);
  for (std::size_t k = 0; k < errs.size(); ++k) out.push_back({"moment_identity_k" + std::to_string(k + 1), errs[k], 0.01});
  return out;
}

namespace {

class Summary {
 public:
  explicit Summary(const std::string& command) { str("command", command); }
  Summary& str(const std::string& key, const std::string& value) {
    if (!text_.empty()) text_ += ' ';
    text_ += key + "=" + value;
    return *this;
  }
  Summary& num(const std::string& key, double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", value);
    return str(key, buf);
  }
  Summary& count(const std::string& key, std::size_t value) { return str(key, std::to_string(value)); }
  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::uint64_t seed = 1;
};

/// Half width of the offsets that sweep the whole 2D box about the origin.
double covering_half_width(const GridSpec& s) {
  const double x = std::max(std::abs(s.lower(0)), std::abs(s.upper(0)));
  const double y = std::max(std::abs(s.lower(1)), std::abs(s.upper(1)));
  return std::hypot(x, y);
}

ScalarGrid read_2d(const std::string& path) {
  auto g = read_grid(path);
  if (g.ndim() != 2) throw UsageError(path + " is not a 2D grid");
  return g;
}

void write_curve_csv(const fs::path& path, const TransverseCurve& c) {
  std::vector<double> s(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) s[i] = c.s(i);
  emit_plot_csv(path, {{"s", s}, {"a11", c.a11}, {"a12", c.a12}, {"a22", c.a22}});
}

double theta_spread(const DiffractionPattern& dp) {
  double worst = 0.0;
  for (std::size_t a = 0; a < dp.slices.size(); ++a)
    for (std::size_t b = a + 1; b < dp.slices.size(); ++b)
      worst = std::max(worst, slice_l1_mismatch(dp.slices[a], dp.slices[b]));
  return worst;
}

double rot90_asymmetry(const ScalarGrid& g) {
  const std::size_t n = g.spec().dims[0];
  double diff = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      diff += std::abs(g.at(i, j) - g.at(n - 1 - j, i));
      sum += g.at(i, j);
    }
  return sum > 0.0 ? diff / sum : 0.0;
}

// ---- subcommands ----

struct ScanOpts {
  std::string in;
  std::size_t angles = 90;
  std::size_t offsets = 128;
  double half_width = 0.0;
  double step = 0.0;

  void add(CLI::App* sc, std::size_t default_angles, std::size_t default_offsets) {
    angles = default_angles;
    offsets = default_offsets;
    sc->add_option("--in", in, "Input 2D grid (HTGD)")->required()->check(CLI::ExistingFile);
    sc->add_option("--angles", angles, "Number of projection angles")->check(CLI::PositiveNumber)->capture_default_str();
    sc->add_option("--offsets", offsets, "Number of ray offsets per angle")->check(CLI::Range(2, 1 << 20))->capture_default_str();
    sc->add_option("--half-width", half_width, "Offset half width (default: covers the box)");
    sc->add_option("--step", step, "Ray sampling step (default: half the grid spacing)");
  }
  double resolved_half_width(const GridSpec& s) const { return half_width > 0.0 ? half_width : covering_half_width(s); }
};

struct PhantomOpts {
  std::string name;
  int dim = 2;
  std::size_t size = 128;
  double lo = -1.0, hi = 1.0;
  double radius = 0.0, sigma = 0.0;
  std::string out, pgm, distribution_out;
  std::size_t bins = 200;
};

int cmd_phantom(const PhantomOpts& o, Context& ctx) {
  if (!o.pgm.empty() && o.dim != 2) throw UsageError("--pgm needs --dim 2");
  if (!(o.hi > o.lo)) throw UsageError("--hi must exceed --lo");
  const auto spec = GridSpec::cube(o.dim, o.size, o.lo, o.hi);
  const auto g = make_phantom({o.name, o.radius, o.sigma}, spec);
  write_grid(o.out, g);
  if (!o.pgm.empty()) emit_plot_pgm(o.pgm, g);
  const auto [lo, hi] = value_range(g);
  Summary s("phantom");
  s.str("name", o.name).count("ndim", static_cast<std::size_t>(o.dim)).count("size", o.size).num("min", lo).num("max", hi);
  if (!o.distribution_out.empty()) {
    const double cell = std::pow(spec.spacing, o.dim);
    const auto h = bin_samples(g.values(), cell, range_edges(lo, hi, o.bins));
    const auto cum = cumulative(h);
    std::vector<double> y(h.bins()), density(h.bins()), below(h.bins());
    for (std::size_t k = 0; k < h.bins(); ++k) {
      y[k] = h.midpoint(k);
      density[k] = h.mass[k] / h.width(k);
      below[k] = cum.values[k + 1];
    }
    emit_plot_csv(o.distribution_out, {{"y", y}, {"density", density}, {"cumulative", below}});
    s.count("critical_values", critical_values(h, 5.0).size());
  }
  ctx.out << s.text() << '\n';
  return exit_ok;
}

struct SinogramOpts {
  ScanOpts scan;
  std::string out, fbp_out;
};

int cmd_sinogram(const SinogramOpts& o, Context& ctx) {
  const auto g = read_2d(o.scan.in);
  const auto sino = radon(g, uniform_angles(o.scan.angles),
                          uniform_offsets(o.scan.offsets, o.scan.resolved_half_width(g.spec())), o.scan.step);
  write_sinogram_csv(o.out, sino);
  Summary s("sinogram");
  s.count("angles", o.scan.angles).count("offsets", o.scan.offsets).num("max_abs", sino.max_abs());
  if (!o.fbp_out.empty()) {
    const auto rec = fbp(sino, g.spec());
    write_grid(o.fbp_out, rec);
    s.num("fbp_rel_l2", rel_l2(rec, g));
  }
  ctx.out << s.text() << '\n';
  return exit_ok;
}

struct HistSinogramOpts {
  ScanOpts scan;
  std::size_t bins = 64;
  std::optional<double> lo, hi;
  std::string out, edges_out;
};

int cmd_hist_sinogram(const HistSinogramOpts& o, Context& ctx) {
  const auto g = read_2d(o.scan.in);
  const auto [vlo, vhi] = value_range(g);
  const double lo = o.lo.value_or(vlo), hi = o.hi.value_or(vhi);
  if ((o.lo || o.hi) && !(hi > lo)) throw UsageError("--hi must exceed --lo");
  const auto thetas = uniform_angles(o.scan.angles);
  const auto ps = uniform_offsets(o.scan.offsets, o.scan.resolved_half_width(g.spec()));
  const auto hs = hist_radon(g, thetas, ps, range_edges(lo, hi, o.bins), o.scan.step);
  fs::path edges = o.edges_out;
  if (edges.empty()) edges = fs::path(o.out).replace_extension("").string() + "_edges.csv";
  write_hist_sinogram_csv(o.out, edges, hs);

  // Every ray's histogram, under/overflow included, carries its chord length.
  const auto chord = radon(ScalarGrid(g.spec(), std::vector<double>(g.size(), 1.0)), thetas, ps, o.scan.step);
  double defect = 0.0;
  for (std::size_t r = 0; r < chord.values.size(); ++r) {
    double total = hs.underflow[r] + hs.overflow[r];
    for (std::size_t k = r * hs.bins(); k < (r + 1) * hs.bins(); ++k) total += hs.mass[k];
    defect = std::max(defect, std::abs(total - chord.values[r]));
  }
  Summary s("hist-sinogram");
  s.count("rays", chord.values.size()).count("bins", hs.bins()).num("mass_defect", defect / std::max(chord.max_abs(), 1e-300));
  ctx.out << s.text() << '\n';
  return exit_ok;
}

struct MomentsOpts {
  ScanOpts scan;
  std::size_t bins = 512;
  int kmax = 4;
  std::string out;
};

int cmd_moments(const MomentsOpts& o, Context& ctx) {
  const auto g = read_2d(o.scan.in);
  const double hw = o.scan.resolved_half_width(g.spec());
  const auto thetas = uniform_angles(o.scan.angles);
  const auto ps = uniform_offsets(o.scan.offsets, hw);
  const auto [lo, hi] = value_range(g);
  const auto hs = hist_radon(g, thetas, ps, range_edges(lo, hi, o.bins), o.scan.step);
  std::vector<double> th, p, kk, hist_m, direct_m;
  Summary s("moments");
  s.count("bins", o.bins);
  double worst = 0.0;
  for (int k = 1; k <= o.kmax; ++k) {
    const auto m = moment_sinogram(hs, k);
    ScalarGrid fk = g;
    for (double& v : fk.values()) v = std::pow(v, k);
    const auto direct = radon(fk, thetas, ps, o.scan.step);
    double err = 0.0;
    for (std::size_t i = 0; i < thetas.size(); ++i)
      for (std::size_t j = 0; j < ps.size(); ++j) {
        th.push_back(thetas[i]);
        p.push_back(ps[j]);
        kk.push_back(k);
        hist_m.push_back(m.at(i, j));
        direct_m.push_back(direct.at(i, j));
        err = std::max(err, std::abs(m.at(i, j) - direct.at(i, j)));
      }
    err /= std::max(direct.max_abs(), 1e-300);
    worst = std::max(worst, err);
    s.num("rel_k" + std::to_string(k), err);
  }
  emit_plot_csv(o.out, {{"theta", th}, {"p", p}, {"k", kk}, {"histogram_moment", hist_m}, {"radon_power", direct_m}});
  s.num("max_rel_discrepancy", worst);
  ctx.out << s.text() << '\n';
  return exit_ok;
}

struct LevelsetOpts {
  ScanOpts scan;
  std::size_t levels = 64;
  std::string out, stack_dir, pgm;
};

int cmd_levelset(const LevelsetOpts& o, Context& ctx) {
  const auto g = read_2d(o.scan.in);
  const auto [lo, hi] = value_range(g);
  const auto hs = hist_radon(g, uniform_angles(o.scan.angles),
                             uniform_offsets(o.scan.offsets, o.scan.resolved_half_width(g.spec())),
                             range_edges(lo, hi, o.levels), o.scan.step);
  bool monotone = true;
  for (std::size_t i = 0; i < hs.thetas.size(); ++i)
    for (std::size_t j = 0; j < hs.ps.size(); ++j) {
      const auto c = cumulative(hs.slice(i, j));
      for (std::size_t k = 1; k < c.values.size(); ++k) monotone = monotone && c.values[k] >= c.values[k - 1];
    }
  const auto stack = reconstruct_stack(hs, g.spec());
  const auto rec = assemble(stack, lo);
  write_grid(o.out, rec);
  if (!o.stack_dir.empty()) {
    fs::create_directories(o.stack_dir);
    write_level_stack(o.stack_dir, stack);
  }
  if (!o.pgm.empty()) emit_plot_pgm(o.pgm, rec);
  Summary s("levelset-recon");
  s.count("levels", stack.size()).num("rel_l2", rel_l2(rec, g)).count("monotone", monotone ? 1 : 0);
  ctx.out << s.text() << '\n';
  return exit_ok;
}

struct DopplerOpts {
  std::string config;
  std::optional<std::size_t> grid;
  std::string out, truth_out;
};

int cmd_doppler(const DopplerOpts& o, Context& ctx) {
  DopplerConfig cfg;
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    std::stringstream buf;
    buf << in.rdbuf();
    cfg = parse_doppler_config(buf.str());
  }
  if (o.grid) cfg.grid = *o.grid;
  if (cfg.grid < 8) throw UsageError("--grid must be at least 8");
  const auto spec = GridSpec::cube(3, cfg.grid, -cfg.half_width, cfg.half_width);
  const auto truth = make_phantom({"windowed-gaussian", cfg.radius, cfg.sigma}, spec);
  const auto du = gradient(truth);
  const double m = 1.01 * du.max_abs();
  if (!(m > 0.0)) throw UsageError("phantom has no gradient on this grid");
  const auto rays = parallel_ray_set(fibonacci_hemisphere(cfg.directions), cfg.offsets, cfg.half_width);
  const auto hs = hlrt(du, rays, uniform_edges(-m, m, cfg.bins));

  Recovery rec;
  try {
    rec = recover_potential(hs, spec, cfg.options);
  } catch (const DegenerateSupport& e) {
    const auto mask_path = fs::path(o.out).replace_extension("").string() + "_degenerate.htgd";
    write_grid(mask_path, e.mask());
    ctx.err << "degenerate mask written to " << mask_path << '\n';
    throw;
  }
  Summary s("doppler-recon");
  s.count("grid", cfg.grid).count("rays", rays.size()).count("fit_iterations", rec.fit.iterations);
  s.count("support_points", rec.support_points).count("degenerate_points", rec.degenerate_points);
  ScalarGrid u = rec.u;
  if (cfg.probe) {
    const double v = u.interpolate(cfg.probe->point);
    const double sign = v * cfg.probe->value < 0.0 ? -1.0 : 1.0;
    for (double& x : u.values()) x *= sign;
    s.num("sign", sign).num("rel_l2_probe_sign", rel_l2(u, truth));
  }
  write_grid(o.out, u);
  if (!o.truth_out.empty()) write_grid(o.truth_out, truth);
  s.num("rel_l2_min_sign", min_sign_rel_l2(rec.u, truth));
  ctx.out << s.text() << '\n';
  return exit_ok;
}

struct BraggSimOpts {
  std::string law = "two-atom";
  std::size_t samples = 512;
  double lambda_e = 4.05, a = 0.85, b = 0.03;
  double lo = -0.003, hi = 0.003;
  std::string out, law_out;
};

StrainSamples strain_law(const std::string& name, double lo, double hi, std::uint64_t seed) {
  StrainSamples s;
  if (name == "atom") return {{0.0007}, {1.0}};
  if (name == "two-atom") return {{-0.001, 0.0015}, {0.3, 0.7}};
  if (name == "uniform") {
    const std::size_t n = 8000;
    for (std::size_t i = 0; i < n; ++i) {
      s.strain.push_back(-0.002 + 0.004 * (static_cast<double>(i) + 0.5) / static_cast<double>(n));
      s.weight.push_back(1.0 / static_cast<double>(n));
    }
    return s;
  }
  if (name == "gaussian-mixture") {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n1(-0.001, 0.0003), n2(0.0012, 0.0004);
    for (int i = 0; i < 20000; ++i) {
      const double v = i % 3 == 0 ? n2(rng) : n1(rng);
      s.strain.push_back(std::clamp(v, lo, hi));
      s.weight.push_back(1.0);
    }
    return s;
  }
  throw UsageError("unknown strain law '" + name + "' (atom, two-atom, uniform, gaussian-mixture)");
}

int cmd_bragg_sim(const BraggSimOpts& o, Context& ctx) {
  if (!(o.hi > o.lo)) throw UsageError("--hi must exceed --lo");
  const auto law = strain_law(o.law, o.lo, o.hi, ctx.seed);
  const EdgeModel model{o.lambda_e, o.a, o.b};
  const auto sp = simulate_spectrum(law, model, bragg_window(model, o.lo, o.hi, o.samples));
  write_spectrum_csv(o.out, sp);
  if (!o.law_out.empty()) emit_plot_csv(o.law_out, {{"strain", law.strain}, {"weight", law.weight}});
  double wsum = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < law.strain.size(); ++i) {
    wsum += law.weight[i];
    mean += law.weight[i] * law.strain[i];
  }
  Summary s("bragg-sim");
  s.str("law", o.law).count("samples", sp.wavelengths.size()).count("law_points", law.strain.size());
  s.num("lambda_min", sp.wavelengths.front()).num("lambda_max", sp.wavelengths.back()).num("mean_strain", mean / wsum);
  ctx.out << s.text() << '\n';
  return exit_ok;
}

struct BraggExtractOpts {
  std::string in;
  std::size_t bins = 30;
  double lo = -0.003, hi = 0.003;
  double lambda_e = 4.05;
  double path_length = 1.0;
  std::string out, law_in;
};

int cmd_bragg_extract(const BraggExtractOpts& o, Context& ctx) {
  if (!(o.hi > o.lo)) throw UsageError("--hi must exceed --lo");
  const auto sp = read_spectrum_csv(o.in);
  const auto edges = uniform_edges(o.lo, o.hi, o.bins);
  const auto h = extract_histogram(sp, EdgeModel{o.lambda_e, 1.0, 0.0}, edges, o.path_length);
  write_histogram_csv(o.out, h);
  const double width = edges[1] - edges[0];
  Summary s("bragg-extract");
  s.count("bins", o.bins).num("total", h.total()).num("bin_width", width);
  if (!o.law_in.empty()) {
    const auto t = read_csv(o.law_in);
    const auto cs = t.column("strain"), cw = t.column("weight");
    std::vector<double> strain, weight;
    for (const auto& row : t.rows) {
      strain.push_back(row[cs]);
      weight.push_back(row[cw]);
    }
    const double w1 = wasserstein1(h, strain, weight);
    s.num("w1", w1).num("w1_bins", w1 / width);
  }
  ctx.out << s.text() << '\n';
  return exit_ok;
}

struct DiffractOpts {
  std::string curve = "a1";
  std::size_t samples = 4096, angles = 16, bins = 256;
  double q_lo = 1.0, q_hi = 2.0;
  std::string out, curve_out, r_out;
};

TransverseCurve named_curve(const std::string& name, std::size_t samples, const std::vector<double>& edges) {
  const auto a1 = a1_curve(samples);
  if (name == "a1") return a1;
  if (name == "a2") {
    const std::vector<double> zero{0.0};
    return build_equivalent_uniaxial(pattern_from_curve(a1, zero, edges).slices[0], samples);
  }
  throw UsageError("unknown curve '" + name + "' (a1, a2)");
}

int cmd_diffract(const DiffractOpts& o, Context& ctx) {
  if (!(o.q_hi > o.q_lo)) throw UsageError("--q-hi must exceed --q-lo");
  const auto edges = uniform_edges(o.q_lo, o.q_hi, o.bins);
  const auto curve = named_curve(o.curve, o.samples, edges);
  const auto dp = pattern_from_curve(curve, uniform_angles(o.angles), edges);
  write_pattern_csv(o.out, dp);
  if (!o.curve_out.empty()) write_curve_csv(o.curve_out, curve);
  if (!o.r_out.empty()) write_histogram_csv(o.r_out, dp.r_slice(0));
  Summary s("diffract");
  s.str("curve", o.curve).count("samples", curve.size()).count("angles", o.angles).count("bins", o.bins);
  s.num("slice_mass", dp.slices[0].total()).num("theta_spread", theta_spread(dp));
  ctx.out << s.text() << '\n';
  return exit_ok;
}

struct NonuniqueOpts {
  std::size_t samples = 4096, bins = 256, angles = 16;
  std::string out_dir = ".";
};

int cmd_nonunique(const NonuniqueOpts& o, Context& ctx) {
  if (o.angles % 2 != 0) throw UsageError("--angles must be even so that theta = pi/2 is sampled");
  fs::create_directories(o.out_dir);
  const fs::path dir(o.out_dir);
  const auto edges = uniform_edges(1.0, 2.0, o.bins);
  const auto thetas = uniform_angles(o.angles);
  const auto a1 = a1_curve(o.samples);
  const auto p1 = pattern_from_curve(a1, thetas, edges);
  const auto a2 = build_equivalent_uniaxial(p1.slices[0], o.samples);
  const auto p2 = pattern_from_curve(a2, thetas, edges);
  write_pattern_csv(dir / "pattern_a1.csv", p1);
  write_pattern_csv(dir / "pattern_a2.csv", p2);
  write_curve_csv(dir / "curve_a1.csv", a1);
  write_curve_csv(dir / "curve_a2.csv", a2);

  double mismatch = 0.0;
  for (std::size_t t = 0; t < thetas.size(); ++t)
    mismatch = std::max(mismatch, slice_l1_mismatch(p1.slices[t], p2.slices[t], 1));
  double marginal = 0.0;
  for (auto which : {Marginal::a11, Marginal::a22})
    marginal = std::max(marginal, slice_l1_mismatch(marginal_from_pattern(p1, which), marginal_from_pattern(p2, which), 1));
  const auto abs_max = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  };
  Summary s("nonunique-demo");
  s.count("samples", o.samples).count("bins", o.bins).count("angles", o.angles);
  s.num("l1_mismatch", mismatch).num("marginal_mismatch", marginal).num("theta_spread", theta_spread(p1));
  s.num("a12_max_a1", abs_max(a1.a12)).num("a12_max_a2", abs_max(a2.a12));
  ctx.out << s.text() << '\n';
  return exit_ok;
}

struct RenderOpts {
  std::size_t width = 256, samples = 2048;
  std::string out_dir = ".";
};

int cmd_render(const RenderOpts& o, Context& ctx) {
  fs::create_directories(o.out_dir);
  const fs::path dir(o.out_dir);
  const auto a1 = a1_curve(o.samples);
  RenderOptions half;
  half.half_width = 1.2;
  RenderOptions quarter = half;
  quarter.s_hi = pi / 2;
  const auto img_q = render_ellipse_superposition(a1, o.width, quarter);
  const auto img_h = render_ellipse_superposition(a1, o.width, half);
  write_grid(dir / "fig5_quarter.htgd", img_q);
  write_grid(dir / "fig5_half.htgd", img_h);
  emit_plot_pgm(dir / "fig5_quarter.pgm", img_q);
  emit_plot_pgm(dir / "fig5_half.pgm", img_h);
  Summary s("render-fig5");
  s.count("width", o.width).num("rot90_asym_quarter", rot90_asymmetry(img_q)).num("rot90_asym_half", rot90_asymmetry(img_h));
  ctx.out << s.text() << '\n';
  return exit_ok;
}

struct SelftestOpts {
  bool verbose = false;
};

int cmd_selftest(const SelftestOpts& o, Context& ctx) {
  std::size_t pass = 0, fail = 0;
  for (const auto& c : selftest_checks(ctx.seed)) {
    (c.pass() ? pass : fail) += 1;
    if (o.verbose || !c.pass()) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "check=%s value=%.3e tolerance=%.1e %s", c.name.c_str(), c.value, c.tolerance,
                    c.pass() ? "pass" : "FAIL");
      ctx.err << buf << '\n';
    }
  }
  Summary s("selftest");
  s.count("pass", pass).count("fail", fail);
  ctx.out << s.text() << '\n';
  return fail == 0 ? exit_ok : exit_numerical;
}

/// Output files must land in an existing directory.
const CLI::Validator output_path(
    [](std::string& p) -> std::string {
      const auto parent = fs::path(p).parent_path();
      if (!parent.empty() && !fs::is_directory(parent)) return "directory does not exist: " + parent.string();
      return {};
    },
    "OUTPUT");

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Histogram tomography: forward models, reconstructions and demonstrations.", "htomo"};
  app.require_subcommand(1);
  app.fallthrough();
  unsigned threads = 1;
  std::uint64_t seed = 1;
  app.add_option("--threads", threads, "Worker threads")->check(CLI::Range(1u, 256u))->capture_default_str();
  app.add_option("--seed", seed, "Seed for random draws")->capture_default_str();

  PhantomOpts ph;
  auto* sc = app.add_subcommand("phantom", "Sample a named phantom to an HTGD grid");
  sc->add_option("--name", ph.name, "disk, gaussian, bump, two-gaussians, windowed-gaussian, cubic")->required();
  sc->add_option("--dim", ph.dim, "Dimension")->check(CLI::Range(1, 3))->capture_default_str();
  sc->add_option("--size", ph.size, "Samples per axis")->check(CLI::Range(2, 1 << 24))->capture_default_str();
  sc->add_option("--lo", ph.lo, "Box lower bound")->capture_default_str();
  sc->add_option("--hi", ph.hi, "Box upper bound")->capture_default_str();
  sc->add_option("--radius", ph.radius, "Support/window radius (default per phantom)");
  sc->add_option("--sigma", ph.sigma, "Gaussian width (default per phantom)");
  sc->add_option("--out", ph.out, "Output grid")->required()->check(output_path);
  sc->add_option("--pgm", ph.pgm, "Also write a graymap (2D)")->check(output_path);
  sc->add_option("--distribution-out", ph.distribution_out, "CSV y,density,cumulative of the values")->check(output_path);
  sc->add_option("--bins", ph.bins, "Bins of the distribution")->check(CLI::PositiveNumber)->capture_default_str();

  SinogramOpts si;
  sc = app.add_subcommand("sinogram", "Radon transform of a 2D grid");
  si.scan.add(sc, 90, 128);
  sc->add_option("--out", si.out, "Sinogram CSV theta,p,value")->required()->check(output_path);
  sc->add_option("--fbp", si.fbp_out, "Also write the filtered backprojection")->check(output_path);

  HistSinogramOpts hso;
  sc = app.add_subcommand("hist-sinogram", "Histogram Radon transform of a 2D grid");
  hso.scan.add(sc, 90, 128);
  sc->add_option("--bins", hso.bins, "Histogram bins")->check(CLI::PositiveNumber)->capture_default_str();
  sc->add_option("--lo", hso.lo, "Lowest bin edge (default: grid minimum)");
  sc->add_option("--hi", hso.hi, "Highest bin edge (default: grid maximum)");
  sc->add_option("--out", hso.out, "CSV theta,p,bin_index,mass")->required()->check(output_path);
  sc->add_option("--edges-out", hso.edges_out, "Bin edge CSV (default: <out>_edges.csv)")->check(output_path);

  MomentsOpts mo;
  sc = app.add_subcommand("moments", "Histogram moments against the Radon transform of powers");
  mo.scan.add(sc, 90, 128);
  sc->add_option("--bins", mo.bins, "Histogram bins")->check(CLI::PositiveNumber)->capture_default_str();
  sc->add_option("--kmax", mo.kmax, "Highest moment")->check(CLI::Range(1, 8))->capture_default_str();
  sc->add_option("--out", mo.out, "CSV of both moment sinograms")->required()->check(output_path);

  LevelsetOpts lv;
  sc = app.add_subcommand("levelset-recon", "Reconstruct a 2D grid from its histogram sinogram via level sets");
  lv.scan.add(sc, 180, 256);
  sc->add_option("--levels", lv.levels, "Number of levels")->check(CLI::PositiveNumber)->capture_default_str();
  sc->add_option("--out", lv.out, "Reconstructed grid")->required()->check(output_path);
  sc->add_option("--stack-dir", lv.stack_dir, "Also write the level masks here");
  sc->add_option("--pgm", lv.pgm, "Also write a graymap")->check(output_path);

  DopplerOpts dp;
  sc = app.add_subcommand("doppler-recon", "Recover a 3D potential from histograms of its gradient");
  sc->add_option("--config", dp.config, "JSON configuration")->check(CLI::ExistingFile);
  sc->add_option("--grid", dp.grid, "Samples per axis (overrides the config)");
  sc->add_option("--out", dp.out, "Recovered potential grid")->required()->check(output_path);
  sc->add_option("--truth-out", dp.truth_out, "Also write the true potential")->check(output_path);

  BraggSimOpts bs;
  sc = app.add_subcommand("bragg-sim", "Simulate a Bragg-edge transmission spectrum");
  sc->add_option("--law", bs.law, "atom, two-atom, uniform, gaussian-mixture")->capture_default_str();
  sc->add_option("--samples", bs.samples, "Wavelength samples")->check(CLI::Range(8, 1 << 24))->capture_default_str();
  sc->add_option("--lambda-e", bs.lambda_e, "Unstrained edge wavelength")->capture_default_str();
  sc->add_option("--a", bs.a, "Trend intercept")->capture_default_str();
  sc->add_option("--b", bs.b, "Trend slope")->capture_default_str();
  sc->add_option("--lo", bs.lo, "Lowest strain of the window")->capture_default_str();
  sc->add_option("--hi", bs.hi, "Highest strain of the window")->capture_default_str();
  sc->add_option("--out", bs.out, "Spectrum CSV")->required()->check(output_path);
  sc->add_option("--law-out", bs.law_out, "CSV strain,weight of the law")->check(output_path);

  BraggExtractOpts be;
  sc = app.add_subcommand("bragg-extract", "Strain histogram from a Bragg-edge spectrum");
  sc->add_option("--in", be.in, "Spectrum CSV")->required()->check(CLI::ExistingFile);
  sc->add_option("--bins", be.bins, "Strain bins")->check(CLI::PositiveNumber)->capture_default_str();
  sc->add_option("--lo", be.lo, "Lowest strain edge")->capture_default_str();
  sc->add_option("--hi", be.hi, "Highest strain edge")->capture_default_str();
  sc->add_option("--lambda-e", be.lambda_e, "Unstrained edge wavelength")->capture_default_str();
  sc->add_option("--path-length", be.path_length, "Path length the histogram integrates to")->capture_default_str();
  sc->add_option("--out", be.out, "Histogram CSV")->required()->check(output_path);
  sc->add_option("--law-in", be.law_in, "CSV strain,weight to compare against")->check(CLI::ExistingFile);

  DiffractOpts df;
  sc = app.add_subcommand("diffract", "Diffraction pattern of a transverse strain curve");
  sc->add_option("--curve", df.curve, "a1 (rotating biaxial) or a2 (equivalent uniaxial)")->capture_default_str();
  sc->add_option("--samples", df.samples, "Curve samples")->check(CLI::Range(8, 1 << 24))->capture_default_str();
  sc->add_option("--angles", df.angles, "Pattern angles")->check(CLI::PositiveNumber)->capture_default_str();
  sc->add_option("--bins", df.bins, "q bins")->check(CLI::PositiveNumber)->capture_default_str();
  sc->add_option("--q-lo", df.q_lo, "Lowest q edge")->capture_default_str();
  sc->add_option("--q-hi", df.q_hi, "Highest q edge")->capture_default_str();
  sc->add_option("--out", df.out, "Pattern CSV theta,q,mass")->required()->check(output_path);
  sc->add_option("--curve-out", df.curve_out, "CSV s,a11,a12,a22 of the curve")->check(output_path);
  sc->add_option("--r-out", df.r_out, "Histogram CSV of the theta = 0 slice in r")->check(output_path);

  NonuniqueOpts nu;
  sc = app.add_subcommand("nonunique-demo", "Two different strain curves with the same diffraction pattern");
  sc->add_option("--samples", nu.samples, "Curve samples")->check(CLI::Range(8, 1 << 24))->capture_default_str();
  sc->add_option("--bins", nu.bins, "q bins")->check(CLI::Range(4, 1 << 24))->capture_default_str();
  sc->add_option("--angles", nu.angles, "Pattern angles (even)")->check(CLI::PositiveNumber)->capture_default_str();
  sc->add_option("--out-dir", nu.out_dir, "Output directory")->capture_default_str();

  RenderOpts rd;
  sc = app.add_subcommand("render-fig5", "Ellipse superpositions over a quarter and a half turn");
  sc->add_option("--width", rd.width, "Image width")->check(CLI::Range(8, 1 << 14))->capture_default_str();
  sc->add_option("--samples", rd.samples, "Curve samples")->check(CLI::Range(8, 1 << 24))->capture_default_str();
  sc->add_option("--out-dir", rd.out_dir, "Output directory")->capture_default_str();

  SelftestOpts st;
  sc = app.add_subcommand("selftest", "Analytic oracle and moment identity checks");
  sc->add_flag("--verbose", st.verbose, "Print every check");

  if (!args.empty() && !args.front().empty() && args.front()[0] != '-') {
    bool known = false;
    for (const auto* s : app.get_subcommands({})) known = known || s->get_name() == args.front();
    if (!known) {
      err << "unknown subcommand '" << args.front() << "'\n\n" << app.help();
      return exit_usage;
    }
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    const auto used = app.get_subcommands();
    err << e.what() << "\n\n" << (used.empty() ? app.help() : used.front()->help());
    return exit_usage;
  }

  set_thread_count(threads);
  Context ctx{out, err, seed};
  auto previous = set_warning_handler([&err](const std::string& m) { err << "warning: " << m << '\n'; });
  int code = exit_ok;
  try {
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "phantom") code = cmd_phantom(ph, ctx);
    else if (cmd == "sinogram") code = cmd_sinogram(si, ctx);
    else if (cmd == "hist-sinogram") code = cmd_hist_sinogram(hso, ctx);
    else if (cmd == "moments") code = cmd_moments(mo, ctx);
    else if (cmd == "levelset-recon") code = cmd_levelset(lv, ctx);
    else if (cmd == "doppler-recon") code = cmd_doppler(dp, ctx);
    else if (cmd == "bragg-sim") code = cmd_bragg_sim(bs, ctx);
    else if (cmd == "bragg-extract") code = cmd_bragg_extract(be, ctx);
    else if (cmd == "diffract") code = cmd_diffract(df, ctx);
    else if (cmd == "nonunique-demo") code = cmd_nonunique(nu, ctx);
    else if (cmd == "render-fig5") code = cmd_render(rd, ctx);
    else code = cmd_selftest(st, ctx);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    code = exit_usage;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    code = exit_usage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    code = exit_usage;
  } catch (const Error& e) {
    err << "numerical failure: " << e.what() << '\n';
    code = exit_numerical;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << '\n';
    code = exit_numerical;
  }
  set_warning_handler(std::move(previous));
  set_thread_count(1);
  return code;
}

}  // namespace htomo::cli
