#include "htomo/radon.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>

#include <unsupported/Eigen/FFT>

#include "htomo/csv.hpp"
#include "htomo/parallel.hpp"

namespace htomo {

Sinogram::Sinogram(std::vector<double> t, std::vector<double> p)
    : thetas(std::move(t)), ps(std::move(p)), values(thetas.size() * ps.size(), 0.0) {}

double Sinogram::max_abs() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

Histogram HistogramSinogram::slice(std::size_t i, std::size_t j) const {
  Histogram h;
  h.edges = edges;
  const auto m = ray_mass(i, j);
  h.mass.assign(m.begin(), m.end());
  h.underflow = underflow[ray_index(i, j)];
  h.overflow = overflow[ray_index(i, j)];
  return h;
}

std::vector<double> uniform_angles(std::size_t n) {
  if (n == 0) throw InvalidArgument("need at least one angle");
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = pi * static_cast<double>(i) / static_cast<double>(n);
  return t;
}

std::vector<double> uniform_offsets(std::size_t n, double half_width) {
  if (n < 2) throw InvalidArgument("need at least two offsets");
  std::vector<double> p(n);
  for (std::size_t j = 0; j < n; ++j)
    p[j] = -half_width + 2.0 * half_width * static_cast<double>(j) / static_cast<double>(n - 1);
  return p;
}

Sinogram radon(const ScalarGrid& grid, std::span<const double> thetas, std::span<const double> ps,
               double step) {
  if (grid.ndim() != 2) throw InvalidArgument("radon needs a 2D grid");
  Sinogram s({thetas.begin(), thetas.end()}, {ps.begin(), ps.end()});
  parallel_for(thetas.size(), [&](std::size_t i) {
    for (std::size_t j = 0; j < ps.size(); ++j)
      s.at(i, j) = sample_along_ray(grid, Ray{thetas[i], ps[j]}, step).integral();
  });
  return s;
}

namespace {

void check_sinogram(const Sinogram& sino) {
  if (sino.thetas.size() < 2) throw InvalidArgument("filtered backprojection needs at least 2 angles");
  if (sino.ps.size() < 2) throw InvalidArgument("filtered backprojection needs at least 2 offsets");
  if (sino.values.size() != sino.thetas.size() * sino.ps.size())
    throw InvalidArgument("sinogram value count does not match its axes");
  const double d = sino.ps[1] - sino.ps[0];
  if (!(d > 0.0)) throw InvalidArgument("offsets must be ascending");
  for (std::size_t j = 1; j < sino.ps.size(); ++j)
    if (std::abs(sino.ps[j] - sino.ps[j - 1] - d) > 1e-9 * d)
      throw InvalidArgument("offsets must be uniformly spaced");
  for (std::size_t i = 1; i < sino.thetas.size(); ++i)
    if (!(sino.thetas[i] > sino.thetas[i - 1])) throw InvalidArgument("angles must be ascending");
}

// Angular quadrature weights over a half turn, wrapping theta -> theta + pi.
std::vector<double> angle_weights(const std::vector<double>& t) {
  const std::size_t n = t.size();
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double next = i + 1 < n ? t[i + 1] : t[0] + pi;
    const double prev = i > 0 ? t[i - 1] : t[n - 1] - pi;
    w[i] = 0.5 * (next - prev);
  }
  return w;
}

// Frequency response of the band-limited ramp on a padded length m, offset spacing d.
std::vector<double> ramp_response(std::size_t m, double d) {
  std::vector<double> kernel(m, 0.0);
  kernel[0] = 1.0 / (4.0 * d * d);
  for (std::size_t n = 1; n < m / 2; ++n) {
    if (n % 2 == 0) continue;
    const double v = -1.0 / (pi * pi * static_cast<double>(n * n) * d * d);
    kernel[n] = v;
    kernel[m - n] = v;
  }
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spectrum;
  fft.fwd(spectrum, kernel);
  std::vector<double> response(m);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t kk = std::min(k, m - k);
    const double frac = static_cast<double>(kk) / (static_cast<double>(m) / 2.0);
    double window = 1.0;
    if (frac > fbp_rolloff_start)
      window = 0.5 * (1.0 + std::cos(pi * (frac - fbp_rolloff_start) / (1.0 - fbp_rolloff_start)));
    response[k] = spectrum[k].real() * d * window;
  }
  return response;
}

}  // namespace

ScalarGrid fbp(const Sinogram& sino, const GridSpec& out) {
  check_sinogram(sino);
  if (out.ndim != 2) throw InvalidArgument("fbp output grid must be 2D");
  const std::size_t np = sino.ps.size();
  const double d = sino.ps[1] - sino.ps[0];
  std::size_t m = 1;
  while (m < 2 * np) m <<= 1;
  const auto response = ramp_response(m, d);
  const auto weights = angle_weights(sino.thetas);

  std::vector<double> filtered(sino.values.size());
  parallel_for(sino.thetas.size(), [&](std::size_t i) {
    Eigen::FFT<double> fft;
    std::vector<double> row(m, 0.0);
    for (std::size_t j = 0; j < np; ++j) row[j] = sino.at(i, j);
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, row);
    for (std::size_t k = 0; k < m; ++k) spec[k] *= response[k];
    std::vector<double> back;
    fft.inv(back, spec);
    for (std::size_t j = 0; j < np; ++j) filtered[i * np + j] = back[j];
  });

  ScalarGrid image(out);
  const double p0 = sino.ps.front();
  std::vector<double> cs(sino.thetas.size());
  std::vector<double> sn(sino.thetas.size());
  for (std::size_t i = 0; i < cs.size(); ++i) {
    cs[i] = std::cos(sino.thetas[i]);
    sn[i] = std::sin(sino.thetas[i]);
  }
  parallel_for(out.dims[0], [&](std::size_t ix) {
    const double x = out.origin[0] + static_cast<double>(ix) * out.spacing;
    for (std::size_t iy = 0; iy < out.dims[1]; ++iy) {
      const double y = out.origin[1] + static_cast<double>(iy) * out.spacing;
      double acc = 0.0;
      for (std::size_t i = 0; i < cs.size(); ++i) {
        const double t = (x * cs[i] + y * sn[i] - p0) / d;
        if (t < 0.0 || t > static_cast<double>(np - 1)) continue;
        std::size_t j = static_cast<std::size_t>(t);
        if (j >= np - 1) j = np - 2;
        const double f = t - static_cast<double>(j);
        const double* row = &filtered[i * np];
        acc += weights[i] * ((1.0 - f) * row[j] + f * row[j + 1]);
      }
      image[out.index(ix, iy)] = acc;
    }
  });
  return image;
}

HistogramSinogram hist_radon(const ScalarGrid& grid, std::span<const double> thetas,
                             std::span<const double> ps, std::span<const double> edges, double step) {
  if (grid.ndim() != 2) throw InvalidArgument("hist_radon needs a 2D grid");
  check_edges(edges);
  HistogramSinogram hs;
  hs.thetas.assign(thetas.begin(), thetas.end());
  hs.ps.assign(ps.begin(), ps.end());
  hs.edges.assign(edges.begin(), edges.end());
  const std::size_t nb = hs.bins();
  const std::size_t nrays = thetas.size() * ps.size();
  hs.mass.assign(nrays * nb, 0.0);
  hs.underflow.assign(nrays, 0.0);
  hs.overflow.assign(nrays, 0.0);
  parallel_for(thetas.size(), [&](std::size_t i) {
    for (std::size_t j = 0; j < ps.size(); ++j) {
      const Histogram h = bin_samples(sample_along_ray(grid, Ray{thetas[i], ps[j]}, step), edges);
      const std::size_t r = hs.ray_index(i, j);
      std::copy(h.mass.begin(), h.mass.end(), hs.mass.begin() + static_cast<std::ptrdiff_t>(r * nb));
      hs.underflow[r] = h.underflow;
      hs.overflow[r] = h.overflow;
    }
  });
  return hs;
}

Sinogram moment_sinogram(const HistogramSinogram& hs, int k) {
  if (k < 1) throw InvalidArgument("moment sinograms need k >= 1");
  Sinogram s(hs.thetas, hs.ps);
  const std::size_t nb = hs.bins();
  std::vector<double> weight(nb);
  for (std::size_t b = 0; b < nb; ++b) weight[b] = std::pow(0.5 * (hs.edges[b] + hs.edges[b + 1]), k);
  for (std::size_t r = 0; r < s.values.size(); ++r) {
    double acc = 0.0;
    for (std::size_t b = 0; b < nb; ++b) acc += weight[b] * hs.mass[r * nb + b];
    s.values[r] = acc;
  }
  return s;
}

double oracle_circle_delta(double p) {
  if (std::abs(std::abs(p) - 1.0) <= 1e-12) throw SingularInput("circle delta transform is singular at |p| = 1");
  if (std::abs(p) > 1.0) return 0.0;
  return 2.0 / std::sqrt(1.0 - p * p);
}

double oracle_line_delta_plane_transform(const Vec3& theta) {
  if (std::abs(norm(theta) - 1.0) > 1e-9) throw InvalidArgument("plane normal must be a unit vector");
  if (std::abs(theta[2]) <= 1e-12) throw SingularInput("plane contains the line (theta_3 = 0)");
  return 1.0 / std::abs(theta[2]);
}

void write_sinogram_csv(const std::filesystem::path& path, const Sinogram& s) {
  CsvWriter w(path, "theta,p,value");
  for (std::size_t i = 0; i < s.thetas.size(); ++i)
    for (std::size_t j = 0; j < s.ps.size(); ++j) w.row(s.thetas[i], s.ps[j], s.at(i, j));
  w.close();
}

Sinogram read_sinogram_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const auto ct = t.column("theta");
  const auto cp = t.column("p");
  const auto cv = t.column("value");
  std::vector<double> thetas;
  std::vector<double> ps;
  for (const auto& row : t.rows) {
    if (thetas.empty() || row[ct] != thetas.back()) thetas.push_back(row[ct]);
    if (thetas.size() == 1) ps.push_back(row[cp]);
  }
  Sinogram s(thetas, ps);
  if (t.rows.size() != s.values.size())
    throw FormatError(FormatErrc::invalid_value, "sinogram CSV is not a full theta x p table");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.rows[r][cp] != ps[r % ps.size()])
      throw FormatError(FormatErrc::invalid_value, "sinogram CSV offsets differ between angles");
    s.values[r] = t.rows[r][cv];
  }
  return s;
}

void write_hist_sinogram_csv(const std::filesystem::path& path,
                             const std::filesystem::path& edges_path, const HistogramSinogram& hs) {
  CsvWriter w(path, "theta,p,bin_index,mass");
  for (std::size_t i = 0; i < hs.thetas.size(); ++i)
    for (std::size_t j = 0; j < hs.ps.size(); ++j) {
      const auto m = hs.ray_mass(i, j);
      for (std::size_t b = 0; b < m.size(); ++b) w.row(hs.thetas[i], hs.ps[j], b, m[b]);
    }
  w.close();
  CsvWriter e(edges_path, "edge");
  for (double v : hs.edges) e.row(v);
  e.close();
}

}  // namespace htomo
