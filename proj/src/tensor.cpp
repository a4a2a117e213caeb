#include "htomo/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "htomo/csv.hpp"
#include "htomo/finite_diff.hpp"
#include "htomo/parallel.hpp"

namespace htomo {

Histogram RayHistograms::slice(std::size_t r) const {
  Histogram h;
  h.edges = edges;
  const auto m = ray_mass(r);
  h.mass.assign(m.begin(), m.end());
  h.underflow = underflow[r];
  h.overflow = overflow[r];
  return h;
}

SymTensorField tensor_from_function(int rank, const GridSpec& spec, const TensorSampler& sampler) {
  SymTensorField f(rank, spec);
  const auto& sets = SymTensorField::multisets(rank, spec.ndim);
  parallel_for(spec.size(), [&](std::size_t i) {
    const Vec3 x = spec.position(i);
    for (std::size_t c = 0; c < sets.size(); ++c) {
      const double v = sampler(x, sets[c]);
      if (!std::isfinite(v)) throw InvalidArgument("tensor sampler returned a non-finite value at index " + std::to_string(i));
      f.component(c)[i] = v;
    }
  });
  return f;
}

namespace {

// d_a of every component, indexed [a][c].
std::vector<std::vector<ScalarGrid>> first_derivatives(const SymTensorField& u) {
  std::vector<std::vector<ScalarGrid>> d(static_cast<std::size_t>(u.ndim()));
  for (int a = 0; a < u.ndim(); ++a)
    for (std::size_t c = 0; c < u.num_components(); ++c) d[static_cast<std::size_t>(a)].push_back(derivative(u.component(c), a, 1));
  return d;
}

void axpy(std::span<double> y, double a, std::span<const double> x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

void require_3d_rank(const SymTensorField& f, int rank, const char* what) {
  if (f.rank() != rank) throw InvalidArgument(std::string(what) + ": expected a rank-" + std::to_string(rank) + " field");
  if (f.ndim() != 3) throw InvalidArgument(std::string(what) + ": expected a 3D field");
}

int levi_civita(int i, int j, int k) {
  if (i == j || j == k || i == k) return 0;
  return ((j - i + 3) % 3 == 1) ? 1 : -1;
}

}  // namespace

SymTensorField sym_d(const SymTensorField& u) {
  if (u.rank() >= 4) throw InvalidArgument("sym_d: unsupported rank " + std::to_string(u.rank()));
  const int nd = u.ndim();
  const int k = u.rank();
  const auto du = first_derivatives(u);
  SymTensorField out(k + 1, u.spec());
  const auto& sets = SymTensorField::multisets(k + 1, nd);
  for (std::size_t c = 0; c < sets.size(); ++c) {
    auto dst = out.component(c).values();
    for (int j = 0; j <= k; ++j) {
      std::vector<int> rest;
      for (int m = 0; m <= k; ++m)
        if (m != j) rest.push_back(sets[c][static_cast<std::size_t>(m)]);
      const std::size_t src = SymTensorField::component_index(nd, rest);
      axpy(dst, 1.0 / (k + 1), du[static_cast<std::size_t>(sets[c][static_cast<std::size_t>(j)])][src].values());
    }
  }
  return out;
}

SymTensorField gradient(const ScalarGrid& u) { return sym_d(SymTensorField(0, std::vector<ScalarGrid>{u})); }

SymTensorField sym_product(const SymTensorField& a, const SymTensorField& b) {
  if (!(a.spec() == b.spec())) throw InvalidArgument("sym_product: fields live on different grids");
  const int p = a.rank();
  const int q = b.rank();
  if (p + q > 4) throw InvalidArgument("sym_product: combined rank above 4");
  const int nd = a.ndim();
  const int n = p + q;
  SymTensorField out(n, a.spec());
  const auto& sets = SymTensorField::multisets(n, nd);
  for (std::size_t c = 0; c < sets.size(); ++c) {
    auto dst = out.component(c).values();
    // Average over the choices of which p positions feed a.
    int subsets = 0;
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      if (__builtin_popcount(mask) != p) continue;
      ++subsets;
    }
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      if (__builtin_popcount(mask) != p) continue;
      std::vector<int> ia, ib;
      for (int m = 0; m < n; ++m) (mask >> m & 1u ? ia : ib).push_back(sets[c][static_cast<std::size_t>(m)]);
      const auto va = a.component(SymTensorField::component_index(nd, ia)).values();
      const auto vb = b.component(SymTensorField::component_index(nd, ib)).values();
      const double w = 1.0 / subsets;
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += w * va[i] * vb[i];
    }
  }
  return out;
}

SymTensorField sym_power(const SymTensorField& a, int k) {
  if (k < 1) throw InvalidArgument("sym_power needs k >= 1");
  SymTensorField out = a;
  for (int i = 1; i < k; ++i) out = sym_product(out, a);
  return out;
}

SymTensorField divergence(const SymTensorField& f) {
  if (f.rank() < 1) throw InvalidArgument("divergence needs rank >= 1");
  const int nd = f.ndim();
  SymTensorField out(f.rank() - 1, f.spec());
  const auto du = first_derivatives(f);
  const auto& sets = SymTensorField::multisets(f.rank() - 1, nd);
  for (std::size_t c = 0; c < sets.size(); ++c) {
    auto dst = out.component(c).values();
    for (int j = 0; j < nd; ++j) {
      std::vector<int> idx = sets[c];
      idx.push_back(j);
      axpy(dst, 1.0, du[static_cast<std::size_t>(j)][SymTensorField::component_index(nd, idx)].values());
    }
  }
  return out;
}

SymTensorField saint_venant_vec(const SymTensorField& f) {
  require_3d_rank(f, 1, "saint_venant_vec");
  const auto du = first_derivatives(f);
  SymTensorField out(1, f.spec());
  for (int i = 0; i < 3; ++i) {
    auto dst = out.component(static_cast<std::size_t>(i)).values();
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) {
        const int e = levi_civita(i, j, k);
        if (e != 0) axpy(dst, e, du[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)].values());
      }
  }
  return out;
}

SymTensorField kroner_rank2(const SymTensorField& f, int order) {
  require_3d_rank(f, 2, "kroner_rank2");
  // Second derivatives d_j d_k of every component, by sorted (j, k).
  std::vector<std::vector<ScalarGrid>> dd(6);
  const auto& pairs = SymTensorField::multisets(2, 3);
  for (std::size_t p = 0; p < pairs.size(); ++p)
    for (std::size_t c = 0; c < f.num_components(); ++c) dd[p].push_back(partial(f.component(c), pairs[p], order));
  SymTensorField out(2, f.spec());
  for (std::size_t o = 0; o < pairs.size(); ++o) {
    const int m = pairs[o][0];
    const int n = pairs[o][1];
    auto dst = out.component(o).values();
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) {
        const int e1 = levi_civita(m, i, k);
        if (e1 == 0) continue;
        for (int j = 0; j < 3; ++j)
          for (int l = 0; l < 3; ++l) {
            const int e2 = levi_civita(n, j, l);
            if (e2 == 0) continue;
            const int jk[2] = {std::min(j, k), std::max(j, k)};
            const int il[2] = {i, l};
            const std::size_t p = SymTensorField::component_index(3, jk);
            const std::size_t c = SymTensorField::component_index(3, il);
            axpy(dst, e1 * e2, dd[p][c].values());
          }
      }
  }
  return out;
}

std::pair<Vec3, Vec3> transverse_frame(const Vec3& xi) {
  int axis = 0;
  for (int a = 1; a < 3; ++a)
    if (std::abs(xi[a]) < std::abs(xi[axis])) axis = a;
  Vec3 e{0.0, 0.0, 0.0};
  e[axis] = 1.0;
  const double proj = dot(e, xi);
  Vec3 eta1{e[0] - proj * xi[0], e[1] - proj * xi[1], e[2] - proj * xi[2]};
  eta1 = normalized(eta1);
  return {eta1, normalized(cross(xi, eta1))};
}

std::vector<double> contraction_weights(int rank, int ndim, std::span<const Vec3> vectors) {
  if (static_cast<int>(vectors.size()) != rank) throw InvalidArgument("need one contraction vector per index");
  std::vector<double> w(SymTensorField::num_components(rank, ndim), 0.0);
  std::size_t tuples = 1;
  for (int r = 0; r < rank; ++r) tuples *= static_cast<std::size_t>(ndim);
  std::vector<int> t(static_cast<std::size_t>(rank));
  for (std::size_t code = 0; code < tuples; ++code) {
    std::size_t rem = code;
    double prod = 1.0;
    for (int r = 0; r < rank; ++r) {
      t[static_cast<std::size_t>(r)] = static_cast<int>(rem % static_cast<std::size_t>(ndim));
      rem /= static_cast<std::size_t>(ndim);
      prod *= vectors[static_cast<std::size_t>(r)][static_cast<std::size_t>(t[static_cast<std::size_t>(r)])];
    }
    w[SymTensorField::component_index(ndim, t)] += prod;
  }
  return w;
}

namespace {

void check_ray_for(const SymTensorField& f, const Ray3& ray) {
  ray.check_unit(1e-9);
  if (f.ndim() == 2 && (ray.xi[2] != 0.0 || ray.x[2] != 0.0))
    throw InvalidArgument("3D ray leaves the plane of a 2D field");
}

RaySamples contract_along(const SymTensorField& f, const Ray3& ray, const std::vector<double>& w, double step) {
  check_ray_for(f, ray);
  const RayPath path = ray_path(f.spec(), ray.x, ray.xi, step);
  RaySamples out;
  out.step = path.step;
  out.s = path.s;
  out.values.assign(path.s.size(), 0.0);
  const auto nd = static_cast<std::size_t>(f.ndim());
  std::vector<std::size_t> active;
  for (std::size_t c = 0; c < w.size(); ++c)
    if (w[c] != 0.0) active.push_back(c);
  for (std::size_t i = 0; i < path.s.size(); ++i) {
    const InterpStencil st = interp_stencil(f.spec(), &path.points[i * nd]);
    double acc = 0.0;
    for (std::size_t c : active) {
      const auto v = f.component(c).values();
      double fc = 0.0;
      for (int q = 0; q < st.count; ++q) fc += st.weight[static_cast<std::size_t>(q)] * v[st.index[static_cast<std::size_t>(q)]];
      acc += w[c] * fc;
    }
    out.values[i] = acc;
  }
  return out;
}

std::vector<double> longitudinal_weights(const SymTensorField& f, const Vec3& xi) {
  const std::vector<Vec3> vs(static_cast<std::size_t>(f.rank()), xi);
  return contraction_weights(f.rank(), f.ndim(), vs);
}

}  // namespace

RaySamples contracted_samples(const SymTensorField& f, const Ray3& ray, std::span<const Vec3> vectors,
                              double step) {
  return contract_along(f, ray, contraction_weights(f.rank(), f.ndim(), vectors), step);
}

TensorSinogram lrt(const SymTensorField& f, std::span<const Ray3> rays, double step) {
  TensorSinogram s;
  s.rays.assign(rays.begin(), rays.end());
  s.components = 1;
  s.values.assign(rays.size(), 0.0);
  parallel_for(rays.size(), [&](std::size_t r) {
    s.values[r] = contract_along(f, rays[r], longitudinal_weights(f, rays[r].xi), step).integral();
  });
  return s;
}

TensorSinogram trt(const SymTensorField& f, std::span<const Ray3> rays, double step) {
  require_3d_rank(f, 2, "trt");
  TensorSinogram s;
  s.rays.assign(rays.begin(), rays.end());
  s.components = 3;
  s.values.assign(3 * rays.size(), 0.0);
  parallel_for(rays.size(), [&](std::size_t r) {
    const auto [e1, e2] = transverse_frame(rays[r].xi);
    const Vec3 pairs[3][2] = {{e1, e1}, {e1, e2}, {e2, e2}};
    for (int c = 0; c < 3; ++c)
      s.values[3 * r + static_cast<std::size_t>(c)] =
          contracted_samples(f, rays[r], std::span<const Vec3>(pairs[c], 2), step).integral();
  });
  return s;
}

RayHistograms hlrt(const SymTensorField& f, std::span<const Ray3> rays, std::span<const double> edges,
                   double step) {
  if (f.rank() != 1 && f.rank() != 2) throw InvalidArgument("hlrt needs a rank 1 or 2 field");
  check_edges(edges);
  RayHistograms out;
  out.rays.assign(rays.begin(), rays.end());
  out.edges.assign(edges.begin(), edges.end());
  const std::size_t nb = out.bins();
  out.mass.assign(rays.size() * nb, 0.0);
  out.underflow.assign(rays.size(), 0.0);
  out.overflow.assign(rays.size(), 0.0);
  parallel_for(rays.size(), [&](std::size_t r) {
    const Histogram h = bin_samples(contract_along(f, rays[r], longitudinal_weights(f, rays[r].xi), step), edges);
    std::copy(h.mass.begin(), h.mass.end(), out.mass.begin() + static_cast<std::ptrdiff_t>(r * nb));
    out.underflow[r] = h.underflow;
    out.overflow[r] = h.overflow;
  });
  return out;
}

std::vector<Vec3> fibonacci_hemisphere(std::size_t n) {
  if (n == 0) throw InvalidArgument("need at least one direction");
  const double golden = pi * (3.0 - std::sqrt(5.0));
  std::vector<Vec3> dirs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * static_cast<double>(i);
    dirs[i] = {rho * std::cos(phi), rho * std::sin(phi), z};
  }
  return dirs;
}

std::vector<Ray3> parallel_ray_set(std::span<const Vec3> directions, std::size_t n, double half_width,
                                   const Vec3& centre) {
  if (n < 1) throw InvalidArgument("need at least one offset per axis");
  std::vector<Ray3> rays;
  rays.reserve(directions.size() * n * n);
  for (const Vec3& d : directions) {
    const Vec3 xi = normalized(d);
    const auto [e1, e2] = transverse_frame(xi);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) {
        const double ta = n == 1 ? 0.0 : -half_width + 2.0 * half_width * static_cast<double>(a) / static_cast<double>(n - 1);
        const double tb = n == 1 ? 0.0 : -half_width + 2.0 * half_width * static_cast<double>(b) / static_cast<double>(n - 1);
        Ray3 r;
        for (int k = 0; k < 3; ++k) r.x[k] = centre[k] + ta * e1[k] + tb * e2[k];
        r.xi = xi;
        rays.push_back(r);
      }
  }
  return rays;
}

std::vector<Ray3> random_rays(std::size_t n, std::mt19937_64& rng, const Vec3& centre, double radius) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<Ray3> rays(n);
  for (auto& r : rays) {
    Vec3 d{gauss(rng), gauss(rng), gauss(rng)};
    r.xi = normalized(d);
    Vec3 p{gauss(rng), gauss(rng), gauss(rng)};
    p = normalized(p);
    const double rad = radius * std::cbrt(uni(rng));
    for (int k = 0; k < 3; ++k) r.x[k] = centre[k] + rad * p[k];
  }
  return rays;
}

void write_tensor_sinogram_csv(const std::filesystem::path& path, const TensorSinogram& s) {
  if (s.components != 1 && s.components != 3) throw InvalidArgument("tensor sinogram must have 1 or 3 components");
  CsvWriter w(path, "x1,x2,x3,xi1,xi2,xi3,c11,c12,c22");
  for (std::size_t r = 0; r < s.rays.size(); ++r) {
    const Ray3& ray = s.rays[r];
    const double c11 = s.at(r, 0);
    const double c12 = s.components == 3 ? s.at(r, 1) : 0.0;
    const double c22 = s.components == 3 ? s.at(r, 2) : 0.0;
    w.row(ray.x[0], ray.x[1], ray.x[2], ray.xi[0], ray.xi[1], ray.xi[2], c11, c12, c22);
  }
  w.close();
}

}  // namespace htomo
