#include "htomo/doppler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <set>
#include <string>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

#include "htomo/parallel.hpp"

namespace htomo {

// ---------------------------------------------------------------------------
// Poisson

void PoissonProblem::validate() const {
  if (rhs.spec() != boundary.spec()) throw InvalidArgument("rhs and boundary grids differ");
  if (rhs.ndim() < 2) throw InvalidArgument("Poisson problems need a 2D or 3D grid");
  for (int a = 0; a < rhs.ndim(); ++a)
    if (rhs.spec().dims[static_cast<std::size_t>(a)] < 3) throw InvalidArgument("Poisson grid needs an interior");
  for (double v : rhs.values())
    if (!std::isfinite(v)) throw InvalidArgument("Poisson rhs must be finite");
  for (double v : boundary.values())
    if (!std::isfinite(v)) throw InvalidArgument("Poisson boundary values must be finite");
}

namespace {

bool on_boundary(const GridSpec& spec, std::size_t flat) {
  const auto ijk = spec.unravel(flat);
  for (int a = 0; a < spec.ndim; ++a) {
    const auto k = static_cast<std::size_t>(a);
    if (ijk[k] == 0 || ijk[k] + 1 == spec.dims[k]) return true;
  }
  return false;
}

}  // namespace

ScalarGrid poisson_solve(const PoissonProblem& problem, const PoissonOptions& opt) {
  problem.validate();
  const GridSpec& spec = problem.rhs.spec();
  const std::size_t n = spec.size();
  const auto strides = spec.strides();
  const double h2 = spec.spacing * spec.spacing;

  std::vector<std::ptrdiff_t> unknown(n, -1);
  std::size_t m = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (!on_boundary(spec, i)) unknown[i] = static_cast<std::ptrdiff_t>(m++);

  // Scaled by -h^2 so the matrix is symmetric positive definite.
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd b(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < n; ++i) {
    if (unknown[i] < 0) continue;
    const auto row = unknown[i];
    triplets.emplace_back(row, row, 2.0 * spec.ndim);
    double rhs = -h2 * problem.rhs[i];
    for (int a = 0; a < spec.ndim; ++a) {
      for (const std::size_t j : {i - strides[static_cast<std::size_t>(a)], i + strides[static_cast<std::size_t>(a)]}) {
        if (unknown[j] >= 0)
          triplets.emplace_back(row, unknown[j], -1.0);
        else
          rhs += problem.boundary[j];
      }
    }
    b[row] = rhs;
  }
  Eigen::SparseMatrix<double> a(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  a.setFromTriplets(triplets.begin(), triplets.end());

  ScalarGrid u(spec);
  for (std::size_t i = 0; i < n; ++i)
    if (unknown[i] < 0) u[i] = problem.boundary[i];
  if (b.norm() == 0.0) return u;

  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(opt.tolerance);
  cg.setMaxIterations(static_cast<Eigen::Index>(opt.max_iterations));
  cg.compute(a);
  const Eigen::VectorXd x = cg.solve(b);
  if (cg.info() != Eigen::Success)
    throw NumericalFailure("Poisson CG did not converge: relative residual " + std::to_string(cg.error()) + " after " +
                           std::to_string(cg.iterations()) + " iterations");
  for (std::size_t i = 0; i < n; ++i)
    if (unknown[i] >= 0) u[i] = x[unknown[i]];
  return u;
}

// ---------------------------------------------------------------------------
// Moments and least-squares fit

std::vector<double> second_moment_lrt(const RayHistograms& hs) {
  std::vector<double> out(hs.rays.size());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = moment(hs.slice(r), 2);
  return out;
}

namespace {

constexpr std::size_t kComp = 6;

struct RayOperator {
  const GridSpec& spec;
  std::span<const Ray3> rays;
  double step;
  std::vector<std::array<double, kComp>> weights;

  RayOperator(const GridSpec& s, std::span<const Ray3> r, double st) : spec(s), rays(r), step(st) {
    weights.resize(rays.size());
    for (std::size_t i = 0; i < rays.size(); ++i) {
      const Vec3 xi[2] = {rays[i].xi, rays[i].xi};
      const auto w = contraction_weights(2, 3, xi);
      std::copy(w.begin(), w.end(), weights[i].begin());
    }
  }

  // x is voxel-major: x[6 * voxel + component].
  void forward(const std::vector<double>& x, std::vector<double>& y) const {
    y.assign(rays.size(), 0.0);
    parallel_for(rays.size(), [&](std::size_t r) {
      const RayPath path = ray_path(spec, rays[r].x, rays[r].xi, step);
      const auto& w = weights[r];
      double acc = 0.0;
      for (std::size_t s = 0; s < path.s.size(); ++s) {
        const InterpStencil st = interp_stencil(spec, &path.points[3 * s]);
        for (int q = 0; q < st.count; ++q) {
          const double* v = &x[kComp * st.index[static_cast<std::size_t>(q)]];
          double c = 0.0;
          for (std::size_t k = 0; k < kComp; ++k) c += w[k] * v[k];
          acc += st.weight[static_cast<std::size_t>(q)] * c;
        }
      }
      y[r] = acc * path.step;
    });
  }

  // A fixed chunk count keeps the summation order independent of the thread count.
  void adjoint(const std::vector<double>& y, std::vector<double>& x) const {
    const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(8, rays.size()));
    std::vector<std::vector<double>> partial(chunks, std::vector<double>(kComp * spec.size(), 0.0));
    parallel_for(chunks, [&](std::size_t c) {
      auto& out = partial[c];
      const std::size_t lo = rays.size() * c / chunks, hi = rays.size() * (c + 1) / chunks;
      for (std::size_t r = lo; r < hi; ++r) {
        if (y[r] == 0.0) continue;
        const RayPath path = ray_path(spec, rays[r].x, rays[r].xi, step);
        const auto& w = weights[r];
        const double yr = y[r] * path.step;
        for (std::size_t s = 0; s < path.s.size(); ++s) {
          const InterpStencil st = interp_stencil(spec, &path.points[3 * s]);
          for (int q = 0; q < st.count; ++q) {
            double* v = &out[kComp * st.index[static_cast<std::size_t>(q)]];
            const double a = yr * st.weight[static_cast<std::size_t>(q)];
            for (std::size_t k = 0; k < kComp; ++k) v[k] += a * w[k];
          }
        }
      }
    });
    x = std::move(partial[0]);
    for (std::size_t c = 1; c < chunks; ++c)
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += partial[c][i];
  }
};

// Graph Laplacian over grid edges, each component weighted by its multiplicity.
void add_gradient_penalty(const GridSpec& spec, double scale, const std::vector<double>& x, std::vector<double>& y) {
  static constexpr double mult[kComp] = {1, 2, 2, 1, 2, 1};
  const auto strides = spec.strides();
  const std::size_t n = spec.size();
  parallel_for(n, [&](std::size_t i) {
    const auto ijk = spec.unravel(i);
    for (int a = 0; a < 3; ++a) {
      const auto ax = static_cast<std::size_t>(a);
      for (int dir = -1; dir <= 1; dir += 2) {
        if (dir < 0 && ijk[ax] == 0) continue;
        if (dir > 0 && ijk[ax] + 1 == spec.dims[ax]) continue;
        const std::size_t j = dir < 0 ? i - strides[ax] : i + strides[ax];
        for (std::size_t k = 0; k < kComp; ++k) y[kComp * i + k] += scale * mult[k] * (x[kComp * i + k] - x[kComp * j + k]);
      }
    }
  });
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double lanczos_condition(const std::vector<double>& alpha, const std::vector<double>& beta) {
  const auto k = static_cast<Eigen::Index>(alpha.size());
  if (k == 0) return 0.0;
  Eigen::VectorXd diag(k);
  Eigen::VectorXd sub(std::max<Eigen::Index>(k - 1, 0));
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    diag[j] = 1.0 / alpha[ju] + (j > 0 ? beta[ju - 1] / alpha[ju - 1] : 0.0);
    if (j + 1 < k) sub[j] = std::sqrt(beta[ju]) / alpha[ju];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

std::size_t distinct_directions(std::span<const Ray3> rays) {
  std::set<std::array<long long, 3>> seen;
  for (const auto& r : rays)
    seen.insert({std::llround(r.xi[0] * 1e9), std::llround(r.xi[1] * 1e9), std::llround(r.xi[2] * 1e9)});
  return seen.size();
}

}  // namespace

FitResult fit_rank2_from_lrt(std::span<const Ray3> rays, std::span<const double> data, const GridSpec& spec,
                             const FitOptions& opt) {
  spec.validate();
  if (spec.ndim != 3) throw InvalidArgument("rank-2 fit needs a 3D grid");
  if (rays.empty()) throw InvalidArgument("no rays to fit");
  if (data.size() != rays.size()) throw InvalidArgument("one data value per ray needed");
  if (!(opt.lambda >= 0.0) || !(opt.lambda_l2 >= 0.0) || !(opt.lambda + opt.lambda_l2 > 0.0))
    throw InvalidArgument("regularization weights must be non-negative and not both zero");
  for (const auto& r : rays) r.check_unit(1e-9);
  for (double d : data)
    if (!std::isfinite(d)) throw InvalidArgument("ray data must be finite");

  const RayOperator op(spec, rays, opt.step);
  const double inv_n = 1.0 / static_cast<double>(rays.size());
  const double reg = opt.lambda * spec.spacing;
  auto normal = [&](const std::vector<double>& x, std::vector<double>& y) {
    std::vector<double> ax;
    op.forward(x, ax);
    for (double& v : ax) v *= inv_n;
    op.adjoint(ax, y);
    add_gradient_penalty(spec, reg, x, y);
    if (opt.lambda_l2 > 0.0) {
      static constexpr double mult[kComp] = {1, 2, 2, 1, 2, 1};
      const double w = opt.lambda_l2 * spec.spacing * spec.spacing * spec.spacing;
      for (std::size_t i = 0; i < x.size(); ++i) y[i] += w * mult[i % kComp] * x[i];
    }
  };

  std::vector<double> b;
  op.adjoint(std::vector<double>(data.begin(), data.end()), b);
  for (double& v : b) v *= inv_n;

  FitResult res;
  std::vector<double> x(b.size(), 0.0);
  const double bnorm = std::sqrt(dot(b, b));
  if (bnorm > 0.0) {
    std::vector<double> r = b, p = b, ap;
    double rr = dot(r, r);
    std::vector<double> alphas, betas;
    for (res.iterations = 0; res.iterations < opt.max_iterations;) {
      normal(p, ap);
      const double alpha = rr / dot(p, ap);
      for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] += alpha * p[i];
        r[i] -= alpha * ap[i];
      }
      ++res.iterations;
      alphas.push_back(alpha);
      const double rr_new = dot(r, r);
      res.residual = std::sqrt(rr_new) / bnorm;
      if (res.residual <= opt.tolerance) break;
      const double beta = rr_new / rr;
      betas.push_back(beta);
      for (std::size_t i = 0; i < x.size(); ++i) p[i] = r[i] + beta * p[i];
      rr = rr_new;
    }
    res.condition = lanczos_condition(alphas, betas);
  }

  const std::size_t dirs = distinct_directions(rays);
  if (dirs < opt.min_directions || rays.size() < x.size())
    warn("rank-2 fit is underdetermined (" + std::to_string(dirs) + " directions, " + std::to_string(rays.size()) +
         " rays, " + std::to_string(x.size()) + " unknowns); condition estimate " + std::to_string(res.condition));

  std::vector<ScalarGrid> comps(kComp, ScalarGrid(spec));
  for (std::size_t i = 0; i < spec.size(); ++i)
    for (std::size_t k = 0; k < kComp; ++k) comps[k][i] = x[kComp * i + k];
  res.g = SymTensorField(2, std::move(comps));
  return res;
}

// ---------------------------------------------------------------------------
// Pointwise algebra

Mat3 adjugate3(const Mat3& a) {
  Mat3 c;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const int i1 = (i + 1) % 3, i2 = (i + 2) % 3, j1 = (j + 1) % 3, j2 = (j + 2) % 3;
      // Cyclic minors carry the cofactor sign; adjugate is the transpose.
      c(j, i) = a(i1, j1) * a(i2, j2) - a(i1, j2) * a(i2, j1);
    }
  return c;
}

HessianCandidate hessian_from_kroner(const Mat3& k, double tau) {
  HessianCandidate out;
  const double det = k.determinant();
  if (!(det > tau) || !std::isfinite(det)) return out;
  out.degenerate = false;
  out.plus = adjugate3(k) / std::sqrt(2.0 * det);
  return out;
}

Mat3 tensor_at(const SymTensorField& f, std::size_t i) {
  if (f.rank() != 2 || f.ndim() != 3) throw InvalidArgument("tensor_at needs a 3D rank-2 field");
  Mat3 m;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) m(a, b) = f.component({a, b})[i];
  return m;
}

// ---------------------------------------------------------------------------
// Pipeline

Recovery recover_potential(const RayHistograms& hs, const GridSpec& spec, const DopplerOptions& opt) {
  FitResult fit = fit_rank2_from_lrt(hs.rays, second_moment_lrt(hs), spec, opt.fit);
  Recovery rec = potential_from_kroner(kroner_rank2(fit.g, opt.kroner_order), opt);
  rec.fit = std::move(fit);
  return rec;
}

ScalarGrid harmonic_fill(const ScalarGrid& values, const std::vector<char>& known, const PoissonOptions& opt) {
  const GridSpec& spec = values.spec();
  if (known.size() != spec.size()) throw InvalidArgument("mask size does not match the grid");
  const std::size_t n = spec.size();
  const auto strides = spec.strides();
  std::vector<std::ptrdiff_t> unknown(n, -1);
  std::size_t m = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (!known[i] && !on_boundary(spec, i)) unknown[i] = static_cast<std::ptrdiff_t>(m++);

  ScalarGrid out(spec);
  for (std::size_t i = 0; i < n; ++i)
    if (known[i]) out[i] = values[i];
  if (m == 0) return out;

  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < n; ++i) {
    if (unknown[i] < 0) continue;
    const auto row = unknown[i];
    triplets.emplace_back(row, row, 2.0 * spec.ndim);
    for (int a = 0; a < spec.ndim; ++a)
      for (const std::size_t j : {i - strides[static_cast<std::size_t>(a)], i + strides[static_cast<std::size_t>(a)]}) {
        if (unknown[j] >= 0)
          triplets.emplace_back(row, unknown[j], -1.0);
        else if (known[j])
          b[row] += values[j];
      }
  }
  if (b.norm() == 0.0) return out;
  Eigen::SparseMatrix<double> a(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  a.setFromTriplets(triplets.begin(), triplets.end());
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(opt.tolerance);
  cg.setMaxIterations(static_cast<Eigen::Index>(opt.max_iterations));
  cg.compute(a);
  const Eigen::VectorXd x = cg.solve(b);
  if (cg.info() != Eigen::Success)
    throw NumericalFailure("harmonic fill did not converge: relative residual " + std::to_string(cg.error()));
  for (std::size_t i = 0; i < n; ++i)
    if (unknown[i] >= 0) out[i] = x[unknown[i]];
  return out;
}

Recovery potential_from_kroner(const SymTensorField& kf, const DopplerOptions& opt) {
  if (kf.rank() != 2 || kf.ndim() != 3) throw InvalidArgument("Kroner field must be 3D rank 2");
  if (!(opt.tau_det >= 0.0) || !(opt.support_fraction >= 0.0) || !(opt.min_conditioning >= 0.0) ||
      !(opt.fill_fraction >= 0.0)) throw InvalidArgument("thresholds must be non-negative");
  Recovery rec;
  const GridSpec& spec = kf.spec();
  const std::size_t n = spec.size();

  std::vector<Mat3> km(n);
  std::vector<double> knorm(n);
  double kmax = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    km[i] = tensor_at(kf, i);
    knorm[i] = km[i].norm();
    kmax = std::max(kmax, knorm[i]);
  }
  rec.u = ScalarGrid(spec);
  rec.laplacian = ScalarGrid(spec);
  rec.degenerate = ScalarGrid(spec);
  if (kmax == 0.0) return rec;

  // Points above fill_fraction are traversed by the sign fill; the stricter
  // support_fraction defines the support used for the degeneracy diagnostic.
  std::vector<char> reach(n, 0);
  std::vector<double> cubes;
  for (std::size_t i = 0; i < n; ++i) {
    if (on_boundary(spec, i)) continue;
    reach[i] = knorm[i] > opt.fill_fraction * kmax;
    if (knorm[i] > opt.support_fraction * kmax) cubes.push_back(knorm[i] * knorm[i] * knorm[i]);
  }
  rec.support_points = cubes.size();
  if (cubes.empty()) return rec;
  std::nth_element(cubes.begin(), cubes.begin() + static_cast<std::ptrdiff_t>(cubes.size() / 2), cubes.end());
  const double tau = opt.tau_det * cubes[cubes.size() / 2];

  // quality = det K / |K|^3 at well-conditioned points, -1 elsewhere.
  std::vector<HessianCandidate> cand(n);
  std::vector<double> quality(n, -1.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!reach[i]) continue;
    cand[i] = hessian_from_kroner(km[i], tau);
    if (cand[i].degenerate) {
      rec.degenerate[i] = 1.0;
      if (knorm[i] > opt.support_fraction * kmax) ++rec.degenerate_points;
      continue;
    }
    const double q = km[i].determinant() / (knorm[i] * knorm[i] * knorm[i]);
    if (q > opt.min_conditioning) quality[i] = q;
  }
  if (static_cast<double>(rec.degenerate_points) > opt.max_degenerate_fraction * static_cast<double>(rec.support_points))
    throw DegenerateSupport("degenerate Kroner determinant on " + std::to_string(rec.degenerate_points) + " of " +
                                std::to_string(rec.support_points) + " support points",
                            rec.degenerate);

  const auto strides = spec.strides();
  auto neighbours = [&](std::size_t i, auto&& fn) {
    const auto ijk = spec.unravel(i);
    for (std::size_t a = 0; a < 3; ++a) {
      if (ijk[a] > 0) fn(i - strides[a]);
      if (ijk[a] + 1 < spec.dims[a]) fn(i + strides[a]);
    }
  };

  // Sign flood fill, best-conditioned frontier point first. A point picks the
  // candidate closest (Frobenius) to the signed Hessians already placed around
  // it; other support points carry the reference of the point that reached them.
  std::vector<char> queued(n, 0);
  std::vector<char> signed_(n, 0);
  std::vector<Mat3> ref(n, Mat3::Zero());
  std::vector<std::size_t> seeds;
  for (std::size_t i = 0; i < n; ++i)
    if (quality[i] >= 0.0) seeds.push_back(i);
  std::stable_sort(seeds.begin(), seeds.end(), [&](std::size_t a, std::size_t b) { return quality[a] > quality[b]; });
  std::size_t components = 0;
  for (std::size_t seed : seeds) {
    if (queued[seed]) continue;
    ++components;
    std::priority_queue<std::pair<double, std::size_t>> frontier;
    frontier.emplace(quality[seed], seed);
    queued[seed] = 1;
    ref[seed] = cand[seed].plus;
    while (!frontier.empty()) {
      const std::size_t p = frontier.top().second;
      frontier.pop();
      if (p != seed && quality[p] >= 0.0) {
        Mat3 around = Mat3::Zero();
        neighbours(p, [&](std::size_t j) {
          if (signed_[j]) around += ref[j];
        });
        const double agree = (cand[p].plus.array() * around.array()).sum();
        ref[p] = agree >= 0.0 ? cand[p].plus : cand[p].minus();
      }
      signed_[p] = 1;
      neighbours(p, [&](std::size_t q) {
        if (!reach[q] || queued[q]) return;
        queued[q] = 1;
        if (quality[q] < 0.0) ref[q] = ref[p];
        frontier.emplace(quality[q], q);
      });
    }
  }
  if (components > 1) warn("sign flood fill found " + std::to_string(components) + " disconnected support regions");

  // Laplacian from the well-conditioned points, harmonic in between.
  std::vector<char> known(n, 0);
  ScalarGrid trace(spec);
  for (std::size_t i = 0; i < n; ++i)
    if (quality[i] >= 0.0) {
      trace[i] = ref[i].trace();
      known[i] = 1;
    }
  rec.laplacian = harmonic_fill(trace, known, opt.poisson);

  // u has compact support, so its Laplacian integrates to zero.
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (rec.laplacian[i] != 0.0) {
      sum += rec.laplacian[i];
      ++count;
    }
  if (count > 0)
    for (std::size_t i = 0; i < n; ++i)
      if (rec.laplacian[i] != 0.0) rec.laplacian[i] -= sum / static_cast<double>(count);

  PoissonProblem prob{rec.laplacian, ScalarGrid(spec)};
  rec.u = poisson_solve(prob, opt.poisson);
  return rec;
}

double min_sign_rel_l2(const ScalarGrid& u, const ScalarGrid& truth) {
  if (u.spec() != truth.spec()) throw InvalidArgument("grids differ");
  double dm = 0.0, dp = 0.0, t = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dm += (u[i] - truth[i]) * (u[i] - truth[i]);
    dp += (u[i] + truth[i]) * (u[i] + truth[i]);
    t += truth[i] * truth[i];
  }
  if (t == 0.0) return std::sqrt(std::min(dm, dp));
  return std::sqrt(std::min(dm, dp) / t);
}

}  // namespace htomo
