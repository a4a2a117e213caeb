#include <cmath>
#include <random>

#include "doctest.h"
#include "htomo/doppler.hpp"
#include "htomo/tensor.hpp"

using namespace htomo;

namespace {

Mat3 random_matrix(std::mt19937_64& rng, bool symmetric) {
  std::uniform_real_distribution<double> c(-1.0, 1.0);
  Mat3 a;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a(i, j) = c(rng);
  return symmetric ? Mat3(0.5 * (a + a.transpose())) : a;
}

double rel(const Mat3& a, const Mat3& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

}  // namespace

TEST_CASE("adjugate examples") {
  CHECK(rel(adjugate3(Mat3::Identity()), Mat3::Identity()) == 0.0);
  CHECK(rel(adjugate3(-Mat3::Identity()), Mat3::Identity()) == 0.0);
  const Mat3 d = Eigen::Vector3d(2, 3, 4).asDiagonal();
  const Mat3 expect = Eigen::Vector3d(12, 8, 6).asDiagonal();
  CHECK(rel(adjugate3(d), expect) == 0.0);
  // Cofactor transpose of a non-symmetric matrix.
  Mat3 a;
  a << 1, 2, 3, 0, 1, 4, 5, 6, 0;
  Mat3 adj;
  adj << -24, 18, 5, 20, -15, -4, -5, 4, 1;
  CHECK(rel(adjugate3(a), adj) == 0.0);
}

TEST_CASE("property: adjugate identities on random matrices") {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 2000; ++t) {
    const Mat3 a = random_matrix(rng, t % 2 == 0);
    const double det = a.determinant();
    const Mat3 adj = adjugate3(a);
    CHECK(rel(a * adj, det * Mat3::Identity()) <= 1e-12);
    CHECK(rel(adjugate3(adj), det * a) <= 1e-12);
    CHECK(std::abs(adj.determinant() - det * det) <= 1e-12 * std::max(1.0, det * det));
  }
}

TEST_CASE("hessian_from_kroner examples") {
  const auto two = hessian_from_kroner(2.0 * Mat3::Identity(), 1e-12);
  REQUIRE(!two.degenerate);
  CHECK(rel(two.plus, Mat3::Identity()) <= 1e-14);
  CHECK(rel(two.minus(), -Mat3::Identity()) <= 1e-14);
  CHECK(hessian_from_kroner(Mat3::Zero(), 1e-12).degenerate);
  // Rank one: Adj vanishes, no recovery.
  const Eigen::Vector3d v(1, 2, 3);
  CHECK(hessian_from_kroner(v * v.transpose(), 1e-12).degenerate);

  // u = exp(-|x|^2 / 2): d2u(0) = -I, K(0) = 2 Adj(-I) = 2I.
  const auto spec = GridSpec::cube(3, 41, -1.0, 1.0);
  const auto u = grid_from_function(spec, [](const Vec3& x) { return std::exp(-0.5 * dot(x, x)); });
  const auto k = kroner_rank2(sym_power(gradient(u), 2));
  const Mat3 k0 = tensor_at(k, spec.index(20, 20, 20));
  CHECK(rel(k0, 2.0 * Mat3::Identity()) <= 0.02);
  const auto h = hessian_from_kroner(k0, 1e-12);
  REQUIRE(!h.degenerate);
  CHECK(std::min(rel(h.plus, -Mat3::Identity()), rel(h.minus(), -Mat3::Identity())) <= 0.02);
}

TEST_CASE("property: recovered Hessians satisfy 2 Adj(H) = K for both signs") {
  std::mt19937_64 rng(5);
  int checked = 0;
  for (int t = 0; t < 2000; ++t) {
    const Mat3 hs = random_matrix(rng, true);
    const Mat3 k = 2.0 * adjugate3(hs);
    const auto c = hessian_from_kroner(k, 1e-10);
    if (c.degenerate) continue;
    ++checked;
    CHECK((2.0 * adjugate3(c.plus) - k).norm() <= 1e-8 * k.norm());
    CHECK((2.0 * adjugate3(c.minus()) - k).norm() <= 1e-8 * k.norm());
    CHECK(std::min(rel(c.plus, hs), rel(c.minus(), hs)) <= 1e-8);
  }
  CHECK(checked > 1500);
}

TEST_CASE("Poisson: quadratics are exact and zero data gives zero") {
  for (std::size_t n : {5u, 9u, 12u}) {
    const auto spec = GridSpec::cube(3, n, -1.0, 1.0);
    const auto truth = grid_from_function(spec, [](const Vec3& x) { return dot(x, x); });
    const auto u = poisson_solve({grid_from_function(spec, [](const Vec3&) { return 6.0; }), truth});
    for (std::size_t i = 0; i < spec.size(); ++i) CHECK(u[i] == doctest::Approx(truth[i]).epsilon(1e-8));
  }
  const auto spec = GridSpec::cube(3, 8, 0.0, 1.0);
  CHECK(poisson_solve({ScalarGrid(spec), ScalarGrid(spec)}).max_abs() == 0.0);
  const auto plane = GridSpec::cube(2, 9, -1.0, 1.0);
  const auto t2 = grid_from_function(plane, [](const Vec3& x) { return x[0] * x[0] - x[1] * x[1] + x[0]; });
  const auto u2 = poisson_solve({ScalarGrid(plane), t2});
  for (std::size_t i = 0; i < plane.size(); ++i) CHECK(u2[i] == doctest::Approx(t2[i]).epsilon(1e-8));
  CHECK_THROWS_AS(poisson_solve({ScalarGrid(GridSpec::cube(3, 2, 0.0, 1.0)), ScalarGrid(GridSpec::cube(3, 2, 0.0, 1.0))}),
                  InvalidArgument);
}

TEST_CASE("Poisson: second-order convergence on a Gaussian") {
  auto error = [](std::size_t n) {
    const auto spec = GridSpec::cube(3, n, -2.0, 2.0);
    const auto truth = grid_from_function(spec, [](const Vec3& x) { return std::exp(-0.5 * dot(x, x)); });
    const auto rhs = grid_from_function(spec, [](const Vec3& x) {
      const double r2 = dot(x, x);
      return (r2 - 3.0) * std::exp(-0.5 * r2);
    });
    const auto u = poisson_solve({rhs, truth});
    double e = 0.0, t = 0.0;
    for (std::size_t i = 0; i < spec.size(); ++i) {
      e += (u[i] - truth[i]) * (u[i] - truth[i]);
      t += truth[i] * truth[i];
    }
    return std::sqrt(e / t);
  };
  const double e1 = error(17), e2 = error(33);
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.3));
}

TEST_CASE("Poisson non-convergence reports the residual") {
  const auto spec = GridSpec::cube(3, 20, -1.0, 1.0);
  PoissonOptions opt;
  opt.max_iterations = 2;
  try {
    poisson_solve({grid_from_function(spec, [](const Vec3& x) { return std::sin(5 * x[0]); }), ScalarGrid(spec)}, opt);
    FAIL("expected failure");
  } catch (const NumericalFailure& e) {
    CHECK(std::string(e.what()).find("residual") != std::string::npos);
  }
}

TEST_CASE("second moments match the direct transform of du (.) du") {
  const auto spec = GridSpec::cube(3, 25, -1.5, 1.5);
  const auto u = grid_from_function(spec, [](const Vec3& x) { return std::exp(-dot(x, x)); });
  const auto du = gradient(u);
  const auto dirs = fibonacci_hemisphere(6);
  const auto rays = parallel_ray_set(dirs, 5, 0.8);
  const double m = 1.01 * du.max_abs();
  const auto m2 = second_moment_lrt(hlrt(du, rays, uniform_edges(-m, m, 512)));
  const auto direct = lrt(sym_power(du, 2), rays);
  const auto exact_sq = [&] {
    // Same samples, squared before integrating: differs from m2 only by binning.
    std::vector<double> out;
    for (const auto& r : rays) {
      const std::vector<Vec3> xi(1, r.xi);
      const auto rs = contracted_samples(du, r, xi);
      double acc = 0.0;
      for (double v : rs.values) acc += v * v * rs.step;
      out.push_back(acc);
    }
    return out;
  }();
  double err = 0.0, err_direct = 0.0, scale = 0.0;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    err = std::max(err, std::abs(m2[r] - exact_sq[r]));
    err_direct = std::max(err_direct, std::abs(m2[r] - direct.at(r)));
    scale = std::max(scale, exact_sq[r]);
  }
  CHECK(err <= 1e-3 * scale);
  CHECK(err_direct <= 0.01 * scale);

  const SymTensorField zero(1, spec);
  for (double v : second_moment_lrt(hlrt(zero, rays, uniform_edges(-1.0, 1.0, 9)))) CHECK(v == 0.0);
}

TEST_CASE("second moment of a constant gradient is value squared times chord") {
  const auto spec = GridSpec::cube(3, 9, -1.0, 1.0);
  const auto u = grid_from_function(spec, [](const Vec3& x) { return 0.5 * x[0] - 0.25 * x[2]; });
  const auto du = gradient(u);
  const Ray3 ray{{0.1, 0.2, 0.0}, normalized(Vec3{1.0, 0.0, 1.0})};
  const auto m2 = second_moment_lrt(hlrt(du, std::vector<Ray3>{ray}, uniform_edges(-1.0, 1.0, 400)));
  const std::vector<Vec3> xi(1, ray.xi);
  const double chord = contracted_samples(du, ray, xi).chord();
  const double slope = (0.5 - 0.25) / std::sqrt(2.0);
  // Bin midpoint vs exact value: at most half a bin width off.
  CHECK(std::abs(m2[0] - slope * slope * chord) <= 2.0 * std::abs(slope) * 0.0025 * chord);
}

namespace {

ScalarGrid windowed_gaussian(const GridSpec& spec, double sigma, double radius, double sign = 1.0) {
  return grid_from_function(spec, [&](const Vec3& x) {
    const double r2 = dot(x, x);
    if (r2 >= radius * radius) return 0.0;
    return sign * std::exp(-r2 / (2 * sigma * sigma)) * std::pow(1.0 - r2 / (radius * radius), 3);
  });
}

double field_rel(const SymTensorField& a, const SymTensorField& b) {
  double d = 0.0, t = 0.0;
  const auto& sets = SymTensorField::multisets(a.rank(), a.ndim());
  for (std::size_t c = 0; c < a.num_components(); ++c) {
    const double m = SymTensorField::multiplicity(sets[c]);
    for (std::size_t i = 0; i < a.component(c).size(); ++i) {
      const double x = a.component(c)[i], y = b.component(c)[i];
      d += m * (x - y) * (x - y);
      t += m * y * y;
    }
  }
  return std::sqrt(d / t);
}

}  // namespace

TEST_CASE("harmonic_fill reproduces linear fields and keeps known values") {
  const auto spec = GridSpec::cube(3, 11, -1.0, 1.0);
  const auto lin = grid_from_function(spec, [](const Vec3& x) { return 1.0 + x[0] + 2.0 * x[1] - x[2]; });
  std::vector<char> known(spec.size(), 0);
  std::mt19937_64 rng(5);
  std::bernoulli_distribution pick(0.3);
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const auto ijk = spec.unravel(i);
    bool edge = false;
    for (int a = 0; a < 3; ++a) edge = edge || ijk[a] == 0 || ijk[a] == 10;
    known[i] = edge || pick(rng);
  }
  const auto filled = harmonic_fill(lin, known);
  for (std::size_t i = 0; i < spec.size(); ++i) CHECK(filled[i] == doctest::Approx(lin[i]).epsilon(1e-8));

  // Unknown box-boundary nodes are zero.
  std::vector<char> centre(spec.size(), 0);
  centre[spec.index(5, 5, 5)] = 1;
  const auto bump = harmonic_fill(lin, centre);
  CHECK(bump[spec.index(0, 5, 5)] == 0.0);
  CHECK(bump[spec.index(5, 5, 5)] == lin[spec.index(5, 5, 5)]);
  CHECK(bump[spec.index(4, 5, 5)] > 0.0);
  CHECK(bump[spec.index(4, 5, 5)] < lin[spec.index(5, 5, 5)]);
}

TEST_CASE("potential_from_kroner: zero field and exact Kroner data") {
  const auto spec = GridSpec::cube(3, 24, -1.0, 1.0);
  const auto zero = potential_from_kroner(SymTensorField(2, spec));
  CHECK(zero.u.max_abs() == 0.0);

  const auto u = windowed_gaussian(spec, 0.5, 0.95);
  const auto rec = potential_from_kroner(kroner_rank2(sym_power(gradient(u), 2), 4));
  CHECK(rec.degenerate_points == 0);
  CHECK(min_sign_rel_l2(rec.u, u) <= 0.10);
}

TEST_CASE("degenerate support is reported with its mask") {
  // K = diag(1, 0, 0) has det K = 0 everywhere on the support.
  const auto spec = GridSpec::cube(3, 9, -1.0, 1.0);
  SymTensorField k(2, spec);
  auto& k00 = k.component(std::size_t{0});
  for (std::size_t i = 0; i < spec.size(); ++i) k00[i] = 1.0;
  try {
    potential_from_kroner(k);
    FAIL("expected failure");
  } catch (const DegenerateSupport& e) {
    CHECK(e.mask().max_abs() == 1.0);
  }
}

TEST_CASE("fit: zero data gives zero and repeated fits are identical") {
  const auto spec = GridSpec::cube(3, 8, -1.0, 1.0);
  const auto rays = parallel_ray_set(fibonacci_hemisphere(60), 6, 1.0);
  const auto zero = fit_rank2_from_lrt(rays, std::vector<double>(rays.size(), 0.0), spec);
  for (std::size_t c = 0; c < 6; ++c) CHECK(zero.g.component(c).max_abs() == 0.0);

  std::vector<double> data(rays.size());
  for (std::size_t r = 0; r < rays.size(); ++r) data[r] = std::cos(static_cast<double>(r));
  const auto a = fit_rank2_from_lrt(rays, data, spec);
  const auto b = fit_rank2_from_lrt(rays, data, spec);
  for (std::size_t c = 0; c < 6; ++c) CHECK(a.g.component(c) == b.g.component(c));
  CHECK(a.condition > 1.0);

  CHECK_THROWS_AS(fit_rank2_from_lrt(rays, std::vector<double>(3), spec), InvalidArgument);
  FitOptions none;
  none.lambda = none.lambda_l2 = 0.0;
  CHECK_THROWS_AS(fit_rank2_from_lrt(rays, data, spec, none), InvalidArgument);
}

TEST_CASE("fit: Kroner operator of the fitted field matches the true one") {
  const auto spec = GridSpec::cube(3, 16, -1.0, 1.0);
  const auto u = windowed_gaussian(spec, 0.5, 0.95);
  const auto g = sym_power(gradient(u), 2);
  const auto rays = parallel_ray_set(fibonacci_hemisphere(60), 40, 1.0);
  const auto data = lrt(g, rays);
  const auto fit = fit_rank2_from_lrt(rays, data.values, spec);
  CHECK(field_rel(kroner_rank2(fit.g, 4), kroner_rank2(g, 4)) <= 0.10);
}

TEST_CASE("recover_potential: zero field and sign symmetry") {
  const auto spec = GridSpec::cube(3, 16, -1.0, 1.0);
  const auto rays = parallel_ray_set(fibonacci_hemisphere(60), 24, 1.0);

  const SymTensorField zero(1, spec);
  const auto rec0 = recover_potential(hlrt(zero, rays, uniform_edges(-1.0, 1.0, 9)), spec);
  CHECK(rec0.u.max_abs() == 0.0);

  const auto up = windowed_gaussian(spec, 0.5, 0.95);
  const auto um = windowed_gaussian(spec, 0.5, 0.95, -1.0);
  const auto dp = gradient(up), dm = gradient(um);
  const double m = 1.01 * dp.max_abs();
  const auto edges = uniform_edges(-m, m, 512);
  const auto hp = hlrt(dp, rays, edges), hm = hlrt(dm, rays, edges);
  const auto mp = second_moment_lrt(hp), mm = second_moment_lrt(hm);
  double scale = 0.0;
  for (double v : mp) scale = std::max(scale, v);
  for (std::size_t r = 0; r < mp.size(); ++r) CHECK(std::abs(mp[r] - mm[r]) <= 1e-12 * scale);
  const auto rp = recover_potential(hp, spec), rm = recover_potential(hm, spec);
  // Data agree to rounding; the fit stops at a 1e-6 relative residual.
  CHECK(min_sign_rel_l2(rp.u, rm.u) <= 1e-4);
  CHECK(min_sign_rel_l2(rp.u, up) <= 0.10);
}
