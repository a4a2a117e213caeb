#include <cmath>
#include <random>

#include "doctest.h"
#include "htomo/distribution.hpp"

using namespace htomo;

namespace {

double cubic(double x) { return (x - 1.0) * (x - 3.0) * (x - 6.0) + 20.0; }
double cubic_prime(double x) { return 3.0 * x * x - 20.0 * x + 27.0; }

// Brute-force binning oracle: n midpoint samples of f on [lo, hi].
Histogram brute_bin(const RealFunction& f, double lo, double hi, std::size_t n,
                    const std::vector<double>& edges) {
  std::vector<double> v(n);
  const double step = (hi - lo) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = f(lo + (static_cast<double>(i) + 0.5) * step);
  return bin_samples(v, step, edges);
}

}  // namespace

TEST_CASE("bin_samples: constant function is an atom of mass L") {
  const std::vector<double> v(1000, 0.37);
  const auto h = bin_samples(v, 0.002, uniform_edges(0.0, 1.0, 10));
  CHECK(h.mass[3] == doctest::Approx(2.0));
  CHECK(h.total() == doctest::Approx(2.0));
  for (std::size_t k = 0; k < 10; ++k)
    if (k != 3) CHECK(h.mass[k] == 0.0);
}

TEST_CASE("bin_samples: identity on [0,1] is uniform") {
  const auto h = brute_bin([](double x) { return x; }, 0.0, 1.0, 100000, uniform_edges(0.0, 1.0, 10));
  for (double m : h.mass) CHECK(m == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(h.underflow == 0.0);
  CHECK(h.overflow == 0.0);
}

TEST_CASE("bin_samples: x^2 on [-1,1] has density 2 near y = 0.25") {
  // Oracle: 10^6 brute-force samples, bin [0.24, 0.26].
  const std::vector<double> edges{0.24, 0.26};
  const auto h = brute_bin([](double x) { return x * x; }, -1.0, 1.0, 1000000, edges);
  CHECK(h.mass[0] / 0.02 == doctest::Approx(2.0).epsilon(0.01));
}

TEST_CASE("bin_samples: boundary placement and errors") {
  const std::vector<double> edges{0.0, 0.5, 1.0};
  const std::vector<double> v{0.5, 1.0, -0.1, 1.1, 0.0};
  const auto h = bin_samples(v, 1.0, edges);
  CHECK(h.mass[0] == 1.0);  // 0.0
  CHECK(h.mass[1] == 2.0);  // 0.5 goes up, 1.0 closes the last bin
  CHECK(h.underflow == 1.0);
  CHECK(h.overflow == 1.0);
  CHECK_THROWS_AS(bin_samples(v, 1.0, std::vector<double>{}), InvalidArgument);
  CHECK_THROWS_AS(bin_samples(v, 0.0, edges), InvalidArgument);
}

TEST_CASE("property: mass conservation") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> v(1000 + static_cast<std::size_t>(t) * 37);
    for (auto& x : v) x = u(rng);
    const double step = 0.001 * (t + 1);
    const auto h = bin_samples(v, step, uniform_edges(0.0, 1.0, 7 + static_cast<std::size_t>(t)));
    CHECK(h.underflow == 0.0);
    CHECK(h.overflow == 0.0);
    CHECK(h.total() == doctest::Approx(step * static_cast<double>(v.size())).epsilon(1e-12));
  }
}

TEST_CASE("analytic_distribution") {
  CHECK(analytic_distribution([](double x) { return 2 * x; }, [](double) { return 2.0; }, 0.0, 1.0, 1.0) ==
        doctest::Approx(0.5));
  CHECK(analytic_distribution([](double x) { return x * x; }, [](double x) { return 2 * x; }, -1.0, 1.0, 0.25) ==
        doctest::Approx(2.0).epsilon(1e-9));
  // Preimages of 20 under the cubic are 1, 3, 6 with |f'| = 10, 6, 15.
  CHECK(analytic_distribution(cubic, cubic_prime, 0.0, 7.0, 20.0) ==
        doctest::Approx(1.0 / 10 + 1.0 / 6 + 1.0 / 15).epsilon(1e-9));
  CHECK_THROWS_AS(analytic_distribution([](double x) { return x * x; }, [](double x) { return 2 * x; }, -1.0, 1.0, 0.0),
                  SingularInput);
}

TEST_CASE("analytic and binned densities agree for the cubic") {
  // 200 bins over the range [2, 44]; compare at bin midpoints away from critical values.
  const auto edges = uniform_edges(2.0, 44.0, 200);
  const auto h = brute_bin(cubic, 0.0, 7.0, 2000000, edges);
  const auto crit = analytic_critical_values(cubic, cubic_prime, 0.0, 7.0);
  REQUIRE(crit.size() == 2);
  int compared = 0;
  for (std::size_t k = 0; k < h.bins(); ++k) {
    const double y = h.midpoint(k);
    bool near = std::abs(y - 2.0) < 1.0 || std::abs(y - 44.0) < 1.0;
    for (double c : crit) near = near || std::abs(y - c) < 1.5;
    if (near) continue;
    const double binned = h.mass[k] / h.width(k);
    CHECK(analytic_distribution(cubic, cubic_prime, 0.0, 7.0, y) == doctest::Approx(binned).epsilon(0.05));
    ++compared;
  }
  CHECK(compared > 150);
}

TEST_CASE("cumulative and difference") {
  Histogram h{{0, 1, 2, 3}, {1, 2, 3}};
  const auto c = cumulative(h);
  CHECK(c.values == std::vector<double>{0, 1, 3, 6});
  CHECK(difference(c) == h.mass);
  Histogram z{{0, 1, 2}, {0, 0}};
  CHECK(cumulative(z).values == std::vector<double>{0, 0, 0});
  Histogram one{{0, 1}, {2.5}};
  CHECK(cumulative(one).values == std::vector<double>{0, 2.5});
}

TEST_CASE("property: cumulative inverts by differencing") {
  std::mt19937 rng(9);
  std::exponential_distribution<double> e(1.0);
  for (int t = 0; t < 30; ++t) {
    Histogram h;
    h.edges = uniform_edges(-1.0, 1.0, 50);
    h.mass.resize(50);
    for (auto& m : h.mass) m = e(rng);
    const auto back = difference(cumulative(h));
    for (std::size_t k = 0; k < 50; ++k) CHECK(back[k] == doctest::Approx(h.mass[k]).epsilon(1e-12));
  }
}

TEST_CASE("moments") {
  const auto edges = uniform_edges(0.0, 1.0, 1000);
  const auto h = brute_bin([](double x) { return x; }, 0.0, 1.0, 1000000, edges);
  CHECK(std::abs(moment(h, 1) - 0.5) <= 1e-3);
  CHECK(std::abs(moment(h, 2) - 1.0 / 3.0) <= 1e-3);
  CHECK(moment(h, 0) == doctest::Approx(1.0));
  const std::vector<double> c(500, 0.7);
  const auto atom = bin_samples(c, 0.004, uniform_edges(0.0, 1.0, 100));
  for (int k = 0; k <= 4; ++k) CHECK(std::abs(moment(atom, k) - std::pow(0.7, k) * 2.0) <= 2.0 * 0.005 * k + 1e-12);
  CHECK_THROWS_AS(moment(h, -1), InvalidArgument);
}

TEST_CASE("property: moment error is first order in step and bin width") {
  // f(x) = sin(3x) + 1.5 on [0, 2]; exact integrals of f^k by fine quadrature.
  auto f = [](double x) { return std::sin(3 * x) + 1.5; };
  auto exact = [&](int k) {
    const int n = 200000;
    double s = 0;
    for (int i = 0; i < n; ++i) s += std::pow(f((i + 0.5) * 2.0 / n), k);
    return s * 2.0 / n;
  };
  for (int k = 1; k <= 4; ++k) {
    const double ex = exact(k);
    double coarse = 0.0, fine = 0.0;
    for (std::size_t level = 0; level < 5; ++level) {
      const std::size_t nb = 20u << level;
      const double w = 2.0 / static_cast<double>(nb);
      const double step = 2.0 / static_cast<double>(1000u << level);
      const double err = std::abs(moment(brute_bin(f, 0.0, 2.0, 1000u << level, uniform_edges(0.5, 2.5, nb)), k) - ex);
      const double bound = k * std::pow(2.5, k - 1) * (w + step) * 2.0;
      CHECK(err <= bound);
      if (level == 0) coarse = err;
      fine = err;
    }
    CHECK(fine < coarse / 4);
  }
}

TEST_CASE("critical values of the cubic") {
  const auto crit = analytic_critical_values(cubic, cubic_prime, 0.0, 7.0);
  REQUIRE(crit.size() == 2);
  const double r = std::sqrt(400.0 - 4 * 3 * 27.0);
  CHECK(crit[0] == doctest::Approx(cubic((20.0 - r) / 6)).epsilon(1e-10));
  CHECK(crit[1] == doctest::Approx(cubic((20.0 + r) / 6)).epsilon(1e-10));

  const auto h = brute_bin(cubic, 0.0, 7.0, 700000, uniform_edges(2.0, 44.0, 200));
  const auto found = critical_values(h, 5.0);
  REQUIRE(found.size() == 2);
  const double w = 42.0 / 200;
  CHECK(std::abs(found[0] - crit[1]) <= w);
  CHECK(std::abs(found[1] - crit[0]) <= w);
}

TEST_CASE("critical values: monotone and constant functions") {
  const auto mono = brute_bin([](double x) { return x; }, 0.0, 1.0, 100003, uniform_edges(0.0, 1.0, 64));
  CHECK(critical_values(mono, 5.0).empty());
  const std::vector<double> c(300, 0.42);
  const auto atom = bin_samples(c, 0.01, uniform_edges(0.0, 1.0, 50));
  const auto found = critical_values(atom, 5.0);
  REQUIRE(found.size() == 1);
  CHECK(found[0] == doctest::Approx(0.43));
}

TEST_CASE("histogram CSV round trip") {
  Histogram h{{0.0, 0.1, 0.30000000000000004}, {1.0 / 3.0, 2.0}};
  const auto path = std::filesystem::temp_directory_path() / "htomo_hist.csv";
  write_histogram_csv(path, h);
  const auto back = read_histogram_csv(path);
  CHECK(back.edges == h.edges);
  CHECK(back.mass == h.mass);
  std::filesystem::remove(path);
}

TEST_CASE("spread_uniform distributes by bin overlap") {
  Histogram h;
  h.edges = uniform_edges(0.0, 1.0, 4);
  h.mass.assign(4, 0.0);
  const BinLocator loc(h.edges);
  spread_uniform(h, loc, 0.125, 0.625, 1.0);
  CHECK(h.mass[0] == doctest::Approx(0.25));
  CHECK(h.mass[1] == doctest::Approx(0.5));
  CHECK(h.mass[2] == doctest::Approx(0.25));
  spread_uniform(h, loc, 1.5, 0.5, 2.0);  // reversed ends
  CHECK(h.mass[2] == doctest::Approx(0.75));
  CHECK(h.mass[3] == doctest::Approx(0.5));
  CHECK(h.overflow == doctest::Approx(1.0));
  spread_uniform(h, loc, -0.3, -0.3, 0.7);  // atom below the range
  CHECK(h.underflow == doctest::Approx(0.7));
  spread_uniform(h, loc, 0.5, 0.5, 1.0);  // atom on an edge joins the upper bin
  CHECK(h.mass[2] == doctest::Approx(1.75));
  CHECK(h.total() + h.underflow + h.overflow == doctest::Approx(4.7).epsilon(1e-12));
}
