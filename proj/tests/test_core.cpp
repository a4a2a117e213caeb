#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "htomo/core.hpp"
#include "htomo/grid_io.hpp"

using namespace htomo;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("htomo_test_core_" + name);
}

}  // namespace

TEST_CASE("grid_from_function samples at grid positions") {
  const auto ones = grid_from_function(GridSpec::cube(2, 4, 0.0, 1.0), [](const Vec3&) { return 1.0; });
  CHECK(ones.size() == 16);
  for (double v : ones.values()) CHECK(v == 1.0);

  const auto cubic = grid_from_function(GridSpec::cube(1, 701, 0.0, 7.0), [](const Vec3& x) {
    return (x[0] - 1.0) * (x[0] - 3.0) * (x[0] - 6.0) + 20.0;
  });
  CHECK(cubic[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(cubic.spacing() == doctest::Approx(0.01));

  const auto bowl = grid_from_function(GridSpec::cube(2, 21, -1.0, 1.0),
                                       [](const Vec3& x) { return x[0] * x[0] + x[1] * x[1]; });
  CHECK(bowl.at(10, 10) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("grid_from_function rejects non-finite samples and reports the index") {
  const auto spec = GridSpec::cube(2, 3, 0.0, 1.0);
  try {
    grid_from_function(spec, [](const Vec3& x) { return x[1] > 0.9 && x[0] > 0.4 ? NAN : 0.0; });
    FAIL("expected rejection");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("index 5") != std::string::npos);
  }
}

TEST_CASE("GridSpec::from_box enforces uniform spacing") {
  const double lo[] = {0.0, 0.0};
  const double hi[] = {1.0, 2.0};
  const std::size_t dims_ok[] = {11, 21};
  const std::size_t dims_bad[] = {11, 11};
  CHECK(GridSpec::from_box(lo, hi, dims_ok).spacing == doctest::Approx(0.1));
  CHECK_THROWS_AS(GridSpec::from_box(lo, hi, dims_bad), InvalidArgument);
}

TEST_CASE("interpolation is exact for multilinear fields and zero outside") {
  const auto g = grid_from_function(GridSpec::cube(3, 5, -1.0, 1.0),
                                    [](const Vec3& x) { return 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[2]; });
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const Vec3 x{u(rng), u(rng), u(rng)};
    CHECK(g.interpolate(x) == doctest::Approx(1.0 + 2.0 * x[0] - x[1] + 0.5 * x[2]).epsilon(1e-12));
  }
  CHECK(g.interpolate(Vec3{1.2, 0.0, 0.0}) == 0.0);
}

TEST_CASE("sample_along_ray on the unit disk indicator") {
  const auto disk = grid_from_function(GridSpec::cube(2, 401, -2.0, 2.0),
                                       [](const Vec3& x) { return x[0] * x[0] + x[1] * x[1] <= 1.0 ? 1.0 : 0.0; });
  const auto rs = sample_along_ray(disk, Ray{0.0, 0.0}, 1e-3);
  REQUIRE(!rs.empty());
  const double h = disk.spacing();
  for (std::size_t i = 0; i < rs.s.size(); ++i) {
    if (std::abs(rs.s[i]) < 1.0 - h) CHECK(rs.values[i] == 1.0);
    if (std::abs(rs.s[i]) > 1.0 + h) CHECK(rs.values[i] == 0.0);
  }
  CHECK(rs.chord() == doctest::Approx(4.0));
}

TEST_CASE("rays outside the grid give no samples") {
  const ScalarGrid g(GridSpec::cube(2, 10, -1.0, 1.0));
  CHECK(sample_along_ray(g, Ray{0.3, 1.5}).empty());
  CHECK(sample_along_ray(g, Ray{0.0, -1.01}).empty());
}

TEST_CASE("orientation convention: point = p*Theta + s*Theta_perp") {
  // Brute-force point check of the parametrization for f(x, y) = x.
  const auto fx = grid_from_function(GridSpec::cube(2, 41, -1.0, 1.0), [](const Vec3& x) { return x[0]; });
  const Ray ray{pi / 2, 0.3};
  const auto rs = sample_along_ray(fx, ray, 0.01);
  REQUIRE(rs.s.size() > 10);
  for (std::size_t i = 0; i < rs.s.size(); ++i) {
    const double px = ray.p * std::cos(ray.theta) - rs.s[i] * std::sin(ray.theta);
    CHECK(rs.values[i] == doctest::Approx(px).epsilon(1e-12));
    CHECK(rs.values[i] == doctest::Approx(-rs.s[i]).epsilon(1e-12));
  }
}

TEST_CASE("property: constant-1 chord length equals box chord") {
  const auto ones = grid_from_function(GridSpec::cube(2, 33, -1.0, 1.0), [](const Vec3&) { return 1.0; });
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> th(0.0, pi);
  std::uniform_real_distribution<double> pp(-1.3, 1.3);
  for (int t = 0; t < 200; ++t) {
    const Ray ray{th(rng), pp(rng)};
    const double step = ones.spacing() / 2;
    const auto rs = sample_along_ray(ones, ray, step);
    // Exact chord of the square by clipping.
    const auto n = ray.normal();
    const auto d = ray.direction();
    const double base[2] = {ray.p * n[0], ray.p * n[1]};
    double s0 = -1e300, s1 = 1e300;
    bool hit = true;
    for (int a = 0; a < 2; ++a) {
      if (std::abs(d[a]) < 1e-15) {
        hit = hit && std::abs(base[a]) <= 1.0;
        continue;
      }
      double t0 = (-1.0 - base[a]) / d[a], t1 = (1.0 - base[a]) / d[a];
      if (t0 > t1) std::swap(t0, t1);
      s0 = std::max(s0, t0);
      s1 = std::min(s1, t1);
    }
    const double chord = hit && s1 > s0 ? s1 - s0 : 0.0;
    CHECK(std::abs(rs.integral() - chord) <= 2 * step);
  }
}

TEST_CASE("3D rays sample trilinear fields") {
  const auto g = grid_from_function(GridSpec::cube(3, 9, -1.0, 1.0), [](const Vec3& x) { return x[2]; });
  const Ray3 ray{{0.1, 0.2, 0.0}, {0.0, 0.0, 1.0}};
  const auto rs = sample_along_ray(g, ray, 0.05);
  CHECK(rs.chord() == doctest::Approx(2.0));
  for (std::size_t i = 0; i < rs.s.size(); ++i) CHECK(rs.values[i] == doctest::Approx(rs.s[i]));
  CHECK_THROWS_AS(sample_along_ray(g, Ray3{{0, 0, 0}, {1.0, 1.0, 0.0}}), InvalidArgument);
}

TEST_CASE("HTGD round trip and byte layout") {
  const ScalarGrid zeros(GridSpec::cube(2, 2, 0.0, 1.0));
  const auto bytes = encode_grid(zeros);
  // magic + version + ndim + 2 dims + 2 origin + spacing + 4 values
  CHECK(bytes.size() == 4 + 1 + 1 + 2 * 4 + 2 * 8 + 8 + 4 * 8);
  CHECK(bytes[0] == 0x48);
  CHECK(bytes[3] == 0x44);
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 2);
  CHECK(decode_grid(bytes) == zeros);

  const auto path = temp_path("rt3.htgd");
  const auto g3 = grid_from_function(GridSpec::cube(3, 2, -0.5, 0.5),
                                     [](const Vec3& x) { return x[0] + 10 * x[1] + 100 * x[2]; });
  write_grid(path, g3);
  CHECK(read_grid(path) == g3);
  std::filesystem::remove(path);
}

TEST_CASE("property: HTGD round trip is bit-exact for random finite grids") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> nd(1, 3), n(2, 6);
  std::uniform_real_distribution<double> v(-1e300, 1e300);
  for (int t = 0; t < 50; ++t) {
    GridSpec spec;
    spec.ndim = nd(rng);
    for (int a = 0; a < spec.ndim; ++a) {
      spec.dims[a] = static_cast<std::size_t>(n(rng));
      spec.origin[a] = v(rng) * 1e-290;
    }
    spec.spacing = 0.1 + static_cast<double>(t);
    std::vector<double> vals(spec.size());
    for (auto& x : vals) x = v(rng) * (t % 3 == 0 ? 1e-310 : 1.0);
    const ScalarGrid g(spec, vals);
    const auto back = decode_grid(encode_grid(g));
    REQUIRE(back.size() == g.size());
    CHECK(std::equal(back.values().begin(), back.values().end(), g.values().begin(),
                     [](double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }));
    CHECK(back.spec() == g.spec());
  }
}

TEST_CASE("HTGD rejects malformed input with distinct errors") {
  auto bytes = encode_grid(ScalarGrid(GridSpec::cube(2, 2, 0.0, 1.0)));
  auto code_of = [](const std::vector<std::uint8_t>& b) {
    try {
      decode_grid(b);
    } catch (const FormatError& e) {
      return e.code();
    }
    FAIL("no error");
    return FormatErrc::io_failure;
  };
  auto bad = bytes;
  bad[0] = 'X', bad[1] = 'X', bad[2] = 'X', bad[3] = 'X';
  CHECK(code_of(bad) == FormatErrc::bad_magic);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  CHECK(code_of(truncated) == FormatErrc::truncated);
  auto version = bytes;
  version[4] = 2;
  CHECK(code_of(version) == FormatErrc::unsupported_version);
  auto huge = bytes;
  for (int i = 6; i < 14; ++i) huge[static_cast<std::size_t>(i)] = 0xFF;
  CHECK(code_of(huge) == FormatErrc::dim_overflow);
  auto ndim = bytes;
  ndim[5] = 7;
  CHECK(code_of(ndim) == FormatErrc::bad_ndim);
}

TEST_CASE("symmetric tensor component layout") {
  CHECK(SymTensorField::num_components(1, 3) == 3);
  CHECK(SymTensorField::num_components(2, 3) == 6);
  CHECK(SymTensorField::num_components(2, 2) == 3);
  CHECK(SymTensorField::num_components(4, 3) == 15);
  CHECK(SymTensorField::num_components(4, 2) == 5);

  // Every ordering of an index tuple maps to the same stored component.
  const auto& sets = SymTensorField::multisets(4, 3);
  double multiplicity_sum = 0.0;
  for (std::size_t c = 0; c < sets.size(); ++c) {
    auto perm = sets[c];
    std::sort(perm.begin(), perm.end());
    do {
      CHECK(SymTensorField::component_index(3, perm) == c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    multiplicity_sum += SymTensorField::multiplicity(sets[c]);
  }
  CHECK(multiplicity_sum == 81.0);

  SymTensorField f(2, GridSpec::cube(3, 3, 0.0, 1.0));
  f.component(SymTensorField::component_index(3, std::vector<int>{2, 0}))[4] = 7.0;
  CHECK(f.component({0, 2})[4] == 7.0);
  CHECK(f.component({2, 0})[4] == 7.0);
}
