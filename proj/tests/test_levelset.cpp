#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "htomo/levelset.hpp"

using namespace htomo;

namespace {

double bump(const Vec3& x) {
  const double r2 = x[0] * x[0] + x[1] * x[1];
  return r2 < 1.0 ? (1.0 - r2) * (1.0 - r2) : 0.0;
}

double rel_l2(const ScalarGrid& a, const ScalarGrid& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("sublevel sinograms of the disk indicator") {
  const auto spec = GridSpec::cube(2, 301, -1.5, 1.5);
  const auto disk = grid_from_function(spec, [](const Vec3& x) { return x[0] * x[0] + x[1] * x[1] <= 1.0 ? 1.0 : 0.0; });
  const std::vector<double> th{0.0, pi / 2};
  const std::vector<double> ps{0.0};
  const auto hs = hist_radon(disk, th, ps, std::vector<double>{-2.0, -1.0, 0.5, 1.5});
  // Box chord along an axis is 3; the disk removes 2.
  const auto mid = sublevel_sinogram(hs, 1);
  CHECK(mid.at(0, 0) == doctest::Approx(1.0).epsilon(0.01));
  CHECK(mid.at(1, 0) == doctest::Approx(1.0).epsilon(0.01));
  const auto top = sublevel_sinogram(hs, 2);
  CHECK(top.at(0, 0) == doctest::Approx(3.0));
  const auto bottom = sublevel_sinogram(hs, 0);
  CHECK(bottom.at(0, 0) == 0.0);
  CHECK_THROWS_AS(sublevel_sinogram(hs, 3), InvalidArgument);
}

TEST_CASE("property: sublevel sinograms are monotone and top level is the chord") {
  const auto spec = GridSpec::cube(2, 65, -1.25, 1.25);
  const auto f = grid_from_function(spec, bump);
  const auto ones = grid_from_function(spec, [](const Vec3&) { return 1.0; });
  const auto th = uniform_angles(12);
  const auto ps = uniform_offsets(33, 1.8);
  const auto hs = hist_radon(f, th, ps, uniform_edges(0.0, 1.0, 16));
  const auto chord = radon(ones, th, ps);
  const auto top = sublevel_sinogram(hs, 15);
  for (std::size_t r = 0; r < chord.values.size(); ++r) CHECK(std::abs(top.values[r] - chord.values[r]) <= 1e-10);
  Sinogram prev = sublevel_sinogram(hs, 0);
  for (std::size_t k = 1; k < 16; ++k) {
    const auto cur = sublevel_sinogram(hs, k);
    for (std::size_t r = 0; r < cur.values.size(); ++r) CHECK(cur.values[r] >= prev.values[r]);
    const auto sup = superlevel_sinogram(hs, k);
    for (std::size_t r = 0; r < cur.values.size(); ++r)
      CHECK(cur.values[r] + sup.values[r] == doctest::Approx(chord.values[r]).epsilon(1e-12));
    prev = cur;
  }
}

TEST_CASE("reconstruct_level trivial cases") {
  const auto spec = GridSpec::cube(2, 65, -1.0, 1.0);
  const auto th = uniform_angles(90);
  const auto ps = uniform_offsets(129, std::sqrt(2.0));
  const Sinogram zero(th, ps);
  const auto empty = reconstruct_level(zero, spec);
  for (double v : empty.values()) CHECK(v == 0.0);
  const auto ones = grid_from_function(spec, [](const Vec3&) { return 1.0; });
  const auto full = reconstruct_level(radon(ones, th, ps), spec);
  for (std::size_t i = 4; i < 61; ++i)
    for (std::size_t j = 4; j < 61; ++j) CHECK(full.at(i, j) == 1.0);
}

TEST_CASE("reconstruct_level recovers a sub-level set of a radial phantom") {
  const auto spec = GridSpec::cube(2, 129, -1.25, 1.25);
  const auto f = grid_from_function(spec, bump);
  const auto th = uniform_angles(180);
  const auto ps = uniform_offsets(257, 1.25 * std::sqrt(2.0));
  const auto edges = uniform_edges(0.0, 1.0, 8);
  const auto hs = hist_radon(f, th, ps, edges);
  // Level 0.5: super-level set is the disk r^2 < 1 - sqrt(0.5).
  const auto rec = reconstruct_level(superlevel_sinogram(hs, 3), spec);
  double both = 0.0, a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double truth = f[i] >= 0.5 ? 1.0 : 0.0;
    both += truth * rec[i];
    a += truth;
    b += rec[i];
  }
  CHECK(2.0 * both / (a + b) >= 0.95);
}

TEST_CASE("assemble is exact for level-aligned piecewise constants") {
  const auto spec = GridSpec::cube(2, 9, 0.0, 1.0);
  const auto f = grid_from_function(spec, [](const Vec3& x) { return x[0] < 0.5 ? 1.0 : 3.0; });
  LevelStack stack;
  stack.levels = {2.0, 3.0, 4.0};
  for (double y : stack.levels) {
    ScalarGrid m(spec);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = f[i] < y ? 1.0 : 0.0;
    stack.masks.push_back(m);
  }
  CHECK(assemble(stack, 1.0) == f);

  for (auto& m : stack.masks)
    for (double& v : m.values()) v = 1.0;
  const auto flat = assemble(stack, 1.0);
  for (double v : flat.values()) CHECK(v == 1.0);
}

TEST_CASE("assemble repairs non-nested stacks with a warning") {
  const auto spec = GridSpec::cube(2, 4, 0.0, 1.0);
  LevelStack stack;
  stack.levels = {1.0, 2.0};
  stack.masks = {ScalarGrid(spec), ScalarGrid(spec)};
  stack.masks[0][5] = 1.0;
  std::string seen;
  const auto old = set_warning_handler([&](const std::string& m) { seen = m; });
  const auto g = assemble(stack, 0.0);
  set_warning_handler(old);
  CHECK(seen.find("1 samples") != std::string::npos);
  CHECK(g[5] == 0.0);
  CHECK(g[0] == 2.0);
  auto copy = stack;
  CHECK(enforce_nesting(copy) == 1);
  CHECK(enforce_nesting(copy) == 0);
}

TEST_CASE("round trip through the level stack") {
  const auto spec = GridSpec::cube(2, 65, -1.25, 1.25);
  const auto f = grid_from_function(spec, bump);
  const auto hs = hist_radon(f, uniform_angles(90), uniform_offsets(128, 1.25 * std::sqrt(2.0)),
                             uniform_edges(0.0, 1.0, 32));
  const auto stack = reconstruct_stack(hs, spec);
  REQUIRE(stack.size() == 32);
  for (std::size_t k = 1; k < stack.size(); ++k)
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(stack.masks[k - 1][i] <= stack.masks[k][i]);
  CHECK(rel_l2(assemble(stack, 0.0), f) <= 0.10);

  const auto dir = std::filesystem::temp_directory_path() / "htomo_stack_test";
  write_level_stack(dir, stack);
  const auto back = read_level_stack(dir);
  CHECK(back.levels == stack.levels);
  CHECK(back.masks[7] == stack.masks[7]);
  std::filesystem::remove_all(dir);
}

TEST_CASE("critical point localization") {
  const auto spec = GridSpec::cube(2, 97, -1.25, 1.25);
  const double h = spec.spacing;
  const auto th = uniform_angles(90);
  const auto ps = uniform_offsets(193, 1.25 * std::sqrt(2.0));
  const auto edges = uniform_edges(0.0, 1.01, 64);

  SUBCASE("radial maximum") {
    const auto hs = hist_radon(grid_from_function(spec, bump), th, ps, edges);
    const auto pts = locate_critical_points(hs, 1.0, spec);
    REQUIRE(pts.size() == 1);
    CHECK(std::hypot(pts[0][0], pts[0][1]) <= 2 * h);
  }
  SUBCASE("monotone plane") {
    const auto plane = grid_from_function(spec, [](const Vec3& x) { return 0.5 + 0.3 * x[0] + 0.1 * x[1]; });
    const auto hs = hist_radon(plane, th, ps, edges);
    for (double y : {0.3, 0.5, 0.7}) CHECK(locate_critical_points(hs, y, spec).empty());
  }
  SUBCASE("two peaks") {
    const Vec3 a{-0.5, 0.2, 0.0}, b{0.45, -0.3, 0.0};
    auto g = [](const Vec3& x, const Vec3& c, double amp) {
      const double r2 = (x[0] - c[0]) * (x[0] - c[0]) + (x[1] - c[1]) * (x[1] - c[1]);
      return amp * std::exp(-r2 / (2 * 0.18 * 0.18));
    };
    const auto f = grid_from_function(spec, [&](const Vec3& x) { return g(x, a, 0.9) + g(x, b, 0.6); });
    const auto hs = hist_radon(f, th, ps, edges, h / 4);
    std::vector<Vec3> found;
    for (double y : {0.9, 0.6})
      for (const auto& p : locate_critical_points(hs, y, spec)) found.push_back(p);
    REQUIRE(found.size() == 2);
    CHECK(std::hypot(found[0][0] - a[0], found[0][1] - a[1]) <= 2 * h);
    CHECK(std::hypot(found[1][0] - b[0], found[1][1] - b[1]) <= 2 * h);
  }
}
