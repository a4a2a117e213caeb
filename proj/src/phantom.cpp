#include "htomo/phantom.hpp"

#include <algorithm>
#include <cmath>

namespace htomo {

namespace {

double pick(double value, double fallback) { return value > 0.0 ? value : fallback; }

double sq_dist(const Vec3& x, const Vec3& c) {
  const Vec3 d{x[0] - c[0], x[1] - c[1], x[2] - c[2]};
  return dot(d, d);
}

}  // namespace

const std::vector<std::string>& phantom_names() {
  static const std::vector<std::string> names{"disk", "gaussian", "bump", "two-gaussians", "windowed-gaussian", "cubic"};
  return names;
}

Sampler phantom_sampler(const PhantomSpec& p) {
  if (p.name == "disk") {
    const double r = pick(p.radius, 0.5);
    return [r](const Vec3& x) { return dot(x, x) < r * r ? 1.0 : 0.0; };
  }
  if (p.name == "gaussian") {
    const double s = pick(p.sigma, 0.3);
    return [s](const Vec3& x) { return std::exp(-dot(x, x) / (2.0 * s * s)); };
  }
  if (p.name == "bump") {
    const double r = pick(p.radius, 1.0);
    return [r](const Vec3& x) {
      const double t = 1.0 - dot(x, x) / (r * r);
      return t > 0.0 ? t * t : 0.0;
    };
  }
  if (p.name == "two-gaussians") {
    return [](const Vec3& x) {
      return 0.9 * std::exp(-sq_dist(x, {-0.3, 0.2, 0.0}) / (2.0 * 0.25 * 0.25)) +
             0.6 * std::exp(-sq_dist(x, {0.35, -0.25, 0.1}) / (2.0 * 0.15 * 0.15));
    };
  }
  if (p.name == "windowed-gaussian") {
    const double s = pick(p.sigma, 0.5);
    const double r = pick(p.radius, 0.95);
    return [s, r](const Vec3& x) {
      const double r2 = dot(x, x);
      if (r2 >= r * r) return 0.0;
      return std::exp(-r2 / (2.0 * s * s)) * std::pow(1.0 - r2 / (r * r), 3);
    };
  }
  if (p.name == "cubic") {
    return [](const Vec3& x) { return (x[0] - 1.0) * (x[0] - 3.0) * (x[0] - 6.0) + 20.0; };
  }
  std::string known;
  for (const auto& n : phantom_names()) known += (known.empty() ? "" : ", ") + n;
  throw InvalidArgument("unknown phantom '" + p.name + "' (known: " + known + ")");
}

ScalarGrid make_phantom(const PhantomSpec& phantom, const GridSpec& spec) {
  return grid_from_function(spec, phantom_sampler(phantom));
}

}  // namespace htomo
