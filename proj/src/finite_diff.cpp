#include "htomo/finite_diff.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <string>

#include <Eigen/Dense>

#include "htomo/parallel.hpp"

namespace htomo {

std::vector<double> fd_weights(int m, std::span<const int> offsets) {
  const auto n = static_cast<Eigen::Index>(offsets.size());
  if (m < 0 || m >= n) throw InvalidArgument("stencil needs more points than the derivative order");
  // Moment conditions sum_j w_j o_j^p = p! [p == m] for p < n.
  Eigen::MatrixXd v(n, n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  for (Eigen::Index p = 0; p < n; ++p)
    for (Eigen::Index j = 0; j < n; ++j) v(p, j) = std::pow(static_cast<double>(offsets[static_cast<std::size_t>(j)]), static_cast<double>(p));
  double fact = 1.0;
  for (int k = 2; k <= m; ++k) fact *= k;
  rhs(m) = fact;
  const Eigen::VectorXd w = v.fullPivLu().solve(rhs);
  std::vector<double> out(offsets.size());
  for (Eigen::Index j = 0; j < n; ++j) out[static_cast<std::size_t>(j)] = w(j);
  return out;
}

namespace {

int central_half_width(int m, int order) { return (m + 1) / 2 + order / 2 - 1; }

void check_order(int order) {
  if (order != 2 && order != 4) throw InvalidArgument("finite-difference accuracy order must be 2 or 4");
}

struct Stencil {
  std::vector<int> offsets;
  std::vector<double> weights;
};

// Stencil for derivative order m at sample index i of an axis with n samples.
const Stencil& stencil_for(int m, int order, std::size_t i, std::size_t n) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, Stencil> cache;  // (m, count, first offset)
  const int half = central_half_width(m, order);
  int first = -half;
  int count = 2 * half + 1;
  const auto ii = static_cast<long>(i);
  const auto nn = static_cast<long>(n);
  if (ii - half < 0 || ii + half >= nn) {
    if (m % 2 == 0) ++count;
    if (ii - half < 0)
      first = static_cast<int>(-ii);
    else
      first = static_cast<int>(nn - 1 - ii) - (count - 1);
  }
  std::lock_guard lock(mu);
  auto key = std::make_pair(m * 100 + count, first);
  auto it = cache.find(key);
  if (it == cache.end()) {
    Stencil s;
    for (int k = 0; k < count; ++k) s.offsets.push_back(first + k);
    s.weights = fd_weights(m, s.offsets);
    it = cache.emplace(key, std::move(s)).first;
  }
  return it->second;
}

}  // namespace

std::size_t min_samples_for_derivative(int m, int order) {
  check_order(order);
  const int half = central_half_width(m, order);
  return static_cast<std::size_t>(2 * half + 1 + (m % 2 == 0 ? 1 : 0));
}

ScalarGrid derivative(const ScalarGrid& g, int axis, int m, int order) {
  if (m < 1 || m > 4) throw InvalidArgument("derivative order must be 1..4");
  check_order(order);
  if (axis < 0 || axis >= g.ndim()) throw InvalidArgument("derivative axis out of range");
  const GridSpec& spec = g.spec();
  const std::size_t n = spec.dims[static_cast<std::size_t>(axis)];
  if (n < min_samples_for_derivative(m, order))
    throw InvalidArgument("grid too small: derivative of order " + std::to_string(m) + " needs " +
                          std::to_string(min_samples_for_derivative(m, order)) + " samples per axis");
  const auto strides = spec.strides();
  const std::size_t stride = strides[static_cast<std::size_t>(axis)];
  // Resolve all stencils for this axis once.
  std::vector<const Stencil*> per_index(n);
  for (std::size_t i = 0; i < n; ++i) per_index[i] = &stencil_for(m, order, i, n);
  double scale = 1.0;
  for (int k = 0; k < m; ++k) scale /= spec.spacing;

  ScalarGrid out(spec);
  const auto in = g.values();
  auto res = out.values();
  const std::size_t lines = g.size() / n;
  parallel_for(lines, [&](std::size_t line) {
    // Base index of this line: enumerate all positions with axis coordinate 0.
    const std::size_t outer = line / stride;
    const std::size_t inner = line % stride;
    const std::size_t base = outer * stride * n + inner;
    for (std::size_t i = 0; i < n; ++i) {
      const Stencil& s = *per_index[i];
      double acc = 0.0;
      for (std::size_t k = 0; k < s.offsets.size(); ++k)
        acc += s.weights[k] * in[base + static_cast<std::size_t>(static_cast<long>(i) + s.offsets[k]) * stride];
      res[base + i * stride] = acc * scale;
    }
  });
  return out;
}

ScalarGrid partial(const ScalarGrid& g, std::span<const int> axes, int order) {
  if (axes.empty()) return g;
  std::array<int, 3> count{0, 0, 0};
  for (int a : axes) {
    if (a < 0 || a >= g.ndim()) throw InvalidArgument("derivative axis out of range");
    ++count[static_cast<std::size_t>(a)];
  }
  ScalarGrid cur = g;
  for (int a = 0; a < 3; ++a)
    if (count[static_cast<std::size_t>(a)] > 0) cur = derivative(cur, a, count[static_cast<std::size_t>(a)], order);
  return cur;
}

}  // namespace htomo
