#pragma once

#include <span>
#include <vector>

#include "htomo/core.hpp"

namespace htomo {

/// Finite-difference weights for the m-th derivative at offset 0 from samples at
/// the given integer offsets (unit spacing). Exact for polynomials of degree
/// below offsets.size().
std::vector<double> fd_weights(int m, std::span<const int> offsets);

/// m-th derivative (1 <= m <= 4) along one axis with accuracy `order` (2 or 4).
/// Interior points use the narrowest central stencil of that order: 3 points
/// (m <= 2) or 5 points (m >= 3) for order 2, two more for order 4. Near the
/// boundary the window is shifted inside and widened by one point for even m,
/// so the boundary stencils keep the same order.
ScalarGrid derivative(const ScalarGrid& g, int axis, int m, int order = 2);

/// Mixed partial derivative; `axes` lists one axis per differentiation. Applied as
/// per-axis derivatives in ascending axis order.
ScalarGrid partial(const ScalarGrid& g, std::span<const int> axes, int order = 2);
inline ScalarGrid partial(const ScalarGrid& g, std::initializer_list<int> axes, int order = 2) {
  return partial(g, std::span<const int>(axes.begin(), axes.size()), order);
}

/// Smallest number of samples per axis a derivative of order m needs.
std::size_t min_samples_for_derivative(int m, int order = 2);

}  // namespace htomo
