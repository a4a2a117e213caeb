#pragma once

#include <string>
#include <vector>

#include "htomo/core.hpp"

namespace htomo {

/// Named analytic test fields, usable in 1, 2 or 3 dimensions (radial ones use |x|).
///   disk               1 inside |x| < radius (0.5)
///   gaussian           exp(-|x|^2 / (2 sigma^2)), sigma 0.3
///   bump               (1 - |x|^2 / radius^2)^2 inside the ball, radius 1
///   two-gaussians      0.9 and 0.6 weighted Gaussians (widths 0.25, 0.15) off centre
///   windowed-gaussian  exp(-|x|^2 / (2 sigma^2)) (1 - |x|^2 / radius^2)^3, sigma 0.5, radius 0.95
///   cubic              (x - 1)(x - 3)(x - 6) + 20 of the first coordinate
struct PhantomSpec {
  std::string name = "bump";
  double radius = 0.0;  // <= 0 selects the default of the named field
  double sigma = 0.0;   // <= 0 selects the default of the named field
};

const std::vector<std::string>& phantom_names();

/// Throws InvalidArgument for unknown names.
Sampler phantom_sampler(const PhantomSpec& phantom);

ScalarGrid make_phantom(const PhantomSpec& phantom, const GridSpec& spec);

}  // namespace htomo
