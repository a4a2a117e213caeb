#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "htomo/core.hpp"
#include "htomo/distribution.hpp"

namespace htomo {

/// Per-ray transform values: one value per ray (longitudinal) or the three
/// components c11, c12, c22 of a 2x2 symmetric matrix per ray (transverse).
struct TensorSinogram {
  std::vector<Ray3> rays;
  std::size_t components = 1;
  std::vector<double> values;  // ray-major

  double at(std::size_t ray, std::size_t c = 0) const { return values[ray * components + c]; }
};

/// Histograms of a contracted integrand along explicit rays.
struct RayHistograms {
  std::vector<Ray3> rays;
  std::vector<double> edges;
  std::vector<double> mass;  // (ray, bin)
  std::vector<double> underflow;
  std::vector<double> overflow;

  std::size_t bins() const { return edges.size() - 1; }
  std::span<const double> ray_mass(std::size_t r) const { return {mass.data() + r * bins(), bins()}; }
  Histogram slice(std::size_t r) const;
};

using TensorSampler = std::function<double(const Vec3& x, std::span<const int> multiset)>;

/// Evaluates sampler(x, I) for every stored component I and grid point x.
SymTensorField tensor_from_function(int rank, const GridSpec& spec, const TensorSampler& sampler);

/// Symmetrized derivative, rank k -> k + 1 for k <= 3:
/// (du)_{i0..ik} = (1 / (k+1)) sum_j d_{ij} u_{i0..ik without ij}.
SymTensorField sym_d(const SymTensorField& u);
SymTensorField gradient(const ScalarGrid& u);
/// Symmetrized tensor product; combined rank at most 4.
SymTensorField sym_product(const SymTensorField& a, const SymTensorField& b);
/// a symmetrized with itself k times (k >= 1).
SymTensorField sym_power(const SymTensorField& a, int k);
/// (delta f)_I = sum_j d_j f_{jI}, rank k -> k - 1.
SymTensorField divergence(const SymTensorField& f);
/// Curl e_ijk d_j f_k of a 3D vector field: the independent components of the
/// antisymmetric derivative f_{i,j} - f_{j,i}.
SymTensorField saint_venant_vec(const SymTensorField& f);
/// K_mn = e_mik e_njl d_j d_k f_il for a 3D rank-2 field. For f = du (x) du this
/// equals 2 Adj(d^2 u). `order` is the finite-difference accuracy (2 or 4).
SymTensorField kroner_rank2(const SymTensorField& f, int order = 2);

/// Orthonormal frame of the plane perpendicular to unit xi: eta1 from Gram-Schmidt
/// of the coordinate axis where |xi| is smallest (lowest index on ties), eta2 = xi x eta1.
std::pair<Vec3, Vec3> transverse_frame(const Vec3& xi);

/// Contraction weight per stored component: sum over index tuples t of the
/// component of prod_j vectors[j][t_j]. vectors.size() must equal the rank.
std::vector<double> contraction_weights(int rank, int ndim, std::span<const Vec3> vectors);

/// Samples of f contracted with `vectors` along the ray (midpoint rule).
RaySamples contracted_samples(const SymTensorField& f, const Ray3& ray, std::span<const Vec3> vectors,
                              double step = 0.0);

/// Longitudinal ray transform: integral of f contracted with xi on every index.
TensorSinogram lrt(const SymTensorField& f, std::span<const Ray3> rays, double step = 0.0);
/// Transverse ray transform of a 3D rank-2 field in the frame of transverse_frame().
TensorSinogram trt(const SymTensorField& f, std::span<const Ray3> rays, double step = 0.0);
/// Histogram longitudinal ray transform for rank 1 or 2.
RayHistograms hlrt(const SymTensorField& f, std::span<const Ray3> rays, std::span<const double> edges,
                   double step = 0.0);

/// n roughly uniform unit vectors on the upper hemisphere (z >= 0), spiral order.
std::vector<Vec3> fibonacci_hemisphere(std::size_t n);
/// For every direction, an n x n lattice of parallel rays offset across
/// [-half_width, half_width]^2 in the transverse frame, through `centre`.
std::vector<Ray3> parallel_ray_set(std::span<const Vec3> directions, std::size_t n, double half_width,
                                   const Vec3& centre = {0.0, 0.0, 0.0});
/// Rays through uniform points of the ball (centre, radius) with uniform directions.
std::vector<Ray3> random_rays(std::size_t n, std::mt19937_64& rng, const Vec3& centre, double radius);

/// CSV `x1,x2,x3,xi1,xi2,xi3,c11,c12,c22`; longitudinal data fills c11 and zeros.
void write_tensor_sinogram_csv(const std::filesystem::path& path, const TensorSinogram& s);

}  // namespace htomo
