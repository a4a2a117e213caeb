#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "htomo/core.hpp"
#include "htomo/error.hpp"
#include "htomo/tensor.hpp"

namespace htomo {

using Mat3 = Eigen::Matrix3d;

/// Dirichlet problem lap(u) = rhs. Boundary values are read from the boundary
/// nodes of `boundary`; its interior is ignored.
struct PoissonProblem {
  ScalarGrid rhs;
  ScalarGrid boundary;

  void validate() const;
};

struct PoissonOptions {
  double tolerance = 1e-10;  // relative residual
  std::size_t max_iterations = 10000;
};

/// Second-order (5- or 7-point) discretization solved by conjugate gradients.
/// Throws NumericalFailure with the reached residual if CG does not converge.
ScalarGrid poisson_solve(const PoissonProblem& problem, const PoissonOptions& opt = {});

/// Per-ray k = 2 moment of hlrt histograms of f = du, i.e. lrt(du (.) du) up to binning.
std::vector<double> second_moment_lrt(const RayHistograms& hs);

struct FitOptions {
  double lambda = 1e-6;           // weight of the gradient penalty
  double lambda_l2 = 1e-4;        // weight of the L2 penalty
  double tolerance = 1e-6;        // relative residual of the normal equations
  std::size_t max_iterations = 1000;
  double step = 0.0;              // ray sampling step, <= 0 for h/2
  std::size_t min_directions = 60;
};

struct FitResult {
  SymTensorField g;
  std::size_t iterations = 0;
  double residual = 0.0;   // relative residual reached
  double condition = 0.0;  // Lanczos estimate of the normal-matrix condition number
};

/// Rank-2 field g on `spec` minimizing
///   (1 / N) sum_rays (lrt(g) - data)^2 + lambda * integral sum_ij |grad g_ij|^2
///                                      + lambda_l2 * integral sum_ij g_ij^2
/// by conjugate gradients on the normal equations. The potential part of g is
/// not determined by the data; only kroner_rank2(g) is meaningful. Warns with
/// the condition estimate when the ray set has fewer than min_directions
/// directions or fewer rays than unknowns.
FitResult fit_rank2_from_lrt(std::span<const Ray3> rays, std::span<const double> data, const GridSpec& spec,
                             const FitOptions& opt = {});

/// Transpose of the cofactor matrix; A * Adj(A) = det(A) I.
Mat3 adjugate3(const Mat3& a);

struct HessianCandidate {
  bool degenerate = true;
  Mat3 plus = Mat3::Zero();  // the other candidate is -plus

  Mat3 minus() const { return -plus; }
};

/// Solves K = 2 Adj(H): H = +-sqrt(det K / 2) K^{-1}. det K <= tau marks the point
/// degenerate (this includes negative determinants, which admit no real H).
HessianCandidate hessian_from_kroner(const Mat3& k, double tau);

/// Matrix of a rank-2 3D field at flat index i.
Mat3 tensor_at(const SymTensorField& f, std::size_t i);

struct DopplerOptions {
  FitOptions fit;
  /// Degeneracy threshold relative to the median of |K|_F^3 over the support.
  double tau_det = 1e-8;
  /// Non-degenerate points with det K <= min_conditioning * |K|_F^3 are too
  /// ill-conditioned to trust; their Laplacian is filled in like degenerate ones.
  double min_conditioning = 1e-2;
  /// Points with |K|_F below this fraction of the maximum are outside the support.
  double support_fraction = 0.02;
  /// The sign fill and the trusted Laplacian extend down to this fraction.
  double fill_fraction = 3e-3;
  /// Largest tolerated fraction of degenerate support points.
  double max_degenerate_fraction = 0.2;
  /// Accuracy order of the finite differences inside the Kroner operator.
  int kroner_order = 4;
  PoissonOptions poisson;
};

struct Recovery {
  ScalarGrid u;           // one of the two global signs
  ScalarGrid laplacian;   // sign-consistent trace of the recovered Hessian
  ScalarGrid degenerate;  // 1 at degenerate support points
  std::size_t support_points = 0;
  std::size_t degenerate_points = 0;  // inside the support
  FitResult fit;
};

/// Thrown when too much of the support is degenerate; carries the mask.
class DegenerateSupport : public NumericalFailure {
 public:
  DegenerateSupport(const std::string& what, ScalarGrid mask) : NumericalFailure(what), mask_(std::move(mask)) {}
  const ScalarGrid& mask() const { return mask_; }

 private:
  ScalarGrid mask_;
};

/// Potential u (up to a global sign) from hlrt histograms of du:
/// second moments -> least-squares rank-2 fit -> Kroner operator -> pointwise
/// Hessian candidates -> sign flood fill -> Poisson solve with zero boundary.
/// The Laplacian is kept at well-conditioned support points and filled in
/// harmonically elsewhere, with zero on the box boundary, then shifted to
/// zero mean over its nonzero nodes.
Recovery recover_potential(const RayHistograms& hs, const GridSpec& spec, const DopplerOptions& opt = {});

/// The stages of recover_potential after the Kroner operator.
Recovery potential_from_kroner(const SymTensorField& k, const DopplerOptions& opt = {});

/// Harmonic interpolation of `values` from the `known` nodes, zero on unknown
/// box-boundary nodes.
ScalarGrid harmonic_fill(const ScalarGrid& values, const std::vector<char>& known, const PoissonOptions& opt = {});

/// min(|u - t|, |u + t|) / |t| in the discrete L2 norm.
double min_sign_rel_l2(const ScalarGrid& u, const ScalarGrid& truth);

}  // namespace htomo
