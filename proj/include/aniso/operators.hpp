#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "aniso/gridfn.hpp"
#include "aniso/harmonics.hpp"
#include "aniso/kernel.hpp"
#include "aniso/metric.hpp"

namespace aniso::operators {

// Inner cutoff in rho-distance plus the evaluation box. An empty outer box
// means the box of f's grid; a sub-box restricts evaluation and zeroes f
// outside it. Evaluation happens at grid points whose rho-distance to the
// box boundary is at least epsilon + 2 * max spacing; f is treated as zero
// outside the box. epsilon must stay below the box inradius.
struct TruncationPolicy {
  double epsilon = 0;
  Vec outer_lower, outer_upper;
};

struct OperatorResult {
  gridfn::GridFunction output;          // zero where not evaluated
  std::vector<std::uint8_t> evaluated;  // one flag per grid point
  double epsilon = 0;
  long straddling_cells = 0;  // cells crossed by the cutoff shell, per point
  // cutoff-discretization error proxy per unit sup|f|: total drift of the
  // straddling-cell weights when the subsample count drops from 16 to 4
  double truncation_error_estimate = 0;

  std::size_t evaluated_count() const;
};

// Quadrature of k(x; x-y) f(y) over the cells with rho(x-y) > epsilon.
// Cells meeting the cutoff shell contribute through 16-point subsamples of
// k * indicator. Throws UnderResolved if epsilon < 2 * max spacing or no
// evaluation points remain.
OperatorResult truncated_transform(const kernel::VariableKernel& k,
                                   const gridfn::GridFunction& f,
                                   const TruncationPolicy& pol);

// Same quadrature applied to [a(y) - a(x)] f(y), the difference form of
// K(af) - a Kf. a and f must share a grid.
OperatorResult commutator(const gridfn::GridFunction& a, const kernel::VariableKernel& k,
                          const gridfn::GridFunction& f, const TruncationPolicy& pol);

// truncated_transform with the constant kernel Y_sm(xi_bar) rho(xi)^{-alpha}.
// Degree m = 0 carries no cancellation and is rejected.
OperatorResult constant_transform(const harmonics::HarmonicBasis& basis, int s, int m,
                                  const metric::AnisotropyProfile& profile,
                                  const gridfn::GridFunction& f,
                                  const TruncationPolicy& pol);

// Applies the degree-<=M harmonic expansion of k instead of k itself:
// sum over 1 <= m <= M, s of b_sm(x) K_sm f(x). Constant kernels expand once;
// x-dependent kernels (n=2) re-expand at every evaluation point.
OperatorResult series_transform(const kernel::VariableKernel& k,
                                const gridfn::GridFunction& f,
                                const TruncationPolicy& pol, int max_degree);

// Empirical constant of the pointwise smoothness estimate: sup over random
// x in e, y with rho(y - center) in (2r, 64r] of
// |H(x-y) - H(x0-y)| rho(x0-y)^{alpha+1} / (m^{n/2} rho(x0-x)).
double hormander_pointwise(const harmonics::HarmonicBasis& basis, int s, int m,
                           const metric::AnisotropyProfile& profile,
                           const metric::Ellipsoid& e, int samples);

// Quadrature of |H(y-x) - H(y)| over {4 rho(x) <= rho(y) <= r_max} in
// anisotropic polar coordinates (volume element r^{alpha-1} (sum_i alpha_i
// theta_i^2) dr dsigma).
double hormander_integral(const harmonics::HarmonicBasis& basis, int s, int m,
                          const metric::AnisotropyProfile& profile,
                          std::span<const double> x, double r_max);

}  // namespace aniso::operators
