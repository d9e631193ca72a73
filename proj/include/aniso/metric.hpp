#pragma once

#include <span>
#include <vector>

#include "aniso/common.hpp"

namespace aniso::metric {

// Anisotropy exponents alpha_1..alpha_n, alpha_i >= 1, n >= 2. The sum
// alpha = sum(alpha_i) acts as the homogeneous dimension: the rho-ball of
// radius r has Lebesgue measure V_n * r^alpha.
struct AnisotropyProfile {
  std::vector<double> exponents;
  double homogeneous_dimension = 0;  // exact sum of exponents

  int dim() const { return static_cast<int>(exponents.size()); }
  bool isotropic() const;

  static AnisotropyProfile make(std::vector<double> exponents);
};

struct Ellipsoid {
  std::vector<double> center;
  double radius = 0;
  AnisotropyProfile profile;

  static Ellipsoid make(std::vector<double> center, double radius,
                        AnisotropyProfile profile);
};

// Nodes on the Euclidean unit sphere with positive surface-measure weights.
struct SphereQuadrature {
  std::vector<Vec> nodes;
  std::vector<double> weights;

  int dim() const { return nodes.empty() ? 0 : static_cast<int>(nodes[0].size()); }
  std::size_t size() const { return nodes.size(); }

  template <class F>
  double integrate(F&& f) const {
    double s = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(nodes[i]);
    return s;
  }
};

// The quasi-distance: the unique rho > 0 with sum_i x_i^2 rho^{-2 alpha_i} = 1,
// and rho(0) = 0. Solved by bracketed Newton with bisection fallback,
// |F - 1| <= 1e-13; closed forms are used for the isotropic and the
// n=2, alpha=(1,2) profiles.
double rho(std::span<const double> x, const AnisotropyProfile& p);

// F(x, r) = sum_i x_i^2 r^{-2 alpha_i}, the defining function of rho.
double metric_form(std::span<const double> x, double r, const AnisotropyProfile& p);

// (mu^{alpha_1} x_1, ..., mu^{alpha_n} x_n); rho(dilate(mu,x)) = mu rho(x).
Vec dilate(double mu, std::span<const double> x, const AnisotropyProfile& p);

// The component-wise normalization x_i / rho(x)^{alpha_i}, which lands on the
// Euclidean unit sphere. Optionally reports rho(x). Throws SingularPoint at 0.
Vec sphere_projection(std::span<const double> x, const AnisotropyProfile& p,
                      double* rho_out = nullptr);

// Lebesgue measure V_n r^alpha, V_n the Euclidean unit-ball volume.
double ellipsoid_measure(const Ellipsoid& e);

// Volume of the Euclidean unit ball in dimension n.
double unit_ball_volume(int n);

// Surface area of the Euclidean unit sphere in R^n.
double sphere_area(int n);

// Strict containment, sum_i (x_i - c_i)^2 / r^{2 alpha_i} < 1.
bool ellipsoid_contains(const Ellipsoid& e, std::span<const double> x);

// Fixed per-cell subsample offsets in units of spacings, inside [-1/2, 1/2]^n.
// n=2 uses the 4x4 midpoint lattice, n=3 a 16-point rank-1 lattice; neither
// contains the cell center. Shared by every cell-inclusion quadrature so
// stencils and ellipsoid averages resolve boundary cells identically.
const std::vector<Vec>& cell_subsample_offsets(int n);

// n=2: uniform trapezoid rule in angle with `resolution` nodes.
// n=3: Gauss-Legendre in the polar cosine x uniform azimuth,
// resolution polar nodes and 2*resolution azimuth nodes.
// Exact on spherical harmonics of degree <= resolution/2.
SphereQuadrature sphere_quadrature(int n, int resolution);

// Gauss-Legendre nodes/weights on [-1, 1].
void gauss_legendre(int q, std::vector<double>& nodes, std::vector<double>& weights);

}  // namespace aniso::metric
