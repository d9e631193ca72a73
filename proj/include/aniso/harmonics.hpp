#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "aniso/kernel.hpp"
#include "aniso/metric.hpp"

namespace aniso::harmonics {

// Number of linearly independent spherical harmonics of degree m on the unit
// sphere in R^n: 1 for m=0, n for m=1, binomial difference beyond.
int basis_dim(int n, int m);

// Real orthonormal harmonics indexed by degree m (0..max_degree) and slot
// s (1..basis_dim). n=2 uses cos/sin closed forms, n=3 fully normalized
// associated Legendre recurrences. Evaluators are stateless, so copies are
// cheap.
struct HarmonicBasis {
  int n = 0;
  int max_degree = 0;

  // u must sit on the Euclidean unit sphere (within 1e-10).
  double eval(int s, int m, std::span<const double> u) const;

  // Cartesian gradient of the degree-0 homogeneous extension Y(u/|u|) at u on
  // the sphere; always tangential.
  Vec gradient(int s, int m, std::span<const double> u) const;

  // Every basis value at u in one sweep, degrees concatenated: the entry for
  // (s, m) sits at position sum_{j<m} basis_dim(n, j) + s - 1. One shared
  // recurrence per call, so this is the path for whole-series evaluation.
  void eval_all(std::span<const double> u, std::vector<double>& out) const;

  static HarmonicBasis make(int n, int max_degree);
};

struct HarmonicCoefficients {
  int n = 0;
  int max_degree = 0;
  std::vector<std::vector<double>> table;  // table[m][s-1]
  std::vector<double> sup_norms;           // max_s |b_sm| per degree

  double coefficient(int s, int m) const { return table[m][s - 1]; }
};

struct DecayFit {
  double slope = 0;
  bool degenerate = false;  // fewer than 3 degrees above the noise floor
};

// b_sm = quadrature of phi * Y_sm over the sphere.
HarmonicCoefficients expand(const std::function<double(std::span<const double>)>& phi,
                            const HarmonicBasis& basis,
                            const metric::SphereQuadrature& q);

// Least-squares slope of log(max_s |b_sm|) against log m over degrees m >= 1
// whose sup exceeds 1e-14.
DecayFit decay_fit(const HarmonicCoefficients& c);

// Sup over quadrature nodes of |phi - truncated expansion| for each truncation
// degree M = 0..c.max_degree; entry M uses coefficients of degree <= M.
std::vector<double> reconstruction_errors(
    const std::function<double(std::span<const double>)>& phi,
    const HarmonicBasis& basis, const metric::SphereQuadrature& q,
    const HarmonicCoefficients& c);

// Constant kernel H(xi) = Y_sm(xi_bar) rho(xi)^{-alpha}. The evaluator throws
// SingularPoint at xi = 0.
kernel::VariableKernel hsm_kernel(const HarmonicBasis& basis, int s, int m,
                                  const metric::AnisotropyProfile& profile);

// Analytic gradient of hsm_kernel at x != 0.
Vec hsm_gradient(const HarmonicBasis& basis, int s, int m,
                 const metric::AnisotropyProfile& profile, std::span<const double> x);

// Columns m,s,b_sm with 17 significant digits.
void write_coefficients_csv(const HarmonicCoefficients& c, const std::string& path);

}  // namespace aniso::harmonics
