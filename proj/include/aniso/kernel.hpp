#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "aniso/metric.hpp"

namespace aniso::kernel {

// k(x; xi): base point x, offset xi != 0, homogeneous of degree -alpha in xi
// under the profile's dilations. Constant kernels ignore x.
struct VariableKernel {
  std::string name;
  metric::AnisotropyProfile profile;
  std::function<double(std::span<const double> x, std::span<const double> xi)> evaluate;
  int smoothness_order = 4;
  bool x_dependent = false;

  int dim() const { return profile.dim(); }
  double operator()(std::span<const double> x, std::span<const double> xi) const {
    return evaluate(x, xi);
  }
};

struct CancellationResult {
  double mean_residual = 0;  // |integral of k(x;.) over the unit sphere|
  double abs_integral = 0;   // integral of |k(x;.)|
};

struct KernelValidationReport {
  double homogeneity_max_residual = 0;
  double cancellation_residual = 0;
  double mean_absolute_integral = 0;
  std::map<std::vector<int>, double> derivative_sup_estimates;
  bool pass = false;
};

struct ValidationConfig {
  int sample_count = 200;
  double homogeneity_tol = 1e-10;
  double cancellation_tol = 1e-10;
  int quadrature_resolution = 0;  // 0 = pick per dimension (256 for n=2, 24 for n=3)
  int max_order = 4;
  unsigned long long seed = 421;
};

// Max over random (x, xi on the unit sphere, mu in [0.1, 10]) of
// |k(x; mu o xi) - mu^{-alpha} k(x; xi)| / (1 + |k(x; xi)|). Throws
// EvaluationError naming the sample if the kernel returns a non-finite value.
// Sampling stops early once the residual exceeds 1000 * tol by more than an
// order of magnitude; the returned value is still a valid lower bound then.
double check_homogeneity(const VariableKernel& k, int sample_count, double tol);

CancellationResult check_cancellation(const VariableKernel& k, std::span<const double> x,
                                      const metric::SphereQuadrature& q);

// Empirical sup of |D^beta_xi k(x; xi)| over unit-sphere quadrature nodes and
// (for x-dependent kernels) random base points, for every multiindex
// |beta| <= max_order. Derivatives use nested 4th-order central differences;
// the step is 1e-4 for |beta| <= 1 and widens with the order to keep repeated
// differencing away from the roundoff floor.
std::map<std::vector<int>, double> check_derivative_bounds(const VariableKernel& k,
                                                           int max_order,
                                                           int sample_count);

KernelValidationReport validate(const VariableKernel& k, const ValidationConfig& cfg = {});

// CZ2, MIX12, VAR-CZ2, RIESZ3. Throws UnknownKernel otherwise.
VariableKernel builtin(const std::string& name);

// Synthetic controls used by the validation experiments and tests:
// NONHOM (breaks homogeneity), NOCANC (breaks cancellation),
// SMOOTH2 (valid kernel with an infinite harmonic expansion).
VariableKernel control(const std::string& name);

// Names accepted by builtin() / control().
const std::vector<std::string>& builtin_names();
const std::vector<std::string>& control_names();

}  // namespace aniso::kernel
