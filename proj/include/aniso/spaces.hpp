#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "aniso/gridfn.hpp"
#include "aniso/metric.hpp"

namespace aniso::spaces {

// omega(x, r): strictly positive weight of the ellipsoid E_r(x).
struct Weight {
  std::string name;
  std::function<double(std::span<const double>, double)> evaluate;

  double operator()(std::span<const double> x, double r) const { return evaluate(x, r); }
};

Weight weight_const();
Weight weight_power(double lambda);
Weight weight_power_log(double lambda);

// "const", "power(1.5)", "power_log(0.75)"; anything else is invalid_argument.
Weight weight_from_spec(const std::string& spec);

// Geometric radius ladder, ratio sqrt(2), from 2 * max spacing up to the
// rho-diameter of the box (so the top ellipsoid covers the box from any
// center).
std::vector<double> default_radii(const gridfn::Grid& g,
                                  const metric::AnisotropyProfile& p);

// Every stride-th grid point per axis, endpoints included.
std::vector<Vec> default_centers(const gridfn::Grid& g, int stride = 4);

// Average of |f| (or of a transform of f) over E_r(x) intersected with the
// grid box; cells met by the ellipsoid boundary enter through 16-point
// inclusion fractions. The building block of everything below.
double ellipsoid_average(const gridfn::GridFunction& f,
                         const metric::AnisotropyProfile& p,
                         std::span<const double> x, double r);

// sup over the radius ladder of the |f|-average over E_r(x).
double maximal(const gridfn::GridFunction& f, const metric::AnisotropyProfile& p,
               std::span<const double> x, std::span<const double> radii);

// sup over the ladder of the mean oscillation: average of |f - f_E| over E.
double sharp(const gridfn::GridFunction& f, const metric::AnisotropyProfile& p,
             std::span<const double> x, std::span<const double> radii);

// (M |f|^s)^{1/s}; s = 1 reduces to maximal. Requires s >= 1.
double m_s(const gridfn::GridFunction& f, const metric::AnisotropyProfile& p,
           std::span<const double> x, double s, std::span<const double> radii);

// Whole-grid fields of the three operators above, parallel over points.
gridfn::GridFunction maximal_field(const gridfn::GridFunction& f,
                                   const metric::AnisotropyProfile& p,
                                   std::span<const double> radii);
gridfn::GridFunction sharp_field(const gridfn::GridFunction& f,
                                 const metric::AnisotropyProfile& p,
                                 std::span<const double> radii);
gridfn::GridFunction m_s_field(const gridfn::GridFunction& f,
                               const metric::AnisotropyProfile& p, double s,
                               std::span<const double> radii);

struct MorreyResult {
  double value = 0;
  Vec center;         // argmax ellipsoid
  double radius = 0;
};

// sup over centers x radii of (omega(x,r)^{-1} integral_{E cap box} |f|^p)^{1/p}.
// Requires p in (1, inf).
MorreyResult morrey_norm(const gridfn::GridFunction& f,
                         const metric::AnisotropyProfile& p, double exponent,
                         const Weight& w, std::span<const Vec> centers,
                         std::span<const double> radii);

struct WeightCheck {
  double lower = 0;              // empirical doubling bounds over t in [r, 2r]
  double upper = 0;
  double integral_constant = 0;  // supremal tail-integral constant
  double sigma = 1;
  bool pass = false;
  std::string note;
};

// Doubling bounds plus the tail-integral condition
// int_r^inf omega(x,t) / t^{sigma alpha + 1} dt <= C omega(x,r) / r^{sigma alpha},
// integrated in log coordinates out to 1e6 r; a non-plateauing partial
// integral fails the check. Radii must span at least three decades.
WeightCheck check_weight(const Weight& w, const metric::AnisotropyProfile& p,
                         std::span<const Vec> centers, std::span<const double> radii,
                         double sigma = 1.0);

struct BmoModulus {
  std::vector<double> radii;   // descending
  std::vector<double> values;  // gamma_a at each radius; nonincreasing here
  double bmo_norm = 0;
  bool vmo_flag = false;
  double trend_slope = 0;  // log-log slope of gamma against R
};

// gamma_a(R) = sup over centers and r <= R of the mean oscillation of a over
// E_r; nondecreasing in R by construction. vmo_flag per the grid-scale proxy:
// the two smallest moduli below 0.2 * bmo_norm and decreasing.
BmoModulus bmo_modulus(const gridfn::GridFunction& a,
                       const metric::AnisotropyProfile& p,
                       std::span<const double> radii, std::span<const Vec> centers);

// (|E|^{-1} int_E |a - a_E|^p)^{1/p} / bmo_norm(a), 0 for constant a.
// Requires p in (1, inf). A nonnegative bmo_norm_hint skips the internal
// modulus computation (callers evaluating many ellipsoids of one a).
double john_nirenberg_ratio(const gridfn::GridFunction& a,
                            const metric::AnisotropyProfile& p, double exponent,
                            const metric::Ellipsoid& e, double bmo_norm_hint = -1);

// |a_{2^k E} - a_E| for the concentric dilate; 2^k E must stay inside the box.
double nested_average_drift(const gridfn::GridFunction& a,
                            const metric::AnisotropyProfile& p,
                            const metric::Ellipsoid& e, int k);

}  // namespace aniso::spaces
