#include "doctest.h"

#include <cmath>
#include <functional>

#include "aniso/errors.hpp"
#include "aniso/gridfn.hpp"
#include "aniso/harmonics.hpp"
#include "aniso/kernel.hpp"
#include "aniso/metric.hpp"
#include "aniso/operators.hpp"

using namespace aniso;
using namespace aniso::operators;
using gridfn::Grid;
using gridfn::GridFunction;

namespace {

const double kPi = std::acos(-1.0);

Grid square(int n, double half) {
  return Grid::make({n, n}, {-half, -half}, {half, half});
}

// smooth even-mode bump, negligible at the box boundary
double modulated_bump(std::span<const double> y) {
  const double r2 = y[0] * y[0] + y[1] * y[1];
  return (y[0] * y[0] - y[1] * y[1]) * std::exp(-r2 / (0.35 * 0.35));
}

double offset_bump(std::span<const double> y) {
  const double d2 = (y[0] - 0.3) * (y[0] - 0.3) + y[1] * y[1];
  return std::exp(-d2 / 0.05);
}

// Independent oracle for n=2: integral of k(x; xi) f(x - xi) over
// {rho(xi) > eps, x - xi in box}, log-radial trapezoid times angular
// midpoint rule in anisotropic polar coordinates,
// dxi = r^{alpha-1} (a1 t1^2 + a2 t2^2) dr dsigma.
double polar_oracle(const kernel::VariableKernel& k, const Vec& x,
                    const std::function<double(std::span<const double>)>& f,
                    const Vec& lo, const Vec& hi, double eps, double r_hi, int nr,
                    int nt) {
  const auto& p = k.profile;
  const double ulo = std::log(eps), uhi = std::log(r_hi);
  double total = 0;
  for (int i = 0; i <= nr; ++i) {
    const double u = ulo + (uhi - ulo) * i / nr;
    const double r = std::exp(u);
    const double wu = ((i == 0 || i == nr) ? 0.5 : 1.0) * (uhi - ulo) / nr;
    const double ralpha = std::pow(r, p.homogeneous_dimension);
    double ring = 0;
    for (int j = 0; j < nt; ++j) {
      const double t = 2.0 * kPi * (j + 0.5) / nt;
      const Vec th = {std::cos(t), std::sin(t)};
      const Vec xi = metric::dilate(r, th, p);
      const Vec y = {x[0] - xi[0], x[1] - xi[1]};
      if (y[0] < lo[0] || y[0] > hi[0] || y[1] < lo[1] || y[1] > hi[1]) continue;
      const double aform =
          p.exponents[0] * th[0] * th[0] + p.exponents[1] * th[1] * th[1];
      ring += k(x, xi) * f(y) * aform;
    }
    total += wu * ralpha * ring * (2.0 * kPi / nt);
  }
  return total;
}

double masked_sup_diff(const OperatorResult& a, const OperatorResult& b) {
  double sup = 0;
  for (std::size_t i = 0; i < a.output.values.size(); ++i)
    if (a.evaluated[i] && b.evaluated[i])
      sup = std::max(sup, std::abs(a.output.values[i] - b.output.values[i]));
  return sup;
}

double masked_sup(const OperatorResult& a) {
  double sup = 0;
  for (std::size_t i = 0; i < a.output.values.size(); ++i)
    if (a.evaluated[i]) sup = std::max(sup, std::abs(a.output.values[i]));
  return sup;
}

double rel_l2_discrepancy(const OperatorResult& approx, const OperatorResult& ref) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < ref.output.values.size(); ++i)
    if (ref.evaluated[i]) {
      const double d = approx.output.values[i] - ref.output.values[i];
      num += d * d;
      den += ref.output.values[i] * ref.output.values[i];
    }
  return std::sqrt(num / den);
}

}  // namespace

TEST_SUITE("operators") {

TEST_CASE("policy validation") {
  const auto k = kernel::builtin("CZ2");
  const auto g = square(33, 1.0);
  const auto f = gridfn::sample(g, modulated_bump);
  const double h = g.spacing(0);

  CHECK_THROWS_AS(truncated_transform(k, f, {.epsilon = h}), UnderResolved);
  CHECK_THROWS_AS(truncated_transform(k, f, {.epsilon = 0.0}), std::invalid_argument);
  // cutoff at the box inradius
  CHECK_THROWS_AS(truncated_transform(k, f, {.epsilon = 1.0}), std::invalid_argument);
  // outer box reaching past the grid
  TruncationPolicy bad{.epsilon = 4 * h};
  bad.outer_lower = {-2.0, -1.0};
  bad.outer_upper = {1.0, 1.0};
  CHECK_THROWS_AS(truncated_transform(k, f, bad), std::invalid_argument);

  const auto g2 = square(17, 1.0);
  const auto a = gridfn::sample(g2, [](std::span<const double>) { return 1.0; });
  CHECK_THROWS_AS(commutator(a, k, f, {.epsilon = 4 * h}), std::invalid_argument);

  const auto k3 = kernel::builtin("RIESZ3");
  CHECK_THROWS_AS(truncated_transform(k3, f, {.epsilon = 4 * h}),
                  std::invalid_argument);
}

TEST_CASE("constant f cancels at the center") {
  const auto g = square(65, 1.0);
  const double h = g.spacing(0);
  {
    const auto f = gridfn::sample(g, [](std::span<const double>) { return 3.0; });
    const auto res = truncated_transform(kernel::builtin("CZ2"), f, {.epsilon = 4 * h});
    const std::size_t center = g.flat_index(std::vector<int>{32, 32});
    REQUIRE(res.evaluated[center]);
    CHECK(std::abs(res.output.values[center]) <= 1e-3 * 3.0);
  }
  {
    const auto f = gridfn::sample(g, [](std::span<const double>) { return -2.0; });
    const auto res = truncated_transform(kernel::builtin("MIX12"), f, {.epsilon = 4 * h});
    const std::size_t center = g.flat_index(std::vector<int>{32, 32});
    REQUIRE(res.evaluated[center]);
    CHECK(std::abs(res.output.values[center]) <= 1e-3 * 2.0);
  }
}

TEST_CASE("linearity in f") {
  const auto k = kernel::builtin("CZ2");
  const auto g = square(33, 1.0);
  const auto f = gridfn::sample(g, modulated_bump);
  const auto gfun = gridfn::sample(g, offset_bump);
  const TruncationPolicy pol{.epsilon = 4 * g.spacing(0)};

  auto combo = gridfn::sample(g, [&](std::span<const double> y) {
    return 1.5 * modulated_bump(y) - 2.0 * offset_bump(y);
  });
  const auto lhs = truncated_transform(k, combo, pol);
  const auto t1 = truncated_transform(k, f, pol);
  const auto t2 = truncated_transform(k, gfun, pol);

  double sup = 0, scale = 0;
  for (std::size_t i = 0; i < lhs.output.values.size(); ++i) {
    if (!lhs.evaluated[i]) continue;
    const double want = 1.5 * t1.output.values[i] - 2.0 * t2.output.values[i];
    sup = std::max(sup, std::abs(lhs.output.values[i] - want));
    scale = std::max(scale, std::abs(want));
  }
  CHECK(sup <= 1e-12 * std::max(scale, 1.0));
}

TEST_CASE("modulated bump against the fine polar oracle") {
  const auto k = kernel::builtin("CZ2");
  const auto g = square(129, 1.0);
  const double h = g.spacing(0);
  const auto f = gridfn::sample(g, modulated_bump);
  const TruncationPolicy pol{.epsilon = 8 * h};
  const auto res = truncated_transform(k, f, pol);

  const std::vector<std::vector<int>> idx = {{64, 64}, {80, 56}, {44, 78}};
  for (const auto& mi : idx) {
    const std::size_t flat = g.flat_index(mi);
    REQUIRE(res.evaluated[flat]);
    const Vec x = g.point(flat);
    const double oracle =
        polar_oracle(k, x, modulated_bump, g.lower, g.upper, pol.epsilon, 3.0, 2400, 720);
    REQUIRE(std::abs(oracle) > 5e-3);
    CHECK(std::abs(res.output.values[flat] - oracle) <= 1e-2 * std::abs(oracle));
  }
}

TEST_CASE("odd kernel keeps the x minus y orientation") {
  const auto basis = harmonics::HarmonicBasis::make(2, 4);
  const auto prof = metric::AnisotropyProfile::make({1.0, 1.0});
  const auto k = harmonics::hsm_kernel(basis, 1, 1, prof);
  const auto g = square(65, 1.0);
  const auto f = gridfn::sample(g, offset_bump);
  const TruncationPolicy pol{.epsilon = 4 * g.spacing(0)};
  const auto res = truncated_transform(k, f, pol);

  const std::size_t flat = g.flat_index(std::vector<int>{32, 32});
  const double oracle = polar_oracle(k, {0.0, 0.0}, offset_bump, g.lower, g.upper,
                                     pol.epsilon, 3.0, 2400, 720);
  REQUIRE(oracle < -0.5);  // bump sits at positive x1, kernel ~ cos(theta)
  CHECK(std::abs(res.output.values[flat] - oracle) <= 1e-2 * std::abs(oracle));
}

TEST_CASE("commutator difference form equals operator form") {
  const auto g = square(49, 1.0);
  const TruncationPolicy pol{.epsilon = 4 * g.spacing(0)};
  const auto f = gridfn::sample(g, modulated_bump);
  const auto a = gridfn::sample(g, [](std::span<const double> y) { return y[0]; });

  for (const char* name : {"CZ2", "VAR-CZ2"}) {
    const auto k = kernel::builtin(name);
    const auto diff_form = commutator(a, k, f, pol);
    const auto af = gridfn::sample(g, [&](std::span<const double> y) {
      return y[0] * modulated_bump(y);
    });
    const auto kaf = truncated_transform(k, af, pol);
    const auto kf = truncated_transform(k, f, pol);

    double sup = 0, scale = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!diff_form.evaluated[i]) continue;
      const double want = kaf.output.values[i] - a.values[i] * kf.output.values[i];
      sup = std::max(sup, std::abs(diff_form.output.values[i] - want));
      scale = std::max(scale, std::abs(want));
    }
    CHECK(scale > 0);
    CHECK(sup <= 1e-10 * std::max(scale, 1.0));
  }
}

TEST_CASE("commutator vanishes for constant a and is bilinear") {
  const auto k = kernel::builtin("CZ2");
  const auto g = square(49, 1.0);
  const TruncationPolicy pol{.epsilon = 4 * g.spacing(0)};
  const auto f = gridfn::sample(g, modulated_bump);

  const auto ac = gridfn::sample(g, [](std::span<const double>) { return 2.5; });
  CHECK(masked_sup(commutator(ac, k, f, pol)) <= 1e-12);

  const auto a1 = gridfn::sample(g, [](std::span<const double> y) { return y[0]; });
  const auto a2 = gridfn::sample(g, [](std::span<const double> y) {
    return std::sin(y[1]) + 0.3 * y[0];
  });
  const auto c1 = commutator(a1, k, f, pol);
  const auto c2 = commutator(a2, k, f, pol);

  auto a3 = a1;
  for (std::size_t i = 0; i < a3.values.size(); ++i) a3.values[i] *= 3.0;
  const auto c3 = commutator(a3, k, f, pol);
  auto sum = a1;
  for (std::size_t i = 0; i < sum.values.size(); ++i) sum.values[i] += a2.values[i];
  const auto csum = commutator(sum, k, f, pol);

  double sup = 0, scale = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!c1.evaluated[i]) continue;
    sup = std::max(sup, std::abs(c3.output.values[i] - 3.0 * c1.output.values[i]));
    sup = std::max(sup, std::abs(csum.output.values[i] - c1.output.values[i] -
                                 c2.output.values[i]));
    scale = std::max({scale, std::abs(c1.output.values[i]),
                      std::abs(c2.output.values[i])});
  }
  CHECK(scale > 0);
  CHECK(sup <= 1e-12 * std::max(scale, 1.0));
}

TEST_CASE("constant kernel path matches the equivalent builtin") {
  const auto basis = harmonics::HarmonicBasis::make(2, 4);
  const auto prof = metric::AnisotropyProfile::make({1.0, 1.0});
  const auto g = square(65, 1.0);
  const auto f = gridfn::sample(g, modulated_bump);
  const TruncationPolicy pol{.epsilon = 4 * g.spacing(0)};

  const auto via_harmonic = constant_transform(basis, 1, 2, prof, f, pol);
  const auto direct = truncated_transform(kernel::builtin("CZ2"), f, pol);
  const double scale = masked_sup(direct);
  CHECK(scale > 0);
  CHECK(masked_sup_diff(via_harmonic, direct) <= 1e-12 * std::max(scale, 1.0));

  CHECK_THROWS_AS(constant_transform(basis, 1, 0, prof, f, pol), std::out_of_range);

  const auto zero = gridfn::sample(g, [](std::span<const double>) { return 0.0; });
  CHECK(masked_sup(constant_transform(basis, 1, 2, prof, zero, pol)) == 0.0);
}

TEST_CASE("cutoff refinement is Cauchy and diagnostics fill in") {
  const auto k = kernel::builtin("CZ2");
  const auto g = square(65, 1.0);
  const double h = g.spacing(0);
  const auto f = gridfn::sample(g, modulated_bump);

  const auto t16 = truncated_transform(k, f, {.epsilon = 16 * h});
  const auto t8 = truncated_transform(k, f, {.epsilon = 8 * h});
  const auto t4 = truncated_transform(k, f, {.epsilon = 4 * h});

  CHECK(t4.straddling_cells > 0);
  CHECK(t4.truncation_error_estimate > 0);
  CHECK(std::isfinite(t4.truncation_error_estimate));
  CHECK(t4.evaluated_count() > t16.evaluated_count());
  CHECK(t4.epsilon == doctest::Approx(4 * h));

  // deltas over the common (widest-margin) mask shrink as the cutoff halves
  double d1 = 0, d2 = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!t16.evaluated[i]) continue;
    d1 = std::max(d1, std::abs(t16.output.values[i] - t8.output.values[i]));
    d2 = std::max(d2, std::abs(t8.output.values[i] - t4.output.values[i]));
  }
  CHECK(d1 > 0);
  CHECK(d2 > 0);
  CHECK(d2 <= 1.1 * d1);
}

TEST_CASE("series transform reproduces single-harmonic kernels") {
  const auto g = square(49, 1.0);
  const TruncationPolicy pol{.epsilon = 4 * g.spacing(0)};
  const auto f = gridfn::sample(g, modulated_bump);

  CHECK_THROWS_AS(series_transform(kernel::builtin("CZ2"), f, pol, 1),
                  std::invalid_argument);

  const auto direct = truncated_transform(kernel::builtin("CZ2"), f, pol);
  const double scale = masked_sup(direct);
  for (int M : {2, 5}) {
    const auto ser = series_transform(kernel::builtin("CZ2"), f, pol, M);
    CHECK(masked_sup_diff(ser, direct) <= 1e-10 * std::max(scale, 1.0));
  }

  // n=3: the degree-2 kernel is likewise reproduced at M=2
  const auto g3 = Grid::make({13, 13, 13}, {-1, -1, -1}, {1, 1, 1});
  const auto f3 = gridfn::sample(g3, [](std::span<const double> y) {
    const double r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
    return y[0] * std::exp(-r2 / 0.2);
  });
  const auto k3 = kernel::builtin("RIESZ3");
  const TruncationPolicy pol3{.epsilon = 2 * g3.spacing(0)};
  const auto direct3 = truncated_transform(k3, f3, pol3);
  const auto ser3 = series_transform(k3, f3, pol3, 2);
  const double scale3 = masked_sup(direct3);
  CHECK(scale3 > 0);
  CHECK(masked_sup_diff(ser3, direct3) <= 1e-10 * std::max(scale3, 1.0));
}

TEST_CASE("series transform re-expands x-dependent kernels per point") {
  const auto g = square(41, 1.0);
  const TruncationPolicy pol{.epsilon = 4 * g.spacing(0)};
  const auto f = gridfn::sample(g, modulated_bump);
  const auto k = kernel::builtin("VAR-CZ2");

  const auto direct = truncated_transform(k, f, pol);
  const auto ser = series_transform(k, f, pol, 3);
  const double scale = masked_sup(direct);
  CHECK(scale > 0);
  CHECK(masked_sup_diff(ser, direct) <= 1e-10 * std::max(scale, 1.0));

  // the per-point coefficient this path rides on
  const auto basis = harmonics::HarmonicBasis::make(2, 3);
  const auto quad = metric::sphere_quadrature(2, 256);
  for (double x1 : {-0.7, 0.0, 1.1}) {
    const Vec x = {x1, 0.4};
    const auto c = harmonics::expand(
        [&](std::span<const double> u) { return k(x, u); }, basis, quad);
    CHECK(std::abs(c.coefficient(1, 2) - (2.0 + std::sin(x1))) <= 1e-10);
  }

  // n=3 has no per-point expansion path
  const auto g3 = Grid::make({9, 9, 9}, {-1, -1, -1}, {1, 1, 1});
  const auto f3 = gridfn::sample(g3, [](std::span<const double>) { return 1.0; });
  kernel::VariableKernel k3 = kernel::builtin("RIESZ3");
  k3.x_dependent = true;
  CHECK_THROWS_AS(series_transform(k3, f3, {.epsilon = 2 * g3.spacing(0)}, 2),
                  UnsupportedDimension);
}

TEST_CASE("series discrepancy decreases in the truncation degree") {
  const auto g = square(49, 1.0);
  const TruncationPolicy pol{.epsilon = 4 * g.spacing(0)};
  const auto f = gridfn::sample(g, modulated_bump);

  {
    // single-harmonic kernel: already at the noise floor from M=2 on
    const auto k = kernel::builtin("MIX12");
    const auto direct = truncated_transform(k, f, pol);
    const double d2 = rel_l2_discrepancy(series_transform(k, f, pol, 2), direct);
    const double d4 = rel_l2_discrepancy(series_transform(k, f, pol, 4), direct);
    CHECK(d2 <= 1e-10);
    CHECK(d4 <= 1.05 * d2 + 1e-12);
  }
  {
    // geometric coefficient decay gives a genuine curve
    const auto k = kernel::control("SMOOTH2");
    const auto direct = truncated_transform(k, f, pol);
    double prev = rel_l2_discrepancy(series_transform(k, f, pol, 2), direct);
    CHECK(prev > 1e-8);
    for (int M : {3, 4, 6}) {
      const double d = rel_l2_discrepancy(series_transform(k, f, pol, M), direct);
      CHECK(d <= 0.8 * prev);
      prev = d;
    }
  }
  {
    const auto k = kernel::builtin("CZ2");
    const auto direct = truncated_transform(k, f, pol);
    CHECK(rel_l2_discrepancy(series_transform(k, f, pol, 16), direct) <= 1e-3);
  }
}

TEST_CASE("pointwise smoothness ratio is stable") {
  const auto basis = harmonics::HarmonicBasis::make(2, 8);
  const auto prof = metric::AnisotropyProfile::make({1.0, 1.0});
  metric::Ellipsoid e = metric::Ellipsoid::make({0.3, -0.2}, 1.0, prof);

  CHECK_THROWS_AS(hormander_pointwise(basis, 1, 1, prof, e, 500),
                  std::invalid_argument);
  CHECK_THROWS_AS(hormander_pointwise(basis, 1, 0, prof, e, 2000), std::out_of_range);

  const double v2000 = hormander_pointwise(basis, 1, 1, prof, e, 2000);
  const double v4000 = hormander_pointwise(basis, 1, 1, prof, e, 4000);
  CHECK(v2000 > 0);
  CHECK(v2000 < 50);
  // the sample stream is nested, so the sup can only grow
  CHECK(v4000 >= v2000);
  CHECK(v4000 <= 1.2 * v2000);

  // exact dilation invariance across ellipsoid radii, isotropic and not
  for (auto exps : {Vec{1.0, 1.0}, Vec{1.0, 2.0}}) {
    const auto p = metric::AnisotropyProfile::make(exps);
    const double base =
        hormander_pointwise(basis, 1, 2, p, metric::Ellipsoid::make({0.3, -0.2}, 1.0, p),
                            2000);
    for (double r : {0.5, 2.0}) {
      const double v = hormander_pointwise(
          basis, 1, 2, p, metric::Ellipsoid::make({0.3, -0.2}, r, p), 2000);
      CHECK(std::abs(v - base) <= 1e-9 * base);
    }
  }

  // normalized ratios stay within one order across degrees
  double lo = 1e300, hi = 0;
  for (int m : {1, 2, 4}) {
    const double v = hormander_pointwise(basis, 1, m, prof, e, 2000);
    CHECK(v > 0);
    CHECK(v < 100);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(hi / lo <= 10.0);
}

TEST_CASE("integral smoothness condition plateaus") {
  const auto basis = harmonics::HarmonicBasis::make(2, 4);
  const auto prof = metric::AnisotropyProfile::make({1.0, 1.0});

  CHECK_THROWS_AS(hormander_integral(basis, 1, 1, prof, Vec{0.0, 0.0}, 64.0),
                  SingularPoint);
  CHECK_THROWS_AS(hormander_integral(basis, 1, 1, prof, Vec{1.0, 0.0}, 2.0),
                  std::invalid_argument);

  // exact dilation invariance pins the scaled pair together
  const double at1 = hormander_integral(basis, 1, 2, prof, Vec{1.0, 0.0}, 64.0);
  const double at2 = hormander_integral(basis, 1, 2, prof, Vec{2.0, 0.0}, 128.0);
  CHECK(at1 > 0);
  CHECK(std::abs(at2 - at1) <= 1e-3 * at1);

  // doubling the outer radius only adds a small positive tail
  const double wide = hormander_integral(basis, 1, 2, prof, Vec{1.0, 0.0}, 128.0);
  CHECK(wide >= at1);
  CHECK(wide - at1 <= 0.05 * at1);

  // variation across rho(x) in [0.25, 4] on a fixed dilation orbit and
  // across directions
  std::vector<double> vals;
  for (double t : {0.25, 1.0, 4.0})
    for (double ang : {0.3, 1.2, 2.5}) {
      const Vec dir = {std::cos(ang), std::sin(ang)};
      const Vec x = metric::dilate(t, dir, prof);
      vals.push_back(hormander_integral(basis, 1, 2, prof, x, 64.0 * t));
    }
  const auto [mn, mx] = std::minmax_element(vals.begin(), vals.end());
  CHECK(*mn > 0);
  CHECK((*mx - *mn) <= 0.25 * *mn);
}

}  // TEST_SUITE
