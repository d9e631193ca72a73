#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "aniso/errors.hpp"
#include "aniso/harmonics.hpp"
#include "aniso/kernel.hpp"
#include "aniso/metric.hpp"

using namespace aniso;
using namespace aniso::harmonics;

namespace {

const double kPi = std::acos(-1.0);
const double kSqrtPi = std::sqrt(kPi);

double simpson_circle(const std::function<double(double)>& f, int intervals) {
  const double h = 2.0 * kPi / intervals;
  double s = f(0.0) + f(2.0 * kPi);
  for (int i = 1; i < intervals; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return s * h / 3.0;
}

// independent 4th-order central difference of a kernel evaluator
Vec fd_gradient(const kernel::VariableKernel& k, const Vec& x, double h) {
  Vec g(x.size());
  const Vec base(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto at = [&](double t) {
      Vec y = x;
      y[i] += t;
      return k(base, y);
    };
    g[i] = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
  }
  return g;
}

Vec random_sphere_point(int n, Rng& rng) {
  std::normal_distribution<double> gauss;
  Vec u(n);
  double nrm = 0;
  do {
    for (auto& v : u) v = gauss(rng);
    nrm = euclidean_norm(u);
  } while (nrm < 1e-6);
  for (auto& v : u) v /= nrm;
  return u;
}

double fit_exponent(const std::vector<double>& ms, const std::vector<double>& sups) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const double lx = std::log(ms[i]), ly = std::log(sups[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double k = double(ms.size());
  return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

}  // namespace

TEST_SUITE("harmonics") {

TEST_CASE("degree dimension formula") {
  CHECK(basis_dim(2, 0) == 1);
  CHECK(basis_dim(2, 1) == 2);
  CHECK(basis_dim(2, 5) == 2);
  CHECK(basis_dim(3, 0) == 1);
  CHECK(basis_dim(3, 1) == 3);
  CHECK(basis_dim(3, 2) == 5);
  CHECK(basis_dim(3, 7) == 15);
  CHECK_THROWS_AS(basis_dim(4, 1), UnsupportedDimension);
  CHECK_THROWS_AS(basis_dim(2, -1), std::invalid_argument);
  // polynomial growth: g_m <= 3 m for n=3 over a long run
  for (int m = 1; m <= 32; ++m) CHECK(basis_dim(3, m) <= 3 * m);
}

TEST_CASE("closed-form values, two dimensions") {
  auto b = HarmonicBasis::make(2, 8);
  const Vec east = {1.0, 0.0};
  CHECK(b.eval(1, 0, east) == doctest::Approx(1.0 / std::sqrt(2.0 * kPi)).epsilon(1e-14));
  CHECK(b.eval(1, 2, east) == doctest::Approx(1.0 / kSqrtPi).epsilon(1e-14));
  const double t = 0.73;
  const Vec u = {std::cos(t), std::sin(t)};
  CHECK(b.eval(1, 3, u) == doctest::Approx(std::cos(3 * t) / kSqrtPi).epsilon(1e-13));
  CHECK(b.eval(2, 3, u) == doctest::Approx(std::sin(3 * t) / kSqrtPi).epsilon(1e-13));
}

TEST_CASE("closed-form values, three dimensions") {
  auto b = HarmonicBasis::make(3, 4);
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const Vec u = random_sphere_point(3, rng);
    const double c0 = std::sqrt(3.0 / (4.0 * kPi));
    CHECK(b.eval(1, 1, u) == doctest::Approx(c0 * u[2]).epsilon(1e-12));
    CHECK(b.eval(2, 1, u) == doctest::Approx(c0 * u[0]).epsilon(1e-12));
    CHECK(b.eval(3, 1, u) == doctest::Approx(c0 * u[1]).epsilon(1e-12));
    CHECK(b.eval(1, 2, u) ==
          doctest::Approx(std::sqrt(5.0 / (16.0 * kPi)) * (3 * u[2] * u[2] - 1))
              .epsilon(1e-12));
  }
}

TEST_CASE("gram matrix is the identity") {
  struct Config {
    int n, M, res;
  };
  for (auto [n, M, res] : {Config{2, 24, 256}, Config{3, 12, 16}}) {
    auto basis = HarmonicBasis::make(n, M);
    auto quad = metric::sphere_quadrature(n, res);
    std::vector<std::pair<int, int>> idx;
    for (int m = 0; m <= M; ++m)
      for (int s = 1; s <= basis_dim(n, m); ++s) idx.emplace_back(s, m);

    std::vector<Vec> vals(idx.size(), Vec(quad.size()));
    for (std::size_t f = 0; f < idx.size(); ++f)
      for (std::size_t i = 0; i < quad.size(); ++i)
        vals[f][i] = basis.eval(idx[f].first, idx[f].second, quad.nodes[i]);

    double worst = 0;
    for (std::size_t a = 0; a < idx.size(); ++a)
      for (std::size_t b = a; b < idx.size(); ++b) {
        double ip = 0;
        for (std::size_t i = 0; i < quad.size(); ++i)
          ip += quad.weights[i] * vals[a][i] * vals[b][i];
        worst = std::max(worst, std::abs(ip - (a == b ? 1.0 : 0.0)));
      }
    CHECK(worst <= 1e-8);
  }
}

TEST_CASE("positive degrees have zero mean") {
  for (int n : {2, 3}) {
    auto basis = HarmonicBasis::make(n, 10);
    auto quad = metric::sphere_quadrature(n, n == 2 ? 128 : 14);
    for (int m = 1; m <= 10; ++m)
      for (int s = 1; s <= basis_dim(n, m); ++s) {
        const double mean = quad.integrate(
            [&](const Vec& u) { return basis.eval(s, m, u); });
        CHECK(std::abs(mean) <= 1e-10);
      }
  }
}

TEST_CASE("expansion recovers closed forms") {
  auto basis = HarmonicBasis::make(2, 8);
  auto quad = metric::sphere_quadrature(2, 256);

  auto c = expand([](std::span<const double> u) { return u[0] * u[0] - u[1] * u[1]; },
                  basis, quad);  // cos(2t) on the circle
  CHECK(c.coefficient(1, 2) == doctest::Approx(kSqrtPi).epsilon(1e-12));
  double others = 0;
  for (int m = 0; m <= 8; ++m)
    for (int s = 1; s <= basis_dim(2, m); ++s)
      if (!(m == 2 && s == 1)) others = std::max(others, std::abs(c.coefficient(s, m)));
  CHECK(others <= 1e-12);

  auto ones = expand([](std::span<const double>) { return 1.0; }, basis, quad);
  CHECK(ones.coefficient(1, 0) == doctest::Approx(std::sqrt(2.0 * kPi)).epsilon(1e-13));

  // the CZ2 restriction cos(2t)/sqrt(pi) pairs to exactly 1 by normalization
  auto unitc = expand(
      [](std::span<const double> u) { return (u[0] * u[0] - u[1] * u[1]) / kSqrtPi; },
      basis, quad);
  CHECK(unitc.coefficient(1, 2) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("parseval identity for a smooth function") {
  auto basis = HarmonicBasis::make(2, 24);
  auto quad = metric::sphere_quadrature(2, 256);
  auto phi = [](std::span<const double> u) { return std::exp(u[0]); };
  auto c = expand(phi, basis, quad);
  double sum = 0;
  for (const auto& row : c.table)
    for (double v : row) sum += v * v;
  const double target =
      simpson_circle([](double t) { return std::exp(2.0 * std::cos(t)); }, 1 << 15);
  CHECK(sum == doctest::Approx(target).epsilon(1e-10));
}

TEST_CASE("reconstruction error falls with the truncation degree") {
  auto basis = HarmonicBasis::make(2, 16);
  auto quad = metric::sphere_quadrature(2, 128);
  auto phi = [](std::span<const double> u) { return std::exp(u[0]); };
  auto c = expand(phi, basis, quad);
  auto err = reconstruction_errors(phi, basis, quad, c);
  REQUIRE(err.size() == 17);
  for (std::size_t m = 1; m < err.size(); ++m)
    CHECK(err[m] <= 1.10 * err[m - 1] + 1e-12);
  CHECK(err[16] <= 1e-10);
  CHECK(err[1] < err[0]);
}

TEST_CASE("coefficient decay rates") {
  auto basis = HarmonicBasis::make(2, 16);
  auto quad = metric::sphere_quadrature(2, 512);

  auto kink = expand(
      [](std::span<const double> u) { return std::abs(u[0]); }, basis, quad);
  // classical Fourier coefficients of |cos t| fall like m^-2; the m=2 entry
  // is 4/(3 sqrt(pi)). The kink keeps the trapezoid error near 3e-5 here.
  CHECK(kink.sup_norms[2] == doctest::Approx(4.0 / (3.0 * kSqrtPi)).epsilon(1e-4));
  auto fit = decay_fit(kink);
  CHECK_FALSE(fit.degenerate);
  CHECK(fit.slope <= -2.0);
  CHECK(fit.slope >= -2.3);

  auto analytic = expand(
      [](std::span<const double> u) { return std::exp(u[0]); }, basis, quad);
  auto afit = decay_fit(analytic);
  CHECK_FALSE(afit.degenerate);
  CHECK(afit.slope <= -2.0);

  auto single = expand(
      [](std::span<const double> u) { return u[0] * u[0] - u[1] * u[1]; }, basis, quad);
  CHECK(decay_fit(single).degenerate);
}

TEST_CASE("constant-kernel factory") {
  auto basis = HarmonicBasis::make(2, 8);
  auto iso = metric::AnisotropyProfile::make({1.0, 1.0});
  auto H = hsm_kernel(basis, 1, 2, iso);
  const Vec zero(2, 0.0);
  CHECK(H(zero, Vec{1.0, 0.0}) == doctest::Approx(1.0 / kSqrtPi).epsilon(1e-13));
  CHECK_THROWS_AS(H(zero, Vec{0.0, 0.0}), SingularPoint);
  CHECK(kernel::check_homogeneity(H, 200, 1e-10) <= 1e-12);

  auto par = metric::AnisotropyProfile::make({1.0, 2.0});
  kernel::ValidationConfig cfg;
  cfg.max_order = 2;
  CHECK(kernel::validate(hsm_kernel(basis, 2, 3, par), cfg).pass);

  // degree zero has no cancellation; everything else about it is fine
  auto H0 = hsm_kernel(basis, 1, 0, par);
  auto rep = kernel::validate(H0, cfg);
  CHECK_FALSE(rep.pass);
  CHECK(rep.cancellation_residual ==
        doctest::Approx(2.0 * kPi / std::sqrt(2.0 * kPi)).epsilon(1e-10));

  auto b3 = HarmonicBasis::make(3, 6);
  auto iso3 = metric::AnisotropyProfile::make({1.0, 1.0, 1.0});
  auto H3 = hsm_kernel(b3, 2, 1, iso3);
  CHECK(H3(Vec(3, 0.0), Vec{1.0, 0.0, 0.0}) ==
        doctest::Approx(std::sqrt(3.0 / (4.0 * kPi))).epsilon(1e-12));
  CHECK_THROWS_AS(hsm_kernel(basis, 3, 2, iso), std::out_of_range);
}

TEST_CASE("analytic gradient agrees with finite differences") {
  struct Config {
    int n;
    std::vector<double> exps;
    int s, m;
  };
  const std::vector<Config> configs = {
      {2, {1.0, 2.0}, 1, 1}, {2, {1.0, 2.0}, 2, 2}, {2, {1.0, 2.0}, 1, 5},
      {2, {1.0, 1.0}, 2, 3}, {3, {1.0, 1.0, 1.0}, 2, 2}, {3, {1.0, 1.0, 2.0}, 4, 3}};
  Rng rng(17);
  std::uniform_real_distribution<double> rad(0.5, 2.0);
  double worst = 0;
  for (const auto& cfg : configs) {
    auto basis = HarmonicBasis::make(cfg.n, 8);
    auto prof = metric::AnisotropyProfile::make(cfg.exps);
    auto H = hsm_kernel(basis, cfg.s, cfg.m, prof);
    for (int t = 0; t < 170; ++t) {
      const Vec dir = random_sphere_point(cfg.n, rng);
      const Vec x = metric::dilate(rad(rng), dir, prof);
      const Vec a = hsm_gradient(basis, cfg.s, cfg.m, prof, x);
      const Vec f = fd_gradient(H, x, 1e-4);
      Vec diff(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - f[i];
      worst = std::max(worst, euclidean_norm(diff) / euclidean_norm(f));
    }
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("gradient scales like the differentiated homogeneity identity") {
  auto basis = HarmonicBasis::make(2, 8);
  auto prof = metric::AnisotropyProfile::make({1.0, 2.0});
  const double alpha = prof.homogeneous_dimension;
  Rng rng(29);
  std::uniform_real_distribution<double> scale(0.2, 5.0);
  for (int t = 0; t < 100; ++t) {
    const Vec u = random_sphere_point(2, rng);
    const double mu = scale(rng);
    const Vec base = hsm_gradient(basis, 1, 3, prof, u);
    const Vec scaled = hsm_gradient(basis, 1, 3, prof, metric::dilate(mu, u, prof));
    for (int i = 0; i < 2; ++i) {
      const double expect = std::pow(mu, -(alpha + prof.exponents[i])) * base[i];
      CHECK(scaled[i] == doctest::Approx(expect).epsilon(1e-10));
    }
  }
}

TEST_CASE("degree-zero gradient reduces to the chain rule") {
  auto basis = HarmonicBasis::make(2, 4);
  auto prof = metric::AnisotropyProfile::make({1.0, 2.0});
  const double alpha = prof.homogeneous_dimension;
  const double y0 = 1.0 / std::sqrt(2.0 * kPi);
  Rng rng(31);
  for (int t = 0; t < 50; ++t) {
    Vec x = random_sphere_point(2, rng);
    x[0] *= 1.7;
    x[1] *= 0.6;
    double r = 0;
    const Vec bar = metric::sphere_projection(x, prof, &r);
    double a_form = 0;
    for (int j = 0; j < 2; ++j) a_form += prof.exponents[j] * bar[j] * bar[j];
    const Vec g = hsm_gradient(basis, 1, 0, prof, x);
    for (int i = 0; i < 2; ++i) {
      const double expect =
          -alpha * y0 * std::pow(r, -alpha - prof.exponents[i]) * bar[i] / a_form;
      CHECK(g[i] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("derivative growth in the degree stays polynomial") {
  // gradient sups fit m^p with p at most 1 + (n-2)/2 + 0.25
  for (int n : {2, 3}) {
    const int top = n == 2 ? 24 : 12;
    auto basis = HarmonicBasis::make(n, top);
    auto quad = metric::sphere_quadrature(n, n == 2 ? 96 : 12);
    std::vector<double> ms, sups, vals;
    for (int m = 2; m <= top; ++m) {
      double sup = 0, val = 0;
      for (int s = 1; s <= basis_dim(n, m); ++s)
        for (const auto& u : quad.nodes) {
          sup = std::max(sup, euclidean_norm(basis.gradient(s, m, u)));
          val = std::max(val, std::abs(basis.eval(s, m, u)));
        }
      ms.push_back(m);
      sups.push_back(sup);
      vals.push_back(val);
    }
    CHECK(fit_exponent(ms, sups) <= 1.0 + (n - 2) / 2.0 + 0.25);
    CHECK(fit_exponent(ms, vals) <= (n - 2) / 2.0 + 0.25);
  }
}

TEST_CASE("gradient bound constant is flat across degrees") {
  auto prof = metric::AnisotropyProfile::make({1.0, 2.0});
  auto basis = HarmonicBasis::make(2, 8);
  std::vector<double> cs;
  for (int m : {1, 2, 4, 8}) {
    double c_m = 0;
    for (int j = 0; j < 64; ++j) {
      const double t = 2.0 * kPi * j / 64.0;
      const Vec x = {std::cos(t), std::sin(t)};  // on the unit rho-sphere
      for (int s = 1; s <= 2; ++s) {
        const Vec g = hsm_gradient(basis, s, m, prof, x);
        for (double gi : g) c_m = std::max(c_m, std::abs(gi));
      }
    }
    cs.push_back(c_m / std::pow(m, 1.0));  // m^{n/2} with n=2
  }
  const double lo = *std::min_element(cs.begin(), cs.end());
  const double hi = *std::max_element(cs.begin(), cs.end());
  CHECK(hi / lo <= 4.0);
}

TEST_CASE("index validation") {
  auto basis = HarmonicBasis::make(2, 6);
  const Vec u = {0.0, 1.0};
  CHECK_THROWS_AS(basis.eval(3, 2, u), std::out_of_range);
  CHECK_THROWS_AS(basis.eval(1, 7, u), std::out_of_range);
  CHECK_THROWS_AS(basis.eval(2, 0, u), std::out_of_range);
  CHECK_THROWS_AS(basis.eval(1, 1, Vec{0.5, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(HarmonicBasis::make(5, 4), UnsupportedDimension);
}

TEST_CASE("coefficient table export") {
  auto basis = HarmonicBasis::make(2, 3);
  auto quad = metric::sphere_quadrature(2, 64);
  auto c = expand([](std::span<const double> u) { return u[0]; }, basis, quad);
  const std::string path =
      (std::filesystem::temp_directory_path() / "aniso_coeffs.csv").string();
  write_coefficients_csv(c, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "m,s,b_sm");
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 1 + 2 + 2 + 2);
  std::remove(path.c_str());
}

}  // TEST_SUITE
