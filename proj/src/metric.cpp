#include "aniso/metric.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "aniso/errors.hpp"

namespace aniso::metric {

bool AnisotropyProfile::isotropic() const {
  for (double a : exponents)
    if (a != 1.0) return false;
  return true;
}

AnisotropyProfile AnisotropyProfile::make(std::vector<double> exponents) {
  if (exponents.size() < 2)
    throw UnsupportedDimension("anisotropy profile needs dimension >= 2, got " +
                               std::to_string(exponents.size()));
  double sum = 0;
  for (double a : exponents) {
    if (!std::isfinite(a) || a < 1.0)
      throw std::invalid_argument("anisotropy exponents must be finite and >= 1, got " +
                                  std::to_string(a));
    sum += a;
  }
  AnisotropyProfile p;
  p.exponents = std::move(exponents);
  p.homogeneous_dimension = sum;
  return p;
}

Ellipsoid Ellipsoid::make(std::vector<double> center, double radius,
                          AnisotropyProfile profile) {
  if (static_cast<int>(center.size()) != profile.dim())
    throw std::invalid_argument("ellipsoid center dimension mismatch");
  if (!(radius > 0) || !std::isfinite(radius))
    throw std::invalid_argument("ellipsoid radius must be positive, got " +
                                std::to_string(radius));
  Ellipsoid e;
  e.center = std::move(center);
  e.radius = radius;
  e.profile = std::move(profile);
  return e;
}

double metric_form(std::span<const double> x, double r, const AnisotropyProfile& p) {
  double s = 0;
  for (int i = 0; i < p.dim(); ++i)
    s += x[i] * x[i] * std::pow(r, -2.0 * p.exponents[i]);
  return s;
}

namespace {

// Solves F(y, r) = 1 for y pre-scaled so that max_i |y_i|^{1/alpha_i} = 1,
// which pins rho(y) inside [1, sqrt(n)]. Newton is safeguarded by keeping a
// bracket and bisecting whenever a step would leave it.
double solve_normalized(std::span<const double> y, const AnisotropyProfile& p) {
  double lo = 1.0, hi = std::sqrt(static_cast<double>(p.dim()));
  double r = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    double f = 0, df = 0;
    for (int i = 0; i < p.dim(); ++i) {
      const double t = y[i] * y[i] * std::pow(r, -2.0 * p.exponents[i]);
      f += t;
      df += -2.0 * p.exponents[i] * t / r;
    }
    const double resid = f - 1.0;
    if (std::abs(resid) <= 1e-13) return r;
    if (resid > 0)
      lo = r;  // F decreasing: root is to the right
    else
      hi = r;
    double next = r - resid / df;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    r = next;
  }
  return r;
}

}  // namespace

double rho(std::span<const double> x, const AnisotropyProfile& p) {
  if (static_cast<int>(x.size()) != p.dim())
    throw std::invalid_argument("rho: point dimension mismatch");
  bool zero = true;
  for (double v : x)
    if (v != 0) zero = false;
  if (zero) return 0;

  if (p.isotropic()) return euclidean_norm(x);

  if (p.dim() == 2) {
    // alpha = (1,2) in either order: rho^4 - u^2 rho^2 - v^2 = 0 with u the
    // exponent-1 coordinate, so rho^2 = (u^2 + sqrt(u^4 + 4 v^2)) / 2.
    const auto& a = p.exponents;
    if ((a[0] == 1.0 && a[1] == 2.0) || (a[0] == 2.0 && a[1] == 1.0)) {
      const double u = a[0] == 1.0 ? x[0] : x[1];
      const double v = a[0] == 1.0 ? x[1] : x[0];
      const double u2 = u * u;
      return std::sqrt(0.5 * (u2 + std::sqrt(u2 * u2 + 4.0 * v * v)));
    }
  }

  // Dilate by 1/s so the scaled point has rho of order one; the identity
  // rho(dilate(mu, x)) = mu rho(x) makes the rescaling exact.
  double s = 0;
  for (int i = 0; i < p.dim(); ++i)
    s = std::max(s, std::pow(std::abs(x[i]), 1.0 / p.exponents[i]));
  Vec y(p.dim());
  for (int i = 0; i < p.dim(); ++i)
    y[i] = x[i] * std::pow(s, -p.exponents[i]);
  return s * solve_normalized(y, p);
}

Vec sphere_projection(std::span<const double> x, const AnisotropyProfile& p,
                      double* rho_out) {
  const double r = rho(x, p);
  if (r == 0) throw SingularPoint("sphere_projection undefined at the origin");
  if (rho_out) *rho_out = r;
  Vec bar(p.dim());
  for (int i = 0; i < p.dim(); ++i) bar[i] = x[i] * std::pow(r, -p.exponents[i]);
  return bar;
}

Vec dilate(double mu, std::span<const double> x, const AnisotropyProfile& p) {
  if (static_cast<int>(x.size()) != p.dim())
    throw std::invalid_argument("dilate: point dimension mismatch");
  if (!(mu > 0)) throw std::invalid_argument("dilate: factor must be positive");
  Vec out(p.dim());
  for (int i = 0; i < p.dim(); ++i) out[i] = std::pow(mu, p.exponents[i]) * x[i];
  return out;
}

double unit_ball_volume(int n) {
  return std::pow(std::acos(-1.0), n / 2.0) / std::tgamma(n / 2.0 + 1.0);
}

double sphere_area(int n) {
  return 2.0 * std::pow(std::acos(-1.0), n / 2.0) / std::tgamma(n / 2.0);
}

double ellipsoid_measure(const Ellipsoid& e) {
  return unit_ball_volume(e.profile.dim()) *
         std::pow(e.radius, e.profile.homogeneous_dimension);
}

bool ellipsoid_contains(const Ellipsoid& e, std::span<const double> x) {
  if (static_cast<int>(x.size()) != e.profile.dim())
    throw std::invalid_argument("ellipsoid_contains: point dimension mismatch");
  double s = 0;
  for (int i = 0; i < e.profile.dim(); ++i) {
    const double d = x[i] - e.center[i];
    s += d * d * std::pow(e.radius, -2.0 * e.profile.exponents[i]);
  }
  return s < 1.0;
}

void gauss_legendre(int q, std::vector<double>& nodes, std::vector<double>& weights) {
  if (q < 1) throw std::invalid_argument("gauss_legendre: order must be >= 1");
  nodes.assign(q, 0.0);
  weights.assign(q, 0.0);
  const double pi = std::acos(-1.0);
  const int half = (q + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(pi * (i + 0.75) / (q + 0.5));
    double dp = 0;
    for (int it = 0; it < 100; ++it) {
      // Legendre recurrence: (k+1) P_{k+1} = (2k+1) x P_k - k P_{k-1}
      double p0 = 1.0, p1 = x;
      for (int k = 1; k < q; ++k) {
        const double p2 = ((2.0 * k + 1.0) * x * p1 - k * p0) / (k + 1.0);
        p0 = p1;
        p1 = p2;
      }
      dp = q * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    nodes[i] = -x;
    nodes[q - 1 - i] = x;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    weights[i] = w;
    weights[q - 1 - i] = w;
  }
}

const std::vector<Vec>& cell_subsample_offsets(int n) {
  static const std::vector<Vec> two = [] {
    std::vector<Vec> out;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        out.push_back({(i + 0.5) / 4.0 - 0.5, (j + 0.5) / 4.0 - 0.5});
    return out;
  }();
  static const std::vector<Vec> three = [] {
    std::vector<Vec> out;
    for (int k = 0; k < 16; ++k) {
      auto frac = [](double v) { return v - std::floor(v); };
      out.push_back({(k + 0.5) / 16.0 - 0.5, frac((7.0 * k + 0.5) / 16.0) - 0.5,
                     frac((11.0 * k + 0.5) / 16.0) - 0.5});
    }
    return out;
  }();
  if (n != 2 && n != 3)
    throw UnsupportedDimension("cell subsampling supports n in {2, 3}, got " +
                               std::to_string(n));
  return n == 2 ? two : three;
}

SphereQuadrature sphere_quadrature(int n, int resolution) {
  if (n != 2 && n != 3)
    throw UnsupportedDimension("sphere quadrature supports n in {2, 3}, got " +
                               std::to_string(n));
  if (resolution < 4)
    throw UnderResolved("sphere quadrature resolution must be at least 4, got " +
                        std::to_string(resolution));
  const double pi = std::acos(-1.0);
  SphereQuadrature quad;
  if (n == 2) {
    quad.nodes.reserve(resolution);
    quad.weights.assign(resolution, 2.0 * pi / resolution);
    for (int j = 0; j < resolution; ++j) {
      const double t = 2.0 * pi * j / resolution;
      quad.nodes.push_back({std::cos(t), std::sin(t)});
    }
    return quad;
  }
  std::vector<double> u, wu;
  gauss_legendre(resolution, u, wu);
  const int m = 2 * resolution;
  quad.nodes.reserve(static_cast<std::size_t>(resolution) * m);
  quad.weights.reserve(static_cast<std::size_t>(resolution) * m);
  for (int i = 0; i < resolution; ++i) {
    const double c = u[i];
    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    for (int k = 0; k < m; ++k) {
      const double t = 2.0 * pi * k / m;
      quad.nodes.push_back({s * std::cos(t), s * std::sin(t), c});
      quad.weights.push_back(wu[i] * 2.0 * pi / m);
    }
  }
  return quad;
}

}  // namespace aniso::metric
