#include "aniso/harmonics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "aniso/errors.hpp"

namespace aniso::harmonics {

namespace {

const double kPi = std::acos(-1.0);
const double kSqrtPi = std::sqrt(kPi);

long long binom(int a, int k) {
  if (a < k || k < 0) return 0;
  long long v = 1;
  for (int i = 1; i <= k; ++i) v = v * (a - k + i) / i;
  return v;
}

void require_on_sphere(std::span<const double> u) {
  double nrm = 0;
  for (double v : u) nrm += v * v;
  if (std::abs(nrm - 1.0) > 2e-10)
    throw std::invalid_argument("harmonic evaluation point is off the unit sphere");
}

// Fully normalized associated Legendre ladder at c = cos(phi), u = sin(phi):
// p[l][o] such that Y_l0 = p[l][0] and Y_{l,o} = sqrt(2) p[l][o] {cos,sin}(o lam)
// are orthonormal over the sphere. Seeded at sqrt(1/4pi).
void legendre_ladder(int M, double c, double u, std::vector<std::vector<double>>& p) {
  p.assign(M + 1, {});
  for (int l = 0; l <= M; ++l) p[l].assign(l + 1, 0.0);
  p[0][0] = std::sqrt(1.0 / (4.0 * kPi));
  for (int m = 1; m <= M; ++m)
    p[m][m] = u * std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * p[m - 1][m - 1];
  for (int m = 0; m < M; ++m) {
    p[m + 1][m] = std::sqrt(2.0 * m + 3.0) * c * p[m][m];
    for (int l = m + 2; l <= M; ++l) {
      const double a = std::sqrt((2.0 * l + 1.0) * (2.0 * l - 1.0) /
                                 (double(l - m) * (l + m)));
      const double b = std::sqrt((2.0 * l + 1.0) * (l - 1.0 - m) * (l - 1.0 + m) /
                                 (double(l - m) * (l + m) * (2.0 * l - 3.0)));
      p[l][m] = a * c * p[l - 1][m] - b * p[l - 2][m];
    }
  }
}

// d p[l][o] / d phi = (l c p[l][o] - e_lo p[l-1][o]) / u, e_lo from the
// degree-lowering identity. Caller guards u away from the poles.
double ladder_theta_derivative(const std::vector<std::vector<double>>& p, int l, int o,
                               double c, double u) {
  const double below = (l - 1 >= o) ? p[l - 1][o] : 0.0;
  const double e =
      std::sqrt((double(l) * l - double(o) * o) * (2.0 * l + 1.0) / (2.0 * l - 1.0));
  return (l * c * p[l][o] - e * below) / u;
}

// (order o, azimuth kind) for slot s: s=1 is the zonal term, even s are
// cosine, odd s >= 3 are sine.
struct SlotIndex {
  int order;
  bool sine;
};

SlotIndex slot_index(int s) {
  if (s == 1) return {0, false};
  return {s / 2, s % 2 == 1};
}

}  // namespace

int basis_dim(int n, int m) {
  if (n != 2 && n != 3)
    throw UnsupportedDimension("harmonics support n in {2, 3}, got " + std::to_string(n));
  if (m < 0) throw std::invalid_argument("negative harmonic degree");
  if (m == 0) return 1;
  if (m == 1) return n;
  return static_cast<int>(binom(m + n - 1, n - 1) - binom(m + n - 3, n - 1));
}

HarmonicBasis HarmonicBasis::make(int n, int max_degree) {
  basis_dim(n, 0);  // dimension check
  if (max_degree < 0 || max_degree > 64)
    throw std::invalid_argument("harmonic max_degree out of range [0, 64]");
  HarmonicBasis b;
  b.n = n;
  b.max_degree = max_degree;
  return b;
}

double HarmonicBasis::eval(int s, int m, std::span<const double> u) const {
  if (m < 0 || m > max_degree || s < 1 || s > basis_dim(n, m))
    throw std::out_of_range("harmonic index (s=" + std::to_string(s) +
                            ", m=" + std::to_string(m) + ") out of range");
  require_on_sphere(u);
  if (n == 2) {
    if (m == 0) return 1.0 / std::sqrt(2.0 * kPi);
    const double t = std::atan2(u[1], u[0]);
    return (s == 1 ? std::cos(m * t) : std::sin(m * t)) / kSqrtPi;
  }
  const double c = u[2];
  const double us = std::hypot(u[0], u[1]);
  const double lam = std::atan2(u[1], u[0]);
  std::vector<std::vector<double>> p;
  legendre_ladder(m, c, us, p);
  const auto [o, sine] = slot_index(s);
  if (o == 0) return p[m][0];
  const double az = sine ? std::sin(o * lam) : std::cos(o * lam);
  return std::sqrt(2.0) * p[m][o] * az;
}

void HarmonicBasis::eval_all(std::span<const double> u, std::vector<double>& out) const {
  require_on_sphere(u);
  std::size_t total = 0;
  for (int m = 0; m <= max_degree; ++m) total += basis_dim(n, m);
  out.resize(total);
  std::size_t at = 0;
  if (n == 2) {
    const double c = u[0], s = u[1];
    out[at++] = 1.0 / std::sqrt(2.0 * kPi);
    double cm = c, sm = s;
    for (int m = 1; m <= max_degree; ++m) {
      out[at++] = cm / kSqrtPi;
      out[at++] = sm / kSqrtPi;
      const double cn = cm * c - sm * s;
      sm = sm * c + cm * s;
      cm = cn;
    }
    return;
  }
  const double cz = u[2];
  const double us = std::hypot(u[0], u[1]);
  const double lam = std::atan2(u[1], u[0]);
  thread_local std::vector<std::vector<double>> p;
  legendre_ladder(max_degree, cz, us, p);
  Vec caz(max_degree + 1), saz(max_degree + 1);
  for (int o = 0; o <= max_degree; ++o) {
    caz[o] = std::cos(o * lam);
    saz[o] = std::sin(o * lam);
  }
  for (int m = 0; m <= max_degree; ++m) {
    out[at++] = p[m][0];
    for (int o = 1; o <= m; ++o) {
      const double base = std::sqrt(2.0) * p[m][o];
      out[at++] = base * caz[o];
      out[at++] = base * saz[o];
    }
  }
}

Vec HarmonicBasis::gradient(int s, int m, std::span<const double> u) const {
  if (m < 0 || m > max_degree || s < 1 || s > basis_dim(n, m))
    throw std::out_of_range("harmonic index (s=" + std::to_string(s) +
                            ", m=" + std::to_string(m) + ") out of range");
  require_on_sphere(u);
  if (m == 0) return Vec(n, 0.0);
  if (n == 2) {
    const double t = std::atan2(u[1], u[0]);
    const double d =
        (s == 1 ? -m * std::sin(m * t) : m * std::cos(m * t)) / kSqrtPi;
    return {-u[1] * d, u[0] * d};
  }
  const double c = u[2];
  const double us = std::hypot(u[0], u[1]);
  if (us < 1e-7) {
    // poles: differentiate the degree-0 extension directly; the azimuth
    // parametrization degenerates there
    const double h = 1e-5;
    Vec g(3, 0.0);
    for (int i = 0; i < 3; ++i) {
      auto at = [&](double t) {
        Vec y(u.begin(), u.end());
        y[i] += t;
        const double nrm = euclidean_norm(y);
        for (auto& v : y) v /= nrm;
        return eval(s, m, y);
      };
      g[i] = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
    }
    // remove any radial residue
    const double rad = dot(g, u);
    for (int i = 0; i < 3; ++i) g[i] -= rad * u[i];
    return g;
  }
  const double lam = std::atan2(u[1], u[0]);
  std::vector<std::vector<double>> p;
  legendre_ladder(m, c, us, p);
  const auto [o, sine] = slot_index(s);
  const double dpdphi = ladder_theta_derivative(p, m, o, c, us);
  double d_phi, d_lam_over_sin;
  if (o == 0) {
    d_phi = dpdphi;
    d_lam_over_sin = 0.0;
  } else {
    const double az = sine ? std::sin(o * lam) : std::cos(o * lam);
    const double daz = sine ? o * std::cos(o * lam) : -o * std::sin(o * lam);
    d_phi = std::sqrt(2.0) * dpdphi * az;
    d_lam_over_sin = std::sqrt(2.0) * p[m][o] * daz / us;
  }
  // phi_hat = (c x/us, c y/us, -us), lam_hat = (-y/us, x/us, 0)
  return {d_phi * c * u[0] / us - d_lam_over_sin * u[1] / us,
          d_phi * c * u[1] / us + d_lam_over_sin * u[0] / us, -d_phi * us};
}

HarmonicCoefficients expand(const std::function<double(std::span<const double>)>& phi,
                            const HarmonicBasis& basis,
                            const metric::SphereQuadrature& q) {
  if (q.dim() != basis.n)
    throw std::invalid_argument("expand: quadrature dimension mismatch");
  HarmonicCoefficients c;
  c.n = basis.n;
  c.max_degree = basis.max_degree;
  c.table.resize(basis.max_degree + 1);
  for (int m = 0; m <= basis.max_degree; ++m)
    c.table[m].assign(basis_dim(basis.n, m), 0.0);

  Vec phi_vals(q.size());
  parallel_for(q.size(), [&](std::size_t i) { phi_vals[i] = phi(q.nodes[i]); });

  for (std::size_t i = 0; i < q.size(); ++i) {
    const double wf = q.weights[i] * phi_vals[i];
    if (basis.n == 2) {
      const double t = std::atan2(q.nodes[i][1], q.nodes[i][0]);
      c.table[0][0] += wf / std::sqrt(2.0 * kPi);
      for (int m = 1; m <= basis.max_degree; ++m) {
        c.table[m][0] += wf * std::cos(m * t) / kSqrtPi;
        c.table[m][1] += wf * std::sin(m * t) / kSqrtPi;
      }
    } else {
      const double cz = q.nodes[i][2];
      const double us = std::hypot(q.nodes[i][0], q.nodes[i][1]);
      const double lam = std::atan2(q.nodes[i][1], q.nodes[i][0]);
      std::vector<std::vector<double>> p;
      legendre_ladder(basis.max_degree, cz, us, p);
      for (int m = 0; m <= basis.max_degree; ++m) {
        c.table[m][0] += wf * p[m][0];
        for (int o = 1; o <= m; ++o) {
          const double base = wf * std::sqrt(2.0) * p[m][o];
          c.table[m][2 * o - 1] += base * std::cos(o * lam);
          c.table[m][2 * o] += base * std::sin(o * lam);
        }
      }
    }
  }
  c.sup_norms.assign(basis.max_degree + 1, 0.0);
  for (int m = 0; m <= basis.max_degree; ++m)
    for (double v : c.table[m])
      c.sup_norms[m] = std::max(c.sup_norms[m], std::abs(v));
  return c;
}

DecayFit decay_fit(const HarmonicCoefficients& c) {
  std::vector<double> lx, ly;
  for (int m = 1; m <= c.max_degree; ++m) {
    if (c.sup_norms[m] > 1e-14) {
      lx.push_back(std::log(double(m)));
      ly.push_back(std::log(c.sup_norms[m]));
    }
  }
  if (lx.size() < 3) return {0.0, true};
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  const double k = lx.size();
  return {(k * sxy - sx * sy) / (k * sxx - sx * sx), false};
}

std::vector<double> reconstruction_errors(
    const std::function<double(std::span<const double>)>& phi,
    const HarmonicBasis& basis, const metric::SphereQuadrature& q,
    const HarmonicCoefficients& c) {
  std::vector<double> errors(c.max_degree + 1, 0.0);
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double target = phi(q.nodes[i]);
    double partial = 0;
    for (int m = 0; m <= c.max_degree; ++m) {
      for (int s = 1; s <= basis_dim(basis.n, m); ++s)
        partial += c.coefficient(s, m) * basis.eval(s, m, q.nodes[i]);
      errors[m] = std::max(errors[m], std::abs(target - partial));
    }
  }
  return errors;
}

kernel::VariableKernel hsm_kernel(const HarmonicBasis& basis, int s, int m,
                                  const metric::AnisotropyProfile& profile) {
  if (profile.dim() != basis.n)
    throw std::invalid_argument("hsm_kernel: profile dimension mismatch");
  if (m < 0 || m > basis.max_degree || s < 1 || s > basis_dim(basis.n, m))
    throw std::out_of_range("hsm_kernel: harmonic index (s=" + std::to_string(s) +
                            ", m=" + std::to_string(m) + ") out of range");
  kernel::VariableKernel k;
  k.name = "H(" + std::to_string(s) + "," + std::to_string(m) + ")";
  k.profile = profile;
  k.smoothness_order = 6;
  const double alpha = profile.homogeneous_dimension;
  k.evaluate = [basis, s, m, profile, alpha](std::span<const double>,
                                             std::span<const double> xi) {
    double r = 0;
    const Vec bar = metric::sphere_projection(xi, profile, &r);
    return basis.eval(s, m, bar) * std::pow(r, -alpha);
  };
  return k;
}

Vec hsm_gradient(const HarmonicBasis& basis, int s, int m,
                 const metric::AnisotropyProfile& profile, std::span<const double> x) {
  if (profile.dim() != basis.n)
    throw std::invalid_argument("hsm_gradient: profile dimension mismatch");
  double r = 0;
  const Vec bar = metric::sphere_projection(x, profile, &r);  // throws at x=0
  const double alpha = profile.homogeneous_dimension;
  const double y = basis.eval(s, m, bar);
  const Vec g = basis.gradient(s, m, bar);
  double a_form = 0, weighted = 0;
  for (int j = 0; j < profile.dim(); ++j) {
    a_form += profile.exponents[j] * bar[j] * bar[j];
    weighted += profile.exponents[j] * bar[j] * g[j];
  }
  Vec out(profile.dim());
  for (int i = 0; i < profile.dim(); ++i) {
    const double bracket = g[i] - bar[i] * (weighted + alpha * y) / a_form;
    out[i] = std::pow(r, -alpha - profile.exponents[i]) * bracket;
  }
  return out;
}

void write_coefficients_csv(const HarmonicCoefficients& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "m,s,b_sm\n";
  char buf[40];
  for (int m = 0; m <= c.max_degree; ++m)
    for (std::size_t s = 1; s <= c.table[m].size(); ++s) {
      std::snprintf(buf, sizeof buf, "%.17g", c.table[m][s - 1]);
      out << m << ',' << s << ',' << buf << "\n";
    }
}

}  // namespace aniso::harmonics
