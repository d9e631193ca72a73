#include "aniso/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "aniso/errors.hpp"

namespace aniso::kernel {

namespace {

const double kPi = std::acos(-1.0);
const double kSqrtPi = std::sqrt(kPi);

Vec random_direction(int n, Rng& rng) {
  if (n == 2) {
    std::uniform_real_distribution<double> ang(0.0, 2.0 * kPi);
    const double t = ang(rng);
    return {std::cos(t), std::sin(t)};
  }
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

Vec random_base_point(int n, Rng& rng) {
  std::uniform_real_distribution<double> coord(-2.5, 2.5);
  Vec x(n);
  for (auto& v : x) v = coord(rng);
  return x;
}

// Step for nested 4th-order central differences. 1e-4 is right for first
// derivatives; repeated differencing amplifies roundoff by ~h^-1 per level,
// so deeper orders widen toward the eps^(1/(4+order)) balance point.
double fd_step(int order) {
  if (order <= 1) return 1e-4;
  return std::pow(2.2e-16, 1.0 / (4.0 + order));
}

double mixed_derivative(const std::function<double(std::span<const double>)>& f,
                        Vec point, std::span<const int> beta, double h) {
  int axis = -1;
  for (std::size_t i = 0; i < beta.size(); ++i)
    if (beta[i] > 0) {
      axis = static_cast<int>(i);
      break;
    }
  if (axis < 0) return f(point);
  std::vector<int> rest(beta.begin(), beta.end());
  rest[axis] -= 1;
  auto shifted = [&](double t) {
    Vec y = point;
    y[axis] += t;
    return mixed_derivative(f, std::move(y), rest, h);
  };
  return (-shifted(2 * h) + 8 * shifted(h) - 8 * shifted(-h) + shifted(-2 * h)) /
         (12 * h);
}

std::string describe_point(std::span<const double> v) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  os << ')';
  return os.str();
}

}  // namespace

double check_homogeneity(const VariableKernel& k, int sample_count, double tol) {
  if (sample_count < 100)
    throw std::invalid_argument("check_homogeneity: need at least 100 samples");
  Rng rng(1234);
  std::uniform_real_distribution<double> mu_dist(0.1, 10.0);
  const double alpha = k.profile.homogeneous_dimension;
  double worst = 0;
  for (int t = 0; t < sample_count; ++t) {
    const Vec x = random_base_point(k.dim(), rng);
    const Vec xi = random_direction(k.dim(), rng);
    const double mu = mu_dist(rng);
    const Vec scaled = metric::dilate(mu, xi, k.profile);
    const double base = k(x, xi);
    const double far = k(x, scaled);
    if (!std::isfinite(base) || !std::isfinite(far))
      throw EvaluationError("kernel " + k.name + " non-finite at x=" +
                            describe_point(x) + " xi=" + describe_point(xi) +
                            " mu=" + std::to_string(mu));
    const double resid =
        std::abs(far - std::pow(mu, -alpha) * base) / (1.0 + std::abs(base));
    worst = std::max(worst, resid);
    if (worst > std::max(1e4 * tol, 1e-2) && t > sample_count / 4) break;
  }
  return worst;
}

CancellationResult check_cancellation(const VariableKernel& k, std::span<const double> x,
                                      const metric::SphereQuadrature& q) {
  if (q.dim() != k.dim())
    throw std::invalid_argument("check_cancellation: quadrature dimension mismatch");
  double signed_sum = 0, abs_sum = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double v = k(x, q.nodes[i]);
    if (!std::isfinite(v))
      throw EvaluationError("kernel " + k.name + " non-finite on the unit sphere at " +
                            describe_point(q.nodes[i]));
    signed_sum += q.weights[i] * v;
    abs_sum += q.weights[i] * std::abs(v);
  }
  return {std::abs(signed_sum), abs_sum};
}

std::map<std::vector<int>, double> check_derivative_bounds(const VariableKernel& k,
                                                           int max_order,
                                                           int sample_count) {
  if (max_order > k.smoothness_order)
    throw std::invalid_argument("check_derivative_bounds: order exceeds the kernel's " +
                                std::string("declared smoothness"));
  const int n = k.dim();
  std::vector<std::vector<int>> betas;
  // all multiindices with |beta| <= max_order, graded order
  {
    std::vector<int> beta(n, 0);
    std::function<void(int, int)> rec = [&](int axis, int remaining) {
      if (axis == n - 1) {
        beta[axis] = remaining;
        betas.push_back(beta);
        beta[axis] = 0;
        return;
      }
      for (int v = remaining; v >= 0; --v) {
        beta[axis] = v;
        rec(axis + 1, remaining - v);
      }
      beta[axis] = 0;
    };
    for (int order = 0; order <= max_order; ++order) rec(0, order);
  }

  const auto quad = metric::sphere_quadrature(n, n == 2 ? 96 : 12);
  std::vector<Vec> bases;
  if (k.x_dependent) {
    Rng rng(987);
    const int draws = std::max(8, sample_count);
    for (int i = 0; i < draws; ++i) bases.push_back(random_base_point(n, rng));
  } else {
    bases.push_back(Vec(n, 0.0));
  }

  std::map<std::vector<int>, double> sups;
  for (const auto& beta : betas) {
    const int order = std::accumulate(beta.begin(), beta.end(), 0);
    const double h = fd_step(order);
    std::vector<double> node_sup(quad.size(), 0.0);
    parallel_for(quad.size(), [&](std::size_t i) {
      double s = 0;
      for (const auto& x : bases) {
        auto slice = [&k, &x](std::span<const double> xi) { return k(x, xi); };
        const double d = mixed_derivative(slice, quad.nodes[i], beta, h);
        s = std::isfinite(d) ? std::max(s, std::abs(d))
                             : std::numeric_limits<double>::infinity();
      }
      node_sup[i] = s;
    });
    sups[beta] = *std::max_element(node_sup.begin(), node_sup.end());
  }
  return sups;
}

KernelValidationReport validate(const VariableKernel& k, const ValidationConfig& cfg) {
  KernelValidationReport rep;
  rep.homogeneity_max_residual = check_homogeneity(k, cfg.sample_count, cfg.homogeneity_tol);

  const int res = cfg.quadrature_resolution > 0 ? cfg.quadrature_resolution
                                                : (k.dim() == 2 ? 256 : 24);
  const auto quad = metric::sphere_quadrature(k.dim(), res);
  Rng rng(cfg.seed);
  const int x_draws = k.x_dependent ? 8 : 1;
  double worst_resid = 0, abs_mean = 0;
  for (int i = 0; i < x_draws; ++i) {
    const Vec x = k.x_dependent ? random_base_point(k.dim(), rng) : Vec(k.dim(), 0.0);
    const auto res_i = check_cancellation(k, x, quad);
    worst_resid = std::max(worst_resid, res_i.mean_residual);
    abs_mean += res_i.abs_integral / x_draws;
  }
  rep.cancellation_residual = worst_resid;
  rep.mean_absolute_integral = abs_mean;

  rep.derivative_sup_estimates =
      check_derivative_bounds(k, std::min(cfg.max_order, k.smoothness_order),
                              std::min(cfg.sample_count, 100));

  bool derivatives_ok = true;
  for (const auto& [beta, sup] : rep.derivative_sup_estimates)
    if (!std::isfinite(sup)) derivatives_ok = false;
  rep.pass = rep.homogeneity_max_residual <= cfg.homogeneity_tol &&
             rep.cancellation_residual <= cfg.cancellation_tol &&
             std::isfinite(rep.mean_absolute_integral) && derivatives_ok;
  return rep;
}

VariableKernel builtin(const std::string& name) {
  VariableKernel k;
  k.name = name;
  k.smoothness_order = 6;
  if (name == "CZ2") {
    k.profile = metric::AnisotropyProfile::make({1.0, 1.0});
    k.evaluate = [](std::span<const double>, std::span<const double> xi) {
      const double r2 = xi[0] * xi[0] + xi[1] * xi[1];
      return (xi[0] * xi[0] - xi[1] * xi[1]) / (kSqrtPi * r2 * r2);
    };
    return k;
  }
  if (name == "MIX12") {
    k.profile = metric::AnisotropyProfile::make({1.0, 2.0});
    const auto p = k.profile;
    k.evaluate = [p](std::span<const double>, std::span<const double> xi) {
      const double r = metric::rho(xi, p);
      return xi[0] * xi[1] / std::pow(r, 6.0);
    };
    return k;
  }
  if (name == "VAR-CZ2") {
    k.profile = metric::AnisotropyProfile::make({1.0, 1.0});
    k.x_dependent = true;
    k.evaluate = [](std::span<const double> x, std::span<const double> xi) {
      const double r2 = xi[0] * xi[0] + xi[1] * xi[1];
      return (2.0 + std::sin(x[0])) * (xi[0] * xi[0] - xi[1] * xi[1]) /
             (kSqrtPi * r2 * r2);
    };
    return k;
  }
  if (name == "RIESZ3") {
    k.profile = metric::AnisotropyProfile::make({1.0, 1.0, 1.0});
    k.evaluate = [](std::span<const double>, std::span<const double> xi) {
      const double r = euclidean_norm(xi);
      return xi[0] * xi[1] / std::pow(r, 5.0);
    };
    return k;
  }
  throw UnknownKernel("unknown built-in kernel '" + name + "'");
}

VariableKernel control(const std::string& name) {
  VariableKernel k;
  k.name = name;
  k.smoothness_order = 6;
  if (name == "NONHOM") {
    k.profile = metric::AnisotropyProfile::make({1.0, 1.0});
    k.evaluate = [](std::span<const double>, std::span<const double> xi) {
      return 1.0 / (1.0 + xi[0] * xi[0] + xi[1] * xi[1]);
    };
    return k;
  }
  if (name == "NOCANC") {
    k.profile = metric::AnisotropyProfile::make({1.0, 2.0});
    const auto p = k.profile;
    k.evaluate = [p](std::span<const double>, std::span<const double> xi) {
      return std::pow(metric::rho(xi, p), -3.0);
    };
    return k;
  }
  if (name == "SMOOTH2") {
    // restriction to the circle is sin(t)/(1.25 + cos(t)); its harmonic
    // coefficients decay like 2^-m, slow enough to trace reconstruction error
    k.profile = metric::AnisotropyProfile::make({1.0, 1.0});
    k.evaluate = [](std::span<const double>, std::span<const double> xi) {
      const double r = euclidean_norm(xi);
      const double c = xi[0] / r, s = xi[1] / r;
      return s / ((1.25 + c) * r * r);
    };
    return k;
  }
  throw UnknownKernel("unknown control kernel '" + name + "'");
}

const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names = {"CZ2", "MIX12", "VAR-CZ2", "RIESZ3"};
  return names;
}

const std::vector<std::string>& control_names() {
  static const std::vector<std::string> names = {"NONHOM", "NOCANC", "SMOOTH2"};
  return names;
}

}  // namespace aniso::kernel
