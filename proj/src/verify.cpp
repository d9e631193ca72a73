#include "aniso/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "aniso/errors.hpp"
#include "aniso/gridfn.hpp"
#include "aniso/harmonics.hpp"
#include "aniso/kernel.hpp"
#include "aniso/metric.hpp"
#include "aniso/operators.hpp"
#include "aniso/spaces.hpp"
#include "json.hpp"

namespace aniso::verify {

namespace {

using gridfn::GridFunction;
using nlohmann::json;

// ---------------------------------------------------------------------------
// coverage registry: every module operation the experiments must exercise.
// track() is called from serial orchestration code only.

const std::vector<std::string>& op_catalog() {
  static const std::vector<std::string> ops = {
      "metric.rho",
      "metric.dilate",
      "metric.ellipsoid_measure",
      "metric.ellipsoid_contains",
      "metric.sphere_quadrature",
      "kernel.builtin",
      "kernel.check_homogeneity",
      "kernel.check_cancellation",
      "kernel.check_derivative_bounds",
      "harmonics.basis_dim",
      "harmonics.eval_harmonic",
      "harmonics.expand",
      "harmonics.decay_fit",
      "harmonics.hsm_kernel",
      "harmonics.hsm_gradient",
      "gridfn.sample",
      "gridfn.integrate",
      "gridfn.lp_norm",
      "gridfn.write_csv",
      "gridfn.read_csv",
      "operators.truncated_transform",
      "operators.commutator",
      "operators.constant_transform",
      "operators.series_transform",
      "operators.hormander_pointwise",
      "operators.hormander_integral",
      "spaces.maximal",
      "spaces.sharp",
      "spaces.m_s",
      "spaces.morrey_norm",
      "spaces.check_weight",
      "spaces.bmo_modulus",
      "spaces.john_nirenberg_ratio",
      "spaces.nested_average_drift",
      "verify.run",
      "verify.report_to_csv",
  };
  return ops;
}

std::set<std::string>& invoked_ops() {
  static std::set<std::string> ops;
  return ops;
}

void track(const char* op) { invoked_ops().insert(op); }

// ---------------------------------------------------------------------------
// shared fixtures

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

struct Ctx {
  ExperimentConfig cfg;
  metric::AnisotropyProfile p;
  gridfn::Grid grid;
  double hmax = 0;
  kernel::VariableKernel k;
  spaces::Weight w;
  std::vector<double> radii;
};

operators::TruncationPolicy policy(double epsilon) {
  operators::TruncationPolicy pol;
  pol.epsilon = epsilon;
  return pol;
}

kernel::VariableKernel resolve_kernel(const std::string& name) {
  try {
    return kernel::builtin(name);
  } catch (const UnknownKernel&) {
    return kernel::control(name);
  }
}

Ctx make_ctx(const ExperimentConfig& cfg) {
  Ctx ctx{cfg, metric::AnisotropyProfile::make(cfg.exponents), {}, 0,
          resolve_kernel(cfg.kernel), spaces::weight_from_spec(cfg.weight), {}};
  const int n = ctx.p.dim();
  if (static_cast<int>(cfg.grid_axes.size()) != n)
    throw std::invalid_argument("grid axes and profile dimensions disagree");
  if (!(cfg.half_width > 0)) throw std::invalid_argument("half_width must be positive");
  if (!(cfg.p > 1)) throw std::invalid_argument("p must lie in (1, inf)");
  if (cfg.epsilon_ladder.empty())
    throw std::invalid_argument("epsilon ladder must not be empty");
  for (double e : cfg.epsilon_ladder)
    if (!(e > 0)) throw std::invalid_argument("epsilon ladder entries must be positive");
  if (cfg.expansion_degree < 2)
    throw std::invalid_argument("expansion degree must be at least 2");
  if (cfg.inequality_axes.size() != 2 || cfg.inequality_axes[0] < 5 ||
      cfg.inequality_axes[1] <= cfg.inequality_axes[0])
    throw std::invalid_argument("inequality_axes must be two increasing resolutions");
  Vec lo(n, -cfg.half_width), up(n, cfg.half_width);
  ctx.grid = gridfn::Grid::make(cfg.grid_axes, lo, up);
  for (int i = 0; i < n; ++i) ctx.hmax = std::max(ctx.hmax, ctx.grid.spacing(i));
  ctx.radii = cfg.radii.empty() ? spaces::default_radii(ctx.grid, ctx.p) : cfg.radii;
  return ctx;
}

CheckRecord& add_check(std::vector<CheckRecord>& out, std::string id, std::string anchor) {
  out.push_back({});
  out.back().id = std::move(id);
  out.back().anchor = std::move(anchor);
  return out.back();
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// the 12-function study suite: three anisotropic Gaussian scales, a
// harmonic-modulated bump, a sharp indicator and a two-bump sum, each in a
// centered and an offset variant
struct SuiteEntry {
  std::string name;
  std::function<double(std::span<const double>)> fn;
};

std::vector<SuiteEntry> function_suite(const metric::AnisotropyProfile& p, double half) {
  const int n = p.dim();
  auto bump = [n, ex = p.exponents](Vec c, double s) {
    return [n, ex, c = std::move(c), s](std::span<const double> y) {
      double q = 0;
      for (int i = 0; i < n; ++i) {
        const double d = (y[i] - c[i]) / std::pow(s, ex[i]);
        q += d * d;
      }
      return std::exp(-q);
    };
  };

  std::vector<SuiteEntry> out;
  Vec centers[2];
  centers[0] = Vec(n, 0.0);
  centers[1] = Vec(n, 0.0);
  centers[1][0] = 0.35 * half;
  centers[1][1] = -0.2 * half;
  if (n > 2) centers[1][2] = 0.15 * half;
  const char* tags[2] = {"centered", "offset"};

  for (int v = 0; v < 2; ++v) {
    const Vec& c = centers[v];
    const std::string tag = tags[v];
    for (double s : {0.15, 0.3, 0.5})
      out.push_back({"bump-" + std::to_string(s).substr(0, 4) + "-" + tag,
                     bump(c, s * half)});
    out.push_back({"modulated-" + tag, [c, base = bump(c, 0.35 * half)](
                                           std::span<const double> y) {
                     const double u = y[0] - c[0], v2 = y[1] - c[1];
                     return (u * u - v2 * v2) * base(y);
                   }});
    const auto e = metric::Ellipsoid::make(c, 0.4 * half, p);
    out.push_back({"indicator-" + tag, [e](std::span<const double> y) {
                     return metric::ellipsoid_contains(e, y) ? 1.0 : 0.0;
                   }});
    Vec d(n, 0.0);
    d[0] = 0.3 * half;
    d[1] = 0.25 * half;
    Vec c1 = c, c2 = c;
    for (int i = 0; i < n; ++i) {
      c1[i] += d[i];
      c2[i] -= d[i];
    }
    out.push_back({"two-bump-" + tag,
                   [b1 = bump(c1, 0.22 * half), b2 = bump(c2, 0.22 * half)](
                       std::span<const double> y) { return b1(y) + b2(y); }});
  }
  return out;
}

// a-suite for the commutator studies: spans the BMO/VMO boundary. log rho is
// clamped half a cell above the singularity so grid sampling stays finite.
std::vector<std::pair<std::string, GridFunction>> modulator_suite(
    const gridfn::Grid& g, const metric::AnisotropyProfile& p, double hmax) {
  std::vector<std::pair<std::string, GridFunction>> out;
  out.emplace_back("const", gridfn::sample(g, [](std::span<const double>) { return 1.4; }));
  out.emplace_back("sin-x1",
                   gridfn::sample(g, [](std::span<const double> y) { return std::sin(y[0]); }));
  const double cap = 0.5 * (g.upper[0] - g.lower[0]) / 2;
  out.emplace_back("ramp", gridfn::sample(g, [cap](std::span<const double> y) {
                     return std::clamp(y[0], -cap, cap);
                   }));
  out.emplace_back("log-rho", gridfn::sample(g, [&p, floor = hmax / 2](std::span<const double> y) {
                     return std::log(std::max(metric::rho(y, p), floor));
                   }));
  return out;
}

double l2_masked(const GridFunction& u, const std::vector<std::uint8_t>& mask) {
  GridFunction sq{u.grid, Vec(u.grid.size(), 0.0)};
  for (std::size_t i = 0; i < sq.values.size(); ++i)
    if (mask[i]) sq[i] = u[i] * u[i];
  return std::sqrt(gridfn::integrate(sq));
}

double rel_l2_masked(const GridFunction& a, const GridFunction& b,
                     const std::vector<std::uint8_t>& mask) {
  GridFunction diff{a.grid, Vec(a.grid.size(), 0.0)};
  for (std::size_t i = 0; i < diff.values.size(); ++i) diff[i] = a[i] - b[i];
  const double ref = l2_masked(b, mask);
  return ref > 0 ? l2_masked(diff, mask) / ref : l2_masked(diff, mask);
}

double morrey_value(const GridFunction& f, const Ctx& ctx, int stride) {
  const auto centers = spaces::default_centers(f.grid, stride);
  const auto radii = f.grid == ctx.grid ? ctx.radii : spaces::default_radii(f.grid, ctx.p);
  return spaces::morrey_norm(f, ctx.p, ctx.cfg.p, ctx.w, centers, radii).value;
}

Vec spread(std::span<const double> v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return {*lo, *hi};
}

// ---------------------------------------------------------------------------
// experiments

void exp_metric_axioms(Ctx& ctx, std::vector<CheckRecord>& out) {
  const auto& p = ctx.p;
  const int n = p.dim();
  Rng rng(ctx.cfg.seed * 2654435761ull + 11);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> logmu(std::log(0.1), std::log(10.0));
  auto draw = [&](Vec& x) {
    do {
      for (double& v : x) v = unit(rng);
    } while (euclidean_norm(x) < 1e-8);
  };

  track("metric.rho");
  track("metric.dilate");
  {
    Timer t;
    double worst_hom = 0, worst_sphere = 0;
    Vec x(n);
    for (int i = 0; i < 10000; ++i) {
      draw(x);
      const double r = metric::rho(x, p);
      const double mu = std::exp(logmu(rng));
      const double rd = metric::rho(metric::dilate(mu, x, p), p);
      worst_hom = std::max(worst_hom, std::abs(rd - mu * r) / (mu * r));
      worst_sphere = std::max(worst_sphere, std::abs(metric::metric_form(x, r, p) - 1));
    }
    auto& c = add_check(out, "metric/homogeneity", "rho(mu o x) = mu rho(x)");
    c.constants = {worst_hom, worst_sphere};
    c.pass = worst_hom <= 1e-10 && worst_sphere <= 1e-10;
    c.runtime_seconds = t.seconds();
  }
  {
    Timer t;
    long violations = 0;
    double worst = 0;
    Vec x(n), y(n), s(n);
    for (int i = 0; i < 1000; ++i) {
      draw(x);
      draw(y);
      for (int j = 0; j < n; ++j) s[j] = x[j] + y[j];
      const double ratio = metric::rho(s, p) / (metric::rho(x, p) + metric::rho(y, p));
      worst = std::max(worst, ratio);
      if (ratio > 1 + 1e-12) ++violations;
    }
    auto& c = add_check(out, "metric/triangle", "rho(x + y) <= rho(x) + rho(y)");
    c.constants = {worst, double(violations)};
    c.pass = violations == 0;
    c.runtime_seconds = t.seconds();
  }
  {
    Timer t;
    track("metric.ellipsoid_measure");
    track("metric.ellipsoid_contains");
    const auto e = metric::Ellipsoid::make(Vec(n, 0.0), 0.9, p);
    Vec rad(n);
    double boxvol = 1;
    for (int i = 0; i < n; ++i) {
      rad[i] = std::pow(0.9, p.exponents[i]);
      boxvol *= 2 * rad[i];
    }
    long inside = 0;
    const int samples = 20000;
    Vec y(n);
    for (int i = 0; i < samples; ++i) {
      for (int j = 0; j < n; ++j) y[j] = rad[j] * unit(rng);
      if (metric::ellipsoid_contains(e, y)) ++inside;
    }
    const double mc = boxvol * double(inside) / samples;
    const double exact = metric::ellipsoid_measure(e);
    auto& c = add_check(out, "metric/measure", "|E_r| = V_n r^alpha");
    c.constants = {exact, mc};
    c.ratios = {mc / exact};
    c.pass = std::abs(mc - exact) <= 0.05 * exact;
    c.runtime_seconds = t.seconds();
  }
}

void exp_kernel_axioms(Ctx& ctx, std::vector<CheckRecord>& out) {
  track("kernel.builtin");
  track("kernel.check_homogeneity");
  track("kernel.check_cancellation");
  track("kernel.check_derivative_bounds");
  auto study = [&](const kernel::VariableKernel& k, bool expect_valid,
                   const char* reason) {
    Timer t;
    const int n = k.dim();
    const auto q = metric::sphere_quadrature(n, n == 2 ? 256 : 24);
    double hom = 0;
    try {
      hom = kernel::check_homogeneity(k, 1500, 1e-10);
    } catch (const EvaluationError&) {
      hom = std::numeric_limits<double>::infinity();
    }
    double cancel = 0, absint = 0;
    for (const Vec& x : {Vec(n, 0.0), Vec(n, 0.4)}) {
      const auto res = kernel::check_cancellation(k, x, q);
      cancel = std::max(cancel, res.mean_residual);
      absint = std::max(absint, res.abs_integral);
      if (!k.x_dependent) break;
    }
    double dmax = 0;
    const auto sups = kernel::check_derivative_bounds(k, 4, 40);
    for (const auto& [beta, sup] : sups) dmax = std::max(dmax, sup);
    const bool valid =
        hom <= 1e-10 && cancel <= 1e-10 && absint > 0 && std::isfinite(dmax);
    auto& c = add_check(out, std::string("kernel/") + k.name,
                        expect_valid ? "admissible kernel axioms"
                                     : std::string("rejected: ") + reason);
    c.constants = {hom, cancel, absint, dmax};
    c.pass = expect_valid ? valid : !valid;
    if (!c.pass) c.detail = "kernel " + k.name + " did not meet the expectation";
    c.runtime_seconds = t.seconds();
  };

  for (const auto& name : kernel::builtin_names()) study(kernel::builtin(name), true, "");
  study(kernel::control("NONHOM"), false, "breaks homogeneity");
  study(kernel::control("NOCANC"), false, "breaks cancellation");
  study(kernel::control("SMOOTH2"), true, "");

  // the harmonic generators themselves are admissible kernels
  track("harmonics.hsm_kernel");
  {
    Timer t;
    const auto basis = harmonics::HarmonicBasis::make(ctx.p.dim(), 4);
    const auto h = harmonics::hsm_kernel(basis, 1, 2, ctx.p);
    const double hom = kernel::check_homogeneity(h, 1000, 1e-10);
    const auto res = kernel::check_cancellation(
        h, Vec(ctx.p.dim(), 0.0),
        metric::sphere_quadrature(ctx.p.dim(), ctx.p.dim() == 2 ? 256 : 24));
    auto& c = add_check(out, "kernel/harmonic-generator",
                        "degree-m generators satisfy the kernel axioms");
    c.constants = {hom, res.mean_residual, res.abs_integral};
    c.pass = hom <= 1e-10 && res.mean_residual <= 1e-10 && res.abs_integral > 0;
    c.runtime_seconds = t.seconds();
  }
}

void exp_harmonic_decay(Ctx& ctx, std::vector<CheckRecord>& out) {
  const int n = ctx.p.dim();
  const auto basis = harmonics::HarmonicBasis::make(n, 24);
  track("metric.sphere_quadrature");
  const auto q = metric::sphere_quadrature(n, n == 2 ? 512 : 52);

  track("harmonics.basis_dim");
  track("harmonics.eval_harmonic");
  {
    Timer t;
    // Gram matrix of all degrees <= 8 under the quadrature
    struct Slot {
      int s, m;
    };
    std::vector<Slot> slots;
    for (int m = 0; m <= 8; ++m)
      for (int s = 1; s <= harmonics::basis_dim(n, m); ++s) slots.push_back({s, m});
    double worst = 0;
    for (std::size_t a = 0; a < slots.size(); ++a)
      for (std::size_t b = a; b < slots.size(); ++b) {
        const double g = q.integrate([&](const Vec& u) {
          return basis.eval(slots[a].s, slots[a].m, u) * basis.eval(slots[b].s, slots[b].m, u);
        });
        worst = std::max(worst, std::abs(g - (a == b ? 1.0 : 0.0)));
      }
    auto& c = add_check(out, "harmonics/orthonormal-gram",
                        "quadrature Gram matrix is the identity");
    c.constants = {worst};
    c.pass = worst <= 1e-8;
    c.runtime_seconds = t.seconds();
  }
  {
    Timer t;
    track("harmonics.expand");
    track("harmonics.decay_fit");
    const auto coeff = harmonics::expand(
        [](std::span<const double> u) { return std::abs(u[0]); }, basis, q);
    const auto fit = harmonics::decay_fit(coeff);
    auto& c = add_check(out, "harmonics/decay-slope",
                        "kink on the sphere decays at least quadratically");
    c.constants = {fit.slope};
    c.pass = !fit.degenerate && fit.slope <= -2.0;
    c.runtime_seconds = t.seconds();
  }
  {
    Timer t;
    // analytic profile: reconstruction error collapses within a few degrees
    const auto phi = [](std::span<const double> u) { return std::exp(u[0]); };
    const auto coeff = harmonics::expand(phi, basis, q);
    const auto errs = harmonics::reconstruction_errors(phi, basis, q, coeff);
    auto& c = add_check(out, "harmonics/reconstruction",
                        "analytic profiles converge superalgebraically");
    c.constants = {errs.front(), errs.back()};
    c.pass = errs.back() <= 1e-8 && errs.back() < errs.front();
    c.runtime_seconds = t.seconds();
  }
  {
    Timer t;
    track("harmonics.hsm_gradient");
    Rng rng(ctx.cfg.seed * 2654435761ull + 23);
    std::normal_distribution<double> gauss;
    double worst = 0;
    Vec x(n), xp(n), xm(n);
    for (int trial = 0; trial < 200; ++trial) {
      for (double& v : x) v = gauss(rng);
      const double r = metric::rho(x, ctx.p);
      if (r < 0.3) continue;
      const int m = 1 + trial % 4;
      const auto h = harmonics::hsm_kernel(basis, 1, m, ctx.p);
      const Vec grad = harmonics::hsm_gradient(basis, 1, m, ctx.p, x);
      const Vec origin(n, 0.0);
      double scale = euclidean_norm(grad);
      for (int i = 0; i < n; ++i) {
        xp = x;
        xm = x;
        const double step = 1e-6 * std::max(1.0, std::abs(x[i]));
        xp[i] += step;
        xm[i] -= step;
        const double fd = (h(origin, xp) - h(origin, xm)) / (2 * step);
        scale = std::max(scale, 1e-12);
        worst = std::max(worst, std::abs(fd - grad[i]) / scale);
      }
    }
    auto& c = add_check(out, "harmonics/gradient-consistency",
                        "closed-form generator gradients match finite differences");
    c.constants = {worst};
    c.pass = worst <= 1e-6;
    c.runtime_seconds = t.seconds();
  }
}

void exp_hormander(Ctx& ctx, std::vector<CheckRecord>& out) {
  const int n = ctx.p.dim();
  const auto basis = harmonics::HarmonicBasis::make(n, 8);
  track("operators.hormander_pointwise");
  {
    Timer t;
    Vec center(n, 0.0);
    center[0] = 0.3;
    center[1] = -0.2;
    Vec sups;
    for (int m : {1, 2, 4, 8}) {
      const auto e = metric::Ellipsoid::make(center, 1.0, ctx.p);
      sups.push_back(operators::hormander_pointwise(basis, 1, m, ctx.p, e, 2000));
    }
    const auto e1 = metric::Ellipsoid::make(center, 1.0, ctx.p);
    const double v2000 = sups[1];
    const double v4000 = operators::hormander_pointwise(basis, 1, 2, ctx.p, e1, 4000);
    const double vhalf = operators::hormander_pointwise(
        basis, 1, 2, ctx.p, metric::Ellipsoid::make(center, 0.5, ctx.p), 2000);
    const double vtwo = operators::hormander_pointwise(
        basis, 1, 2, ctx.p, metric::Ellipsoid::make(center, 2.0, ctx.p), 2000);
    const Vec mm = spread(sups);
    bool pass = mm[0] > 0 && mm[1] < 100 && mm[1] <= 10 * mm[0];
    pass = pass && v4000 >= v2000 && v4000 <= 1.2 * v2000;
    pass = pass && std::abs(vhalf - v2000) <= 1e-9 * v2000 &&
           std::abs(vtwo - v2000) <= 1e-9 * v2000;
    auto& c = add_check(out, "hormander/pointwise-stability",
                        "normalized smoothness sup is sample- and scale-stable");
    c.constants = sups;
    c.ratios = {v4000 / v2000, vhalf / v2000, vtwo / v2000};
    c.pass = pass;
    c.runtime_seconds = t.seconds();
  }
  track("operators.hormander_integral");
  {
    Timer t;
    Vec values;
    for (double tscale : {0.25, 1.0, 4.0}) {
      for (double angle : {0.3, 1.2, 2.5}) {
        Vec u(n, 0.0);
        u[0] = std::cos(angle);
        u[1] = std::sin(angle);
        const Vec x = metric::dilate(tscale, u, ctx.p);
        values.push_back(operators::hormander_integral(basis, 1, 2, ctx.p, x, 64 * tscale));
      }
    }
    const Vec mm = spread(values);
    Vec u0(n, 0.0);
    u0[0] = 0.6;
    u0[1] = -0.8;
    const Vec x0 = metric::dilate(1.0, u0, ctx.p);
    const double i256 = operators::hormander_integral(basis, 1, 2, ctx.p, x0, 256.0);
    const double i512 = operators::hormander_integral(basis, 1, 2, ctx.p, x0, 512.0);
    const double tail_change = std::abs(i512 - i256) / i256;
    auto& c = add_check(out, "hormander/integral-plateau",
                        "shell integral is dilation-stable with a vanishing tail");
    c.constants = {mm[0], mm[1], tail_change};
    c.ratios = {mm[1] - mm[0], 0.25 * mm[0]};
    c.pass = mm[0] > 0 && (mm[1] - mm[0]) <= 0.25 * mm[0] && i512 >= i256 &&
             tail_change <= 0.01;
    c.runtime_seconds = t.seconds();
  }
}

void exp_operator_bound(Ctx& ctx, std::vector<CheckRecord>& out) {
  const auto suite = function_suite(ctx.p, ctx.cfg.half_width);
  track("gridfn.sample");
  track("gridfn.lp_norm");
  track("operators.truncated_transform");
  track("spaces.morrey_norm");

  std::vector<GridFunction> fs;
  for (const auto& entry : suite) fs.push_back(gridfn::sample(ctx.grid, entry.fn));

  std::vector<double> eps;
  for (double mult : ctx.cfg.epsilon_ladder) eps.push_back(mult * ctx.hmax);

  {
    Timer t;
    Vec spreads;
    double suite_max = 0;
    bool finite = true;
    std::vector<std::vector<std::uint8_t>> masks;
    std::vector<std::vector<GridFunction>> outputs(fs.size());
    for (std::size_t fi = 0; fi < fs.size(); ++fi) {
      const double nf = morrey_value(fs[fi], ctx, 6);
      Vec ratios;
      for (double e : eps) {
        const auto res = operators::truncated_transform(ctx.k, fs[fi], policy(e));
        if (fi < 3) {
          if (masks.size() < eps.size()) masks.push_back(res.evaluated);
          outputs[fi].push_back(res.output);
        }
        const double nk = morrey_value(res.output, ctx, 6);
        ratios.push_back(nk / nf);
        finite = finite && std::isfinite(nk) && nk > 0 && nf > 0;
      }
      const Vec mm = spread(ratios);
      spreads.push_back(mm[1] / mm[0]);
      suite_max = std::max(suite_max, mm[1]);
    }
    const Vec sm = spread(spreads);
    auto& c = add_check(out, "operator/morrey-ratio-stability",
                        "weighted-norm ratios are finite and cutoff-stable");
    c.constants = {suite_max};
    c.ratios = spreads;
    c.pass = finite && sm[1] <= 2.0;
    if (!c.pass) c.detail = "largest cutoff spread " + std::to_string(sm[1]);
    c.runtime_seconds = t.seconds();

    // refinement is Cauchy: successive cutoff halvings shrink the update
    Timer t2;
    track("gridfn.integrate");
    bool cauchy = true;
    Vec deltas;
    for (std::size_t fi = 0; fi < outputs.size() && fi < 3; ++fi) {
      const auto& mask = masks.back();  // largest epsilon mask is the smallest
      Vec d;
      for (std::size_t k = 0; k + 1 < outputs[fi].size(); ++k)
        d.push_back(rel_l2_masked(outputs[fi][k], outputs[fi][k + 1], mask));
      // ladder is increasing, so walk updates from coarse to fine
      for (std::size_t k = 0; k + 1 < d.size(); ++k) cauchy = cauchy && d[k] <= 1.1 * d[k + 1];
      deltas.insert(deltas.end(), d.begin(), d.end());
    }
    auto& c2 = add_check(out, "operator/cutoff-refinement",
                         "cutoff refinement updates shrink monotonically");
    c2.ratios = deltas;
    c2.pass = cauchy;
    c2.runtime_seconds = t2.seconds();
  }
  {
    Timer t;
    track("gridfn.write_csv");
    track("gridfn.read_csv");
    const auto res = operators::truncated_transform(ctx.k, fs[0], policy(eps[0]));
    const auto path = (std::filesystem::temp_directory_path() /
                       ("aniso-sio-field-" + std::to_string(ctx.cfg.seed) + ".csv"))
                          .string();
    gridfn::write_csv(res.output, path);
    const auto back = gridfn::read_csv(path);
    std::filesystem::remove(path);
    bool same = back.grid == res.output.grid;
    for (std::size_t i = 0; same && i < back.values.size(); ++i)
      same = back[i] == res.output[i];
    auto& c = add_check(out, "operator/field-roundtrip",
                        "transform fields survive the CSV round trip bit-exactly");
    c.pass = same;
    c.runtime_seconds = t.seconds();
  }
}

void exp_commutator_bound(Ctx& ctx, std::vector<CheckRecord>& out) {
  Timer t;
  track("operators.commutator");
  track("spaces.bmo_modulus");
  const auto suite = function_suite(ctx.p, ctx.cfg.half_width);
  const std::size_t picks[3] = {1, 6, 11};
  std::vector<GridFunction> fs;
  for (std::size_t i : picks) fs.push_back(gridfn::sample(ctx.grid, suite[i].fn));
  const auto mods = modulator_suite(ctx.grid, ctx.p, ctx.hmax);
  const double eps = ctx.cfg.epsilon_ladder.front() * ctx.hmax;
  const auto centers = spaces::default_centers(ctx.grid, 8);

  Vec bmos, worst_ratios;
  bool pass = true;
  std::string detail;
  for (const auto& [name, a] : mods) {
    const double bmo = spaces::bmo_modulus(a, ctx.p, ctx.radii, centers).bmo_norm;
    bmos.push_back(bmo);
    double worst = 0;
    for (const auto& f : fs) {
      const auto res = operators::commutator(a, ctx.k, f, policy(eps));
      if (name == "const") {
        // the difference form cancels exactly for constant modulators
        double sup = 0;
        for (double v : res.output.values) sup = std::max(sup, std::abs(v));
        if (sup > 1e-12) {
          pass = false;
          detail = "constant modulator produced " + std::to_string(sup);
        }
        continue;
      }
      const double ratio =
          morrey_value(res.output, ctx, 6) / (bmo * morrey_value(f, ctx, 6));
      worst = std::max(worst, ratio);
      pass = pass && std::isfinite(ratio) && ratio > 0;
    }
    worst_ratios.push_back(worst);
  }
  auto& c = add_check(out, "commutator/morrey-ratio",
                      "commutator norms scale with the mean oscillation");
  c.constants = bmos;
  c.ratios = worst_ratios;
  c.pass = pass;
  c.detail = detail;
  c.runtime_seconds = t.seconds();
}

void exp_vmo_localization(Ctx& ctx, std::vector<CheckRecord>& out) {
  Timer t;
  const auto suite = function_suite(ctx.p, ctx.cfg.half_width);
  const auto f = gridfn::sample(ctx.grid, suite[1].fn);
  const double eps = ctx.cfg.epsilon_ladder.front() * ctx.hmax;
  const auto mods = modulator_suite(ctx.grid, ctx.p, ctx.hmax);
  const auto& vmo_a = mods[1].second;   // sin x1
  const auto& bmo_a = mods[3].second;   // log rho

  auto localized_ratio = [&](const GridFunction& cf, double scale) {
    std::vector<Vec> centers;
    for (const Vec& c : spaces::default_centers(ctx.grid, 2))
      if (metric::rho(c, ctx.p) < scale * 0.99) centers.push_back(c);
    Vec radii;
    for (double r : ctx.radii)
      if (r <= scale * (1 + 1e-12)) radii.push_back(r);
    const double num =
        spaces::morrey_norm(cf, ctx.p, ctx.cfg.p, ctx.w, centers, radii).value;
    const double den =
        spaces::morrey_norm(f, ctx.p, ctx.cfg.p, ctx.w, centers, radii).value;
    return num / den;
  };

  const Vec scales{1.0, 0.5, 0.25};
  Vec rs_vmo, rs_bmo;
  {
    const auto cf = operators::commutator(vmo_a, ctx.k, f, policy(eps));
    const auto cb = operators::commutator(bmo_a, ctx.k, f, policy(eps));
    for (double s : scales) {
      rs_vmo.push_back(localized_ratio(cf.output, s));
      rs_bmo.push_back(localized_ratio(cb.output, s));
    }
  }
  // gamma of the modulator itself over the same scales, the driving quantity
  const auto gamma = spaces::bmo_modulus(vmo_a, ctx.p, {scales.begin(), scales.end()},
                                         spaces::default_centers(ctx.grid, 8));

  auto& c = add_check(out, "vmo/shrinking-ellipsoids",
                      "vanishing oscillation localizes the commutator");
  c.ratios = rs_vmo;
  c.constants = gamma.values;
  c.pass = rs_vmo[1] <= rs_vmo[0] * (1 + 1e-12) && rs_vmo[2] <= rs_vmo[1] * (1 + 1e-12) &&
           rs_vmo[2] < rs_vmo[0];
  if (!c.pass) c.detail = "localized ratios failed to shrink";
  c.runtime_seconds = t.seconds();

  Timer t2;
  auto& c2 = add_check(out, "vmo/log-rho-contrast",
                       "scale-invariant oscillation retains the commutator ratio");
  c2.ratios = rs_bmo;
  c2.constants = {rs_bmo[2] / rs_bmo[0], rs_vmo[2] / rs_vmo[0]};
  c2.pass = rs_bmo[2] / rs_bmo[0] > rs_vmo[2] / rs_vmo[0];
  if (!c2.pass) c2.detail = "expected the scale-invariant modulator to decay slower";
  c2.runtime_seconds = t2.seconds();
}

void exp_series_reconstruction(Ctx& ctx, std::vector<CheckRecord>& out) {
  const int n = ctx.p.dim();
  track("operators.series_transform");
  track("operators.constant_transform");
  const gridfn::Grid g = n == 2 ? gridfn::Grid::make({49, 49}, {-1, -1}, {1, 1})
                                : gridfn::Grid::make({13, 13, 13}, {-1, -1, -1}, {1, 1, 1});
  double hmax = 0;
  for (int i = 0; i < n; ++i) hmax = std::max(hmax, g.spacing(i));
  const auto suite = function_suite(metric::AnisotropyProfile::make(Vec(n, 1.0)), 1.0);
  const auto f = gridfn::sample(g, suite[6].fn);
  const auto pol = policy(4 * hmax);

  auto discrepancies = [&](const kernel::VariableKernel& k, std::vector<int> degrees) {
    const auto ref = operators::truncated_transform(k, f, pol);
    Vec d;
    for (int M : degrees) {
      const auto ser = operators::series_transform(k, f, pol, M);
      d.push_back(rel_l2_masked(ser.output, ref.output, ref.evaluated));
    }
    return d;
  };

  if (n == 2) {
    {
      Timer t;
      const auto d = discrepancies(kernel::builtin("CZ2"), {2, ctx.cfg.expansion_degree});
      auto& c = add_check(out, "series/exact-reproduction",
                          "single-degree kernels are reproduced at machine precision");
      c.constants = d;
      c.pass = d[0] <= 1e-10 && d[1] <= 1e-10;
      c.runtime_seconds = t.seconds();
    }
    {
      Timer t;
      const auto d = discrepancies(kernel::builtin("VAR-CZ2"), {3});
      auto& c = add_check(out, "series/pointwise-reexpansion",
                          "x-dependent kernels re-expand exactly at every point");
      c.constants = d;
      c.pass = d[0] <= 1e-10;
      c.runtime_seconds = t.seconds();
    }
    {
      Timer t;
      const auto d = discrepancies(kernel::control("SMOOTH2"), {2, 4, 8});
      auto& c = add_check(out, "series/convergence",
                          "infinite expansions converge through the degree ladder");
      c.constants = d;
      c.pass = d[0] > 1e-9 && d[1] <= 0.8 * d[0] && d[2] <= 0.8 * d[1];
      c.runtime_seconds = t.seconds();
    }
  } else {
    Timer t;
    const auto d = discrepancies(kernel::builtin("RIESZ3"), {2});
    auto& c = add_check(out, "series/exact-reproduction",
                        "single-degree kernels are reproduced at machine precision");
    c.constants = d;
    c.pass = d[0] <= 1e-10;
    c.runtime_seconds = t.seconds();
  }
  {
    Timer t;
    const auto basis = harmonics::HarmonicBasis::make(n, 4);
    const auto prof = metric::AnisotropyProfile::make(Vec(n, 1.0));
    const auto direct = operators::constant_transform(basis, 1, 2, prof, f, pol);
    const auto named = operators::truncated_transform(
        n == 2 ? kernel::builtin("CZ2") : harmonics::hsm_kernel(basis, 1, 2, prof), f, pol);
    const double d = rel_l2_masked(direct.output, named.output, named.evaluated);
    auto& c = add_check(out, "series/single-harmonic",
                        "constant-kernel path agrees with the named kernel");
    c.constants = {d};
    c.pass = d <= 1e-12;
    c.runtime_seconds = t.seconds();
  }
}

void exp_weights(Ctx& ctx, std::vector<CheckRecord>& out) {
  track("spaces.check_weight");
  const double alpha = ctx.p.homogeneous_dimension;
  const std::vector<Vec> centers{Vec(ctx.p.dim(), 0.0), Vec(ctx.p.dim(), 0.35)};
  const Vec radii{0.01, 0.1, 1.0, 10.0};

  struct Probe {
    const char* id;
    spaces::Weight w;
    double sigma;
    bool expect_pass;
    double expect_constant;  // <= 0 means unchecked
  };
  const Probe probes[] = {
      {"weights/const", spaces::weight_const(), 1.0, true, 1.0 / alpha},
      {"weights/subcritical-power", spaces::weight_power(alpha / 2), 1.0, true, 2.0 / alpha},
      {"weights/log-refined", spaces::weight_power_log(1.0), 1.0, true, -1},
      {"weights/config", ctx.w, 1.0, true, -1},
      {"weights/critical-power", spaces::weight_power(alpha), 1.0, false, -1},
      {"weights/fractional-sigma", spaces::weight_power(alpha / 2), 0.75, true,
       1.0 / (0.75 * alpha - alpha / 2)},
  };
  for (const auto& probe : probes) {
    Timer t;
    const auto res = spaces::check_weight(probe.w, ctx.p, centers, radii, probe.sigma);
    bool ok = res.pass == probe.expect_pass;
    if (probe.expect_constant > 0)
      ok = ok && std::abs(res.integral_constant - probe.expect_constant) <=
                     0.01 * probe.expect_constant;
    auto& c = add_check(out, probe.id,
                        probe.expect_pass ? "doubling and tail-integral bounds hold"
                                          : "critical growth is rejected");
    c.constants = {res.integral_constant};
    c.ratios = {res.lower, res.upper};
    c.pass = ok;
    if (!ok) c.detail = res.note;
    c.runtime_seconds = t.seconds();
  }
}

void exp_spaces_inequalities(Ctx& ctx, std::vector<CheckRecord>& out) {
  const int n = ctx.p.dim();
  // s = p/2 must be a genuine second exponent, so this study fixes p = 3
  const double pexp = 3.0;
  const double lambda = ctx.p.homogeneous_dimension / 2;
  const auto w = spaces::weight_power(lambda);
  const auto suite = function_suite(ctx.p, ctx.cfg.half_width);

  track("spaces.maximal");
  track("spaces.sharp");
  track("spaces.m_s");

  struct GridStats {
    double max_ratio_s1 = 0, max_ratio_s2 = 0, sharp_ratio = 0;
  };
  std::vector<GridStats> stats;
  Timer t_all;
  for (int axes : ctx.cfg.inequality_axes) {
    const auto g = gridfn::Grid::make(std::vector<int>(n, axes), Vec(n, -ctx.cfg.half_width),
                                      Vec(n, ctx.cfg.half_width));
    const auto radii = spaces::default_radii(g, ctx.p);
    const auto centers = spaces::default_centers(g, 4);
    auto morrey = [&](const GridFunction& f) {
      return spaces::morrey_norm(f, ctx.p, pexp, w, centers, radii).value;
    };
    GridStats st;
    for (const auto& entry : suite) {
      const auto f = gridfn::sample(g, entry.fn);
      const double nf = morrey(f);
      const auto mf = spaces::maximal_field(f, ctx.p, radii);
      st.max_ratio_s1 = std::max(st.max_ratio_s1, morrey(mf) / nf);
      // (M |f|^s)^{1/s} through the plain maximal field of |f|^s
      GridFunction fs{g, Vec(g.size())};
      const double s = pexp / 2;
      for (std::size_t i = 0; i < fs.values.size(); ++i)
        fs[i] = std::pow(std::abs(f[i]), s);
      auto ms = spaces::maximal_field(fs, ctx.p, radii);
      for (double& v : ms.values) v = std::pow(v, 1.0 / s);
      st.max_ratio_s2 = std::max(st.max_ratio_s2, morrey(ms) / nf);
      const auto sf = spaces::sharp_field(f, ctx.p, radii);
      st.sharp_ratio = std::max(st.sharp_ratio, nf / morrey(sf));
    }
    stats.push_back(st);
  }
  {
    auto& c = add_check(out, "spaces/maximal-inequality",
                        "power-mean maximal operators are weighted-norm bounded");
    c.constants = {stats[0].max_ratio_s1, stats[1].max_ratio_s1, stats[0].max_ratio_s2,
                   stats[1].max_ratio_s2};
    const bool fin = std::isfinite(stats[0].max_ratio_s1) && std::isfinite(stats[1].max_ratio_s1) &&
                     std::isfinite(stats[0].max_ratio_s2) && std::isfinite(stats[1].max_ratio_s2);
    c.pass = fin &&
             std::abs(stats[1].max_ratio_s1 - stats[0].max_ratio_s1) <=
                 0.25 * stats[0].max_ratio_s1 &&
             std::abs(stats[1].max_ratio_s2 - stats[0].max_ratio_s2) <=
                 0.25 * stats[0].max_ratio_s2;
    c.runtime_seconds = t_all.seconds();
  }
  {
    auto& c = add_check(out, "spaces/sharp-inequality",
                        "the sharp field controls the weighted norm");
    c.constants = {stats[0].sharp_ratio, stats[1].sharp_ratio};
    c.pass = std::isfinite(stats[0].sharp_ratio) && std::isfinite(stats[1].sharp_ratio) &&
             std::abs(stats[1].sharp_ratio - stats[0].sharp_ratio) <=
                 0.25 * stats[0].sharp_ratio;
    c.runtime_seconds = 0;
  }
  {
    Timer t;
    // pointwise relations on the coarse grid
    const auto g = gridfn::Grid::make(std::vector<int>(n, ctx.cfg.inequality_axes[0]),
                                      Vec(n, -ctx.cfg.half_width), Vec(n, ctx.cfg.half_width));
    const auto radii = spaces::default_radii(g, ctx.p);
    double hg = 0;
    for (int i = 0; i < n; ++i) hg = std::max(hg, g.spacing(i));
    bool pass = true;
    for (std::size_t fi : {std::size_t(1), std::size_t(6)}) {
      const auto f = gridfn::sample(g, suite[fi].fn);
      for (std::size_t flat = 0; flat < g.size(); flat += g.size() / 15 + 1) {
        const Vec x = g.point(flat);
        const double m1 = spaces::maximal(f, ctx.p, x, radii);
        pass = pass && std::abs(f[flat]) <= m1 + 8 * hg;
        pass = pass && spaces::sharp(f, ctx.p, x, radii) <= 2 * m1 * (1 + 1e-12) + 1e-12;
        pass = pass && m1 <= spaces::m_s(f, ctx.p, x, 1.5, radii) * (1 + 1e-12) + 1e-15;
      }
    }
    auto& c = add_check(out, "spaces/pointwise-domination",
                        "the maximal ladder dominates the function and halves the sharp field");
    c.pass = pass;
    c.runtime_seconds = t.seconds();
  }
  {
    Timer t;
    track("spaces.nested_average_drift");
    const auto g = gridfn::Grid::make(std::vector<int>(n, 64), Vec(n, -1.0), Vec(n, 1.0));
    double hg = 0;
    for (int i = 0; i < n; ++i) hg = std::max(hg, g.spacing(i));
    const auto logs = gridfn::sample(g, [&](std::span<const double> y) {
      return std::log(std::max(metric::rho(y, ctx.p), hg / 2));
    });
    const double bmo =
        spaces::bmo_modulus(logs, ctx.p, spaces::default_radii(g, ctx.p),
                            spaces::default_centers(g, 8))
            .bmo_norm;
    const auto e = metric::Ellipsoid::make(Vec(n, 0.0), 0.1, ctx.p);
    bool pass = bmo > 0;
    Vec drifts;
    for (int k : {1, 2, 3}) {
      const double drift = spaces::nested_average_drift(logs, ctx.p, e, k);
      drifts.push_back(drift);
      pass = pass && std::abs(drift - k * std::log(2.0)) <= 0.1 * k * std::log(2.0);
      pass = pass &&
             drift <= std::pow(2.0, ctx.p.homogeneous_dimension) * k * bmo + 0.1;
    }
    auto& c = add_check(out, "spaces/nested-drift",
                        "concentric averages drift by log 2 per doubling");
    c.constants = drifts;
    c.ratios = {bmo};
    c.pass = pass;
    c.runtime_seconds = t.seconds();
  }
  {
    Timer t;
    track("spaces.john_nirenberg_ratio");
    const auto g = gridfn::Grid::make(std::vector<int>(n, 64), Vec(n, -1.0), Vec(n, 1.0));
    double hg = 0;
    for (int i = 0; i < n; ++i) hg = std::max(hg, g.spacing(i));
    const auto logs = gridfn::sample(g, [&](std::span<const double> y) {
      return std::log(std::max(metric::rho(y, ctx.p), hg / 2));
    });
    const double bmo =
        spaces::bmo_modulus(logs, ctx.p, spaces::default_radii(g, ctx.p),
                            spaces::default_centers(g, 8))
            .bmo_norm;
    const double near_one = spaces::john_nirenberg_ratio(
        logs, ctx.p, 1.05, metric::Ellipsoid::make(Vec(n, 0.0), 0.4, ctx.p), bmo);
    Vec ratios;
    for (double r : {0.15, 0.3, 0.6})
      ratios.push_back(spaces::john_nirenberg_ratio(
          logs, ctx.p, 2.0, metric::Ellipsoid::make(Vec(n, 0.0), r, ctx.p), bmo));
    const Vec mm = spread(ratios);
    auto& c = add_check(out, "spaces/john-nirenberg",
                        "higher moments of the oscillation stay one BMO size");
    c.constants = {near_one};
    c.ratios = ratios;
    c.pass = near_one <= 1.05 && mm[0] > 0 && mm[1] <= 2 * mm[0];
    c.runtime_seconds = t.seconds();
  }
}

using ExperimentFn = void (*)(Ctx&, std::vector<CheckRecord>&);

const std::vector<std::pair<std::string, ExperimentFn>>& experiment_table() {
  static const std::vector<std::pair<std::string, ExperimentFn>> table = {
      {"metric-axioms", exp_metric_axioms},
      {"kernel-axioms", exp_kernel_axioms},
      {"harmonic-decay", exp_harmonic_decay},
      {"hormander", exp_hormander},
      {"operator-bound", exp_operator_bound},
      {"commutator-bound", exp_commutator_bound},
      {"vmo-localization", exp_vmo_localization},
      {"series-reconstruction", exp_series_reconstruction},
      {"weights", exp_weights},
      {"spaces-inequalities", exp_spaces_inequalities},
  };
  return table;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join_numbers(const Vec& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += format_double(v[i]);
  }
  return out;
}

Vec split_numbers(const std::string& s, long line) {
  Vec out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t next = s.find(';', pos);
    if (next == std::string::npos) next = s.size();
    const std::string tok = s.substr(pos, next - pos);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ParseError("bad number '" + tok + "'", line);
    }
    pos = next + 1;
  }
  return out;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> csv_split(const std::string& line, long lineno) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw ParseError("unterminated quote", lineno);
  out.push_back(cur);
  return out;
}

const char* kCsvHeader = "id,anchor,pass,constants,ratios,detail,runtime_seconds";

}  // namespace

bool VerificationReport::all_pass() const {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, fn] : experiment_table()) out.push_back(name);
    return out;
  }();
  return names;
}

std::vector<std::string> coverage_gaps() {
  std::vector<std::string> gaps;
  for (const auto& op : op_catalog())
    if (!invoked_ops().count(op)) gaps.push_back(op);
  return gaps;
}

VerificationReport run(const ExperimentConfig& cfg) {
  track("verify.run");
  Ctx ctx = make_ctx(cfg);

  std::vector<std::string> plan;
  if (cfg.experiment == "all") {
    plan = experiment_names();
  } else {
    bool known = false;
    for (const auto& [name, fn] : experiment_table()) known = known || name == cfg.experiment;
    if (!known)
      throw std::invalid_argument("unknown experiment '" + cfg.experiment +
                                  "'; valid: all, " + join(experiment_names(), ", "));
    plan = {cfg.experiment};
  }

  VerificationReport rep;
  rep.experiment = cfg.experiment;
  rep.seed = cfg.seed;
  rep.metadata["threads"] = std::to_string(worker_count());
  rep.metadata["compiler"] = __VERSION__;
  rep.metadata["kernel"] = cfg.kernel;
  rep.metadata["weight"] = cfg.weight;
  {
    std::string gs;
    for (std::size_t i = 0; i < cfg.grid_axes.size(); ++i)
      gs += (i ? "x" : "") + std::to_string(cfg.grid_axes[i]);
    rep.metadata["grid"] = gs;
    std::string ps;
    for (std::size_t i = 0; i < cfg.exponents.size(); ++i)
      ps += (i ? "," : "") + format_double(cfg.exponents[i]);
    rep.metadata["profile"] = ps;
  }

  for (const auto& name : plan)
    for (const auto& [ename, fn] : experiment_table())
      if (ename == name) fn(ctx, rep.checks);

  if (cfg.experiment == "all") {
    {
      Timer t;
      const auto path = (std::filesystem::temp_directory_path() /
                         ("aniso-sio-roundtrip-" + std::to_string(cfg.seed) + ".csv"))
                            .string();
      report_to_csv(rep, path);
      const auto back = report_from_csv(path);
      std::filesystem::remove(path);
      bool same = back.checks.size() == rep.checks.size();
      for (std::size_t i = 0; same && i < rep.checks.size(); ++i) {
        const auto& a = rep.checks[i];
        const auto& b = back.checks[i];
        same = a.id == b.id && a.anchor == b.anchor && a.pass == b.pass &&
               a.detail == b.detail && a.constants == b.constants && a.ratios == b.ratios &&
               a.runtime_seconds == b.runtime_seconds;
      }
      auto& c = add_check(rep.checks, "report/roundtrip",
                          "CSV reports reload losslessly");
      c.pass = same;
      c.runtime_seconds = t.seconds();
    }
    {
      const auto gaps = coverage_gaps();
      auto& c = add_check(rep.checks, "report/coverage",
                          "every module operation is exercised");
      c.constants = {double(gaps.size())};
      c.pass = gaps.empty();
      c.detail = join(gaps, " ");
    }
  }

  if (!cfg.output_json.empty()) write_report_json(rep, cfg.output_json);
  if (!cfg.output_csv.empty()) report_to_csv(rep, cfg.output_csv);
  return rep;
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), 0);
  }
  if (!j.is_object()) throw ParseError("config must be a JSON object", 0);

  ExperimentConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "experiment") cfg.experiment = value.get<std::string>();
      else if (key == "kernel") cfg.kernel = value.get<std::string>();
      else if (key == "weight") cfg.weight = value.get<std::string>();
      else if (key == "exponents") cfg.exponents = value.get<std::vector<double>>();
      else if (key == "grid") {
        for (const auto& [gk, gv] : value.items()) {
          if (gk == "axes") cfg.grid_axes = gv.get<std::vector<int>>();
          else if (gk == "half_width") cfg.half_width = gv.get<double>();
          else throw ParseError("unknown grid key '" + gk + "'", 0);
        }
      } else if (key == "p") cfg.p = value.get<double>();
      else if (key == "epsilon_ladder") cfg.epsilon_ladder = value.get<std::vector<double>>();
      else if (key == "expansion_degree") cfg.expansion_degree = value.get<int>();
      else if (key == "radii") cfg.radii = value.get<std::vector<double>>();
      else if (key == "inequality_axes") cfg.inequality_axes = value.get<std::vector<int>>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "output_json") cfg.output_json = value.get<std::string>();
      else if (key == "output_csv") cfg.output_csv = value.get<std::string>();
      else throw ParseError("unknown config key '" + key + "'", 0);
    }
  } catch (const json::type_error& e) {
    throw ParseError(e.what(), 0);
  }
  return cfg;
}

ExperimentConfig config_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw EvaluationError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str());
}

std::string report_to_json(const VerificationReport& report) {
  json j;
  j["experiment"] = report.experiment;
  j["seed"] = report.seed;
  j["metadata"] = report.metadata;
  j["checks"] = json::array();
  for (const auto& c : report.checks) {
    json jc;
    jc["id"] = c.id;
    jc["anchor"] = c.anchor;
    jc["constants"] = c.constants;
    jc["ratios"] = c.ratios;
    jc["pass"] = c.pass;
    jc["detail"] = c.detail;
    jc["runtime_seconds"] = c.runtime_seconds;
    j["checks"].push_back(jc);
  }
  return j.dump(2) + "\n";
}

void write_report_json(const VerificationReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw EvaluationError("cannot write report to " + path);
  out << report_to_json(report);
  if (!out) throw EvaluationError("failed writing report to " + path);
}

void report_to_csv(const VerificationReport& report, const std::string& path) {
  track("verify.report_to_csv");
  std::ofstream out(path);
  if (!out) throw EvaluationError("cannot write report to " + path);
  out << kCsvHeader << "\n";
  for (const auto& c : report.checks) {
    out << csv_escape(c.id) << ',' << csv_escape(c.anchor) << ',' << (c.pass ? 1 : 0) << ','
        << csv_escape(join_numbers(c.constants)) << ',' << csv_escape(join_numbers(c.ratios))
        << ',' << csv_escape(c.detail) << ',' << format_double(c.runtime_seconds) << "\n";
  }
  if (!out) throw EvaluationError("failed writing report to " + path);
}

VerificationReport report_from_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw EvaluationError("cannot open report " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header", 0);
  if (line != kCsvHeader) throw ParseError("unexpected header '" + line + "'", 1);
  VerificationReport rep;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cols = csv_split(line, lineno);
    if (cols.size() != 7)
      throw ParseError("expected 7 columns, got " + std::to_string(cols.size()), lineno);
    CheckRecord c;
    c.id = cols[0];
    c.anchor = cols[1];
    if (cols[2] != "0" && cols[2] != "1") throw ParseError("bad pass flag", lineno);
    c.pass = cols[2] == "1";
    c.constants = split_numbers(cols[3], lineno);
    c.ratios = split_numbers(cols[4], lineno);
    c.detail = cols[5];
    c.runtime_seconds = split_numbers(cols[6], lineno).at(0);
    rep.checks.push_back(std::move(c));
  }
  return rep;
}

}  // namespace aniso::verify
