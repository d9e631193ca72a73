#include "aniso/spaces.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <stdexcept>

#include "aniso/errors.hpp"

namespace aniso::spaces {

namespace {

std::string format_param(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// Walks every grid cell meeting E_r(x) and hands visit(flat, w) the cell's
// share of |E cap box|: trapezoid boundary factors times the inclusion
// fraction (1 inside, 16-point subsample count across the boundary shell).
// Returns the total mass.
template <class Visit>
double visit_cells(const gridfn::Grid& g, const metric::AnisotropyProfile& p,
                   std::span<const double> x, double r, Visit&& visit) {
  const int n = g.dim();
  if (n != p.dim() || static_cast<int>(x.size()) != n)
    throw std::invalid_argument("grid, profile and point dimensions disagree");
  if (n != 2 && n != 3)
    throw UnsupportedDimension("ellipsoid averages support n in {2, 3}, got " +
                               std::to_string(n));
  if (!(r > 0)) throw std::invalid_argument("ellipsoid radius must be positive");

  Vec half(n);
  double cellvol = 1;
  std::vector<int> lo(n), hi(n);
  for (int i = 0; i < n; ++i) {
    const double h = g.spacing(i);
    half[i] = 0.5 * h;
    cellvol *= h;
    const double rad = std::pow(r, p.exponents[i]);
    lo[i] = std::max(
        static_cast<int>(std::ceil((x[i] - rad - g.lower[i]) / h - 0.5 - 1e-12)), 0);
    hi[i] = std::min(
        static_cast<int>(std::floor((x[i] + rad - g.lower[i]) / h + 0.5 + 1e-12)),
        g.axes[i] - 1);
    if (lo[i] > hi[i]) return 0;
  }
  const double cell_rho = metric::rho(half, p);
  const auto& subs = metric::cell_subsample_offsets(n);

  double mass = 0;
  std::vector<int> idx = lo;
  double diff[3], z[3];
  for (;;) {
    double trap = 1;
    for (int i = 0; i < n; ++i) {
      diff[i] = g.coordinate(i, idx[i]) - x[i];
      if (idx[i] == 0 || idx[i] == g.axes[i] - 1) trap *= 0.5;
    }
    const double d = metric::rho({diff, static_cast<std::size_t>(n)}, p);
    double frac = 0;
    if (d + cell_rho <= r) {
      frac = 1;
    } else if (d - cell_rho < r) {
      int inside = 0;
      for (const auto& s : subs) {
        for (int i = 0; i < n; ++i) z[i] = diff[i] + s[i] * g.spacing(i);
        if (metric::rho({z, static_cast<std::size_t>(n)}, p) < r) ++inside;
      }
      frac = inside / 16.0;
    }
    if (frac > 0) {
      const double w = trap * frac * cellvol;
      visit(g.flat_index(idx), w);
      mass += w;
    }
    int ax = n - 1;
    while (ax >= 0 && ++idx[ax] > hi[ax]) {
      idx[ax] = lo[ax];
      --ax;
    }
    if (ax < 0) break;
  }
  return mass;
}

// Cached cell list for the multi-pass statistics (oscillation, centered p-th
// moments), so the geometry is resolved once per ellipsoid.
thread_local std::vector<std::pair<std::size_t, double>> cell_buffer;

double collect_cells(const gridfn::Grid& g, const metric::AnisotropyProfile& p,
                     std::span<const double> x, double r) {
  cell_buffer.clear();
  return visit_cells(g, p, x, r,
                     [](std::size_t flat, double w) { cell_buffer.emplace_back(flat, w); });
}

// Mean oscillation of a over E_r(x): average of |a - a_E|.
double oscillation(const gridfn::GridFunction& a, const metric::AnisotropyProfile& p,
                   std::span<const double> x, double r) {
  const double mass = collect_cells(a.grid, p, x, r);
  if (!(mass > 0)) return 0;
  double s = 0;
  for (const auto& [flat, w] : cell_buffer) s += w * a[flat];
  const double mean = s / mass;
  double osc = 0;
  for (const auto& [flat, w] : cell_buffer) osc += w * std::abs(a[flat] - mean);
  return osc / mass;
}

void require_ladder(std::span<const double> radii) {
  if (radii.empty()) throw std::invalid_argument("radius ladder is empty");
  for (double r : radii)
    if (!(r > 0) || !std::isfinite(r))
      throw std::invalid_argument("radius ladder entries must be positive");
}

void require_exponent(double exponent) {
  if (!(exponent > 1) || !std::isfinite(exponent))
    throw std::invalid_argument("exponent must lie in (1, inf), got " +
                                std::to_string(exponent));
}

double positive_weight(const Weight& w, std::span<const double> x, double r) {
  const double v = w.evaluate(x, r);
  if (!(v > 0) || !std::isfinite(v))
    throw EvaluationError("weight " + w.name + " must be positive and finite, got " +
                          std::to_string(v) + " at r = " + std::to_string(r));
  return v;
}

// parallel_for workers must not throw, so every input check that guards a
// parallel region runs up front.
void require_geometry(const gridfn::Grid& g, const metric::AnisotropyProfile& p) {
  if (g.dim() != p.dim())
    throw std::invalid_argument("grid and profile dimensions disagree");
  if (g.dim() != 2 && g.dim() != 3)
    throw UnsupportedDimension("ellipsoid averages support n in {2, 3}, got " +
                               std::to_string(g.dim()));
}

void require_centers(const gridfn::Grid& g, std::span<const Vec> centers) {
  for (const Vec& c : centers)
    if (static_cast<int>(c.size()) != g.dim())
      throw std::invalid_argument("center dimension does not match the grid");
}

}  // namespace

Weight weight_const() {
  return {"const", [](std::span<const double>, double) { return 1.0; }};
}

Weight weight_power(double lambda) {
  return {"power(" + format_param(lambda) + ")",
          [lambda](std::span<const double>, double r) { return std::pow(r, lambda); }};
}

Weight weight_power_log(double lambda) {
  return {"power_log(" + format_param(lambda) + ")",
          [lambda](std::span<const double>, double r) {
            return std::pow(r, lambda) * std::log(r + 2.0);
          }};
}

Weight weight_from_spec(const std::string& spec) {
  auto param = [&](const std::string& head) -> std::optional<double> {
    if (spec.size() < head.size() + 2 || spec.compare(0, head.size() + 1, head + "(") != 0 ||
        spec.back() != ')')
      return std::nullopt;
    const std::string inner = spec.substr(head.size() + 1, spec.size() - head.size() - 2);
    std::size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(inner, &pos);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad weight parameter in spec: " + spec);
    }
    if (pos != inner.size())
      throw std::invalid_argument("bad weight parameter in spec: " + spec);
    return v;
  };
  if (spec == "const") return weight_const();
  if (auto l = param("power_log")) return weight_power_log(*l);
  if (auto l = param("power")) return weight_power(*l);
  throw std::invalid_argument("unknown weight spec: " + spec);
}

std::vector<double> default_radii(const gridfn::Grid& g,
                                  const metric::AnisotropyProfile& p) {
  double h = 0;
  for (int i = 0; i < g.dim(); ++i) h = std::max(h, g.spacing(i));
  Vec span(g.dim());
  for (int i = 0; i < g.dim(); ++i) span[i] = g.upper[i] - g.lower[i];
  const double rmax = metric::rho(span, p);
  std::vector<double> out;
  for (double r = 2 * h; r <= rmax * (1 + 1e-12); r *= std::sqrt(2.0)) out.push_back(r);
  // top rung covers the box from any center
  if (out.empty() || out.back() < rmax * (1 - 1e-12)) out.push_back(rmax);
  return out;
}

std::vector<Vec> default_centers(const gridfn::Grid& g, int stride) {
  if (stride < 1) throw std::invalid_argument("center stride must be >= 1");
  const int n = g.dim();
  std::vector<Vec> out;
  std::vector<int> idx(n, 0);
  for (;;) {
    out.push_back(g.point(g.flat_index(idx)));
    int ax = n - 1;
    while (ax >= 0) {
      idx[ax] += stride;
      if (idx[ax] < g.axes[ax]) break;
      idx[ax] = 0;
      --ax;
    }
    if (ax < 0) break;
  }
  return out;
}

double ellipsoid_average(const gridfn::GridFunction& f,
                         const metric::AnisotropyProfile& p,
                         std::span<const double> x, double r) {
  double s = 0;
  const double mass = visit_cells(f.grid, p, x, r, [&](std::size_t flat, double w) {
    s += w * std::abs(f[flat]);
  });
  return mass > 0 ? s / mass : 0;
}

double maximal(const gridfn::GridFunction& f, const metric::AnisotropyProfile& p,
               std::span<const double> x, std::span<const double> radii) {
  require_ladder(radii);
  double sup = 0;
  for (double r : radii) sup = std::max(sup, ellipsoid_average(f, p, x, r));
  return sup;
}

double sharp(const gridfn::GridFunction& f, const metric::AnisotropyProfile& p,
             std::span<const double> x, std::span<const double> radii) {
  require_ladder(radii);
  double sup = 0;
  for (double r : radii) sup = std::max(sup, oscillation(f, p, x, r));
  return sup;
}

double m_s(const gridfn::GridFunction& f, const metric::AnisotropyProfile& p,
           std::span<const double> x, double s, std::span<const double> radii) {
  require_ladder(radii);
  if (!(s >= 1) || !std::isfinite(s))
    throw std::invalid_argument("m_s requires s >= 1, got " + std::to_string(s));
  if (s == 1) return maximal(f, p, x, radii);
  double sup = 0;
  for (double r : radii) {
    double acc = 0;
    const double mass = visit_cells(f.grid, p, x, r, [&](std::size_t flat, double w) {
      acc += w * std::pow(std::abs(f[flat]), s);
    });
    if (mass > 0) sup = std::max(sup, acc / mass);
  }
  return std::pow(sup, 1.0 / s);
}

namespace {

gridfn::GridFunction pointwise_field(
    const gridfn::GridFunction& f,
    const std::function<double(std::span<const double>)>& op) {
  gridfn::GridFunction out{f.grid, Vec(f.grid.size(), 0.0)};
  parallel_for(f.grid.size(), [&](std::size_t i) { out[i] = op(f.grid.point(i)); });
  return out;
}

}  // namespace

gridfn::GridFunction maximal_field(const gridfn::GridFunction& f,
                                   const metric::AnisotropyProfile& p,
                                   std::span<const double> radii) {
  require_geometry(f.grid, p);
  require_ladder(radii);
  return pointwise_field(f, [&](std::span<const double> x) { return maximal(f, p, x, radii); });
}

gridfn::GridFunction sharp_field(const gridfn::GridFunction& f,
                                 const metric::AnisotropyProfile& p,
                                 std::span<const double> radii) {
  require_geometry(f.grid, p);
  require_ladder(radii);
  return pointwise_field(f, [&](std::span<const double> x) { return sharp(f, p, x, radii); });
}

gridfn::GridFunction m_s_field(const gridfn::GridFunction& f,
                               const metric::AnisotropyProfile& p, double s,
                               std::span<const double> radii) {
  require_geometry(f.grid, p);
  require_ladder(radii);
  return pointwise_field(f, [&](std::span<const double> x) { return m_s(f, p, x, s, radii); });
}

MorreyResult morrey_norm(const gridfn::GridFunction& f,
                         const metric::AnisotropyProfile& p, double exponent,
                         const Weight& w, std::span<const Vec> centers,
                         std::span<const double> radii) {
  require_exponent(exponent);
  require_ladder(radii);
  require_geometry(f.grid, p);
  require_centers(f.grid, centers);
  if (centers.empty()) throw std::invalid_argument("morrey_norm needs at least one center");

  Vec wtab(centers.size() * radii.size());
  for (std::size_t ci = 0; ci < centers.size(); ++ci)
    for (std::size_t k = 0; k < radii.size(); ++k)
      wtab[ci * radii.size() + k] = positive_weight(w, centers[ci], radii[k]);

  struct Slot {
    double value = -1;
    double radius = 0;
  };
  std::vector<Slot> best(centers.size());
  parallel_for(centers.size(), [&](std::size_t ci) {
    const Vec& c = centers[ci];
    for (std::size_t k = 0; k < radii.size(); ++k) {
      double integral = 0;
      visit_cells(f.grid, p, c, radii[k], [&](std::size_t flat, double wgt) {
        integral += wgt * std::pow(std::abs(f[flat]), exponent);
      });
      const double value = std::pow(integral / wtab[ci * radii.size() + k], 1.0 / exponent);
      if (value > best[ci].value) best[ci] = {value, radii[k]};
    }
  });

  MorreyResult out;
  out.value = -1;
  for (std::size_t ci = 0; ci < centers.size(); ++ci) {
    if (best[ci].value > out.value) {
      out.value = best[ci].value;
      out.center = centers[ci];
      out.radius = best[ci].radius;
    }
  }
  out.value = std::max(out.value, 0.0);
  return out;
}

WeightCheck check_weight(const Weight& w, const metric::AnisotropyProfile& p,
                         std::span<const Vec> centers, std::span<const double> radii,
                         double sigma) {
  require_ladder(radii);
  if (centers.empty()) throw std::invalid_argument("check_weight needs at least one center");
  if (!(sigma > 0) || sigma > 1)
    throw std::invalid_argument("sigma must lie in (0, 1], got " + std::to_string(sigma));
  const auto [rmin, rmax] = std::minmax_element(radii.begin(), radii.end());
  if (*rmax / *rmin < 999.999)
    throw std::invalid_argument("radius ladder must span at least three decades");

  WeightCheck out;
  out.sigma = sigma;
  out.lower = std::numeric_limits<double>::infinity();
  out.upper = 0;
  const double sa = sigma * p.homogeneous_dimension;

  // log-coordinate tail integral out to t = 1e8 r, with the first half as a
  // plateau probe
  const int kNodes = 3000;
  const double kSpan = std::log(1e8);
  const double du = kSpan / kNodes;

  bool plateau = true;
  for (const Vec& c : centers) {
    for (double r : radii) {
      const double base = positive_weight(w, c, r);
      for (int j = 0; j <= 8; ++j) {
        const double t = r * (1 + j / 8.0);
        const double ratio = positive_weight(w, c, t) / base;
        out.lower = std::min(out.lower, ratio);
        out.upper = std::max(out.upper, ratio);
      }
      double integral = 0, half = 0;
      double prev = base;  // integrand at u = 0
      for (int k = 1; k <= kNodes; ++k) {
        const double u = k * du;
        const double v = positive_weight(w, c, r * std::exp(u)) * std::exp(-sa * u);
        integral += 0.5 * (prev + v) * du;
        prev = v;
        if (k == kNodes / 2) half = integral;
      }
      if (!(integral - half <= 0.02 * integral)) {
        plateau = false;
        if (out.note.empty())
          out.note = "tail integral of " + w.name + " does not plateau at r = " +
                     format_param(r) + " (sigma = " + format_param(sigma) + ")";
      }
      out.integral_constant = std::max(out.integral_constant, integral / base);
    }
  }
  out.pass = plateau && out.lower > 0 && std::isfinite(out.upper) &&
             std::isfinite(out.integral_constant);
  if (out.pass) out.note = "ok";
  return out;
}

BmoModulus bmo_modulus(const gridfn::GridFunction& a,
                       const metric::AnisotropyProfile& p,
                       std::span<const double> radii, std::span<const Vec> centers) {
  require_ladder(radii);
  require_geometry(a.grid, p);
  require_centers(a.grid, centers);
  if (centers.empty()) throw std::invalid_argument("bmo_modulus needs at least one center");

  BmoModulus out;
  out.radii.assign(radii.begin(), radii.end());
  std::sort(out.radii.begin(), out.radii.end(), std::greater<>());
  out.radii.erase(std::unique(out.radii.begin(), out.radii.end()), out.radii.end());
  const std::size_t m = out.radii.size();

  // per-rung sup of the mean oscillation over centers
  std::vector<Vec> per_center(centers.size());
  parallel_for(centers.size(), [&](std::size_t ci) {
    per_center[ci].assign(m, 0.0);
    for (std::size_t k = 0; k < m; ++k)
      per_center[ci][k] = oscillation(a, p, centers[ci], out.radii[k]);
  });
  Vec rung(m, 0.0);
  for (const Vec& oc : per_center)
    for (std::size_t k = 0; k < m; ++k) rung[k] = std::max(rung[k], oc[k]);

  // gamma(R) = sup over r <= R: suffix maximum along the descending radii
  out.values.assign(m, 0.0);
  double run = 0;
  for (std::size_t k = m; k-- > 0;) {
    run = std::max(run, rung[k]);
    out.values[k] = run;
  }
  out.bmo_norm = out.values.empty() ? 0 : out.values.front();

  // averages of a constant leave roundoff-sized oscillations
  double amax = 0;
  for (double v : a.values) amax = std::max(amax, std::abs(v));
  if (out.bmo_norm <= 1e-13 * std::max(1.0, amax)) {
    out.vmo_flag = true;
    out.trend_slope = 0;
    return out;
  }
  if (m >= 2) {
    const double g1 = out.values[m - 1], g2 = out.values[m - 2];
    out.vmo_flag = g1 < 0.2 * out.bmo_norm && g2 < 0.2 * out.bmo_norm && g1 < g2;
  }
  // log-log trend of gamma against R over the positive entries
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (std::size_t k = 0; k < m; ++k) {
    if (!(out.values[k] > 0)) continue;
    const double lx = std::log(out.radii[k]), ly = std::log(out.values[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++cnt;
  }
  const double det = cnt * sxx - sx * sx;
  out.trend_slope = (cnt >= 2 && std::abs(det) > 1e-30) ? (cnt * sxy - sx * sy) / det : 0;
  return out;
}

double john_nirenberg_ratio(const gridfn::GridFunction& a,
                            const metric::AnisotropyProfile& p, double exponent,
                            const metric::Ellipsoid& e, double bmo_norm_hint) {
  require_exponent(exponent);
  double bmo = bmo_norm_hint;
  if (bmo < 0) {
    const auto radii = default_radii(a.grid, p);
    const auto centers = default_centers(a.grid);
    bmo = bmo_modulus(a, p, radii, centers).bmo_norm;
  }
  double amax = 0;
  for (double v : a.values) amax = std::max(amax, std::abs(v));
  if (bmo <= 1e-13 * std::max(1.0, amax)) return 0;

  const double mass = collect_cells(a.grid, p, e.center, e.radius);
  if (!(mass > 0)) return 0;
  double s = 0;
  for (const auto& [flat, w] : cell_buffer) s += w * a[flat];
  const double mean = s / mass;
  double moment = 0;
  for (const auto& [flat, w] : cell_buffer)
    moment += w * std::pow(std::abs(a[flat] - mean), exponent);
  return std::pow(moment / mass, 1.0 / exponent) / bmo;
}

double nested_average_drift(const gridfn::GridFunction& a,
                            const metric::AnisotropyProfile& p,
                            const metric::Ellipsoid& e, int k) {
  if (k < 1) throw std::invalid_argument("nested_average_drift requires k >= 1");
  const double big = std::ldexp(e.radius, k);
  const gridfn::Grid& g = a.grid;
  for (int i = 0; i < g.dim(); ++i) {
    const double rad = std::pow(big, p.exponents[i]);
    const double slop = 1e-9 * g.spacing(i);
    if (e.center[i] - rad < g.lower[i] - slop || e.center[i] + rad > g.upper[i] + slop)
      throw std::invalid_argument("dilated ellipsoid leaves the grid box");
  }
  auto mean_over = [&](double r) {
    double s = 0;
    const double mass = visit_cells(g, p, e.center, r, [&](std::size_t flat, double w) {
      s += w * a[flat];
    });
    if (!(mass > 0)) throw EvaluationError("empty ellipsoid average in nested drift");
    return s / mass;
  };
  return std::abs(mean_over(big) - mean_over(e.radius));
}

}  // namespace aniso::spaces
