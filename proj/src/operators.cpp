#include "aniso/operators.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "aniso/errors.hpp"

namespace aniso::operators {

namespace {

const double kPi = std::acos(-1.0);
const double kSqrtPi = std::sqrt(kPi);

// Shared cell-inclusion lattice; none of the offsets is the cell center, so
// subsampled kernels are never hit at xi = 0.
const std::vector<Vec>& subsample_offsets(int n) { return metric::cell_subsample_offsets(n); }

// subset of the 16 subsamples used for the truncation-error proxy
bool in_coarse_subset(std::size_t j) { return j == 0 || j == 5 || j == 10 || j == 15; }

struct Box {
  Vec lower, upper;
};

// Geometry of the truncated convolution on a fixed grid: one entry per
// lattice offset x - y. kind 0 cells lie inside the cutoff, kind 1 cells are
// far enough for a midpoint value, kind 2 cells get 16-point subsampling
// (both cells crossed by the cutoff shell and the near band where the kernel
// bends hardest).
struct Stencil {
  int n = 0;
  std::vector<int> axes;      // grid points per axis
  std::vector<int> odims;     // offsets per axis, 2*axes-1
  Vec spacing;
  double cellvol = 1;
  double eps = 0;
  long straddling = 0;

  std::vector<std::int8_t> kind;
  std::vector<double> center_xi;   // n doubles per offset
  std::vector<double> center_rho;  // rho at the center offset
  std::vector<std::size_t> sub_start;
  std::vector<double> sub_xi;      // n doubles per kept subsample
  std::vector<double> sub_rho;
  std::vector<std::uint8_t> sub_coarse;

  std::size_t offsets() const { return kind.size(); }
};

Stencil build_stencil(const gridfn::Grid& g, const metric::AnisotropyProfile& p,
                      double eps) {
  if (g.dim() != p.dim())
    throw std::invalid_argument("transform: grid and profile dimensions differ");
  if (g.dim() != 2 && g.dim() != 3)
    throw UnsupportedDimension("transforms support n in {2, 3}");
  double hmax = 0;
  for (int i = 0; i < g.dim(); ++i) hmax = std::max(hmax, g.spacing(i));
  if (!(eps >= 2.0 * hmax))
    throw UnderResolved("cutoff " + std::to_string(eps) +
                        " is below two grid spacings (" + std::to_string(2 * hmax) + ")");

  Stencil st;
  st.n = g.dim();
  st.axes = g.axes;
  st.spacing.resize(st.n);
  for (int i = 0; i < st.n; ++i) {
    st.spacing[i] = g.spacing(i);
    st.cellvol *= st.spacing[i];
    st.odims.push_back(2 * g.axes[i] - 1);
  }
  st.eps = eps;

  Vec half(st.n);
  for (int i = 0; i < st.n; ++i) half[i] = 0.5 * st.spacing[i];
  const double cell_rho = metric::rho(half, p);
  const auto& subs = subsample_offsets(st.n);

  std::size_t total = 1;
  for (int d : st.odims) total *= static_cast<std::size_t>(d);
  st.kind.assign(total, 0);
  st.center_xi.assign(total * st.n, 0.0);
  st.center_rho.assign(total, 0.0);
  st.sub_start.assign(total + 1, 0);

  // first pass: classify and count kept subsamples
  std::vector<std::int8_t> straddle_flag(total, 0);
  Vec xi(st.n), z(st.n);
  for (std::size_t o = 0; o < total; ++o) {
    std::size_t rest = o;
    for (int i = st.n - 1; i >= 0; --i) {
      const int off = static_cast<int>(rest % st.odims[i]) - (st.axes[i] - 1);
      rest /= st.odims[i];
      xi[i] = off * st.spacing[i];
    }
    const double d = metric::rho(xi, p);
    st.center_rho[o] = d;
    for (int i = 0; i < st.n; ++i) st.center_xi[o * st.n + i] = xi[i];
    if (d + cell_rho < eps) {
      st.kind[o] = 0;
    } else if (d - cell_rho > 2.0 * eps) {
      st.kind[o] = 1;
    } else {
      st.kind[o] = 2;
      if (d - cell_rho <= eps) {
        straddle_flag[o] = 1;
        ++st.straddling;
      }
    }
  }
  for (std::size_t o = 0; o < total; ++o) {
    std::size_t kept = 0;
    if (st.kind[o] == 2) {
      for (std::size_t j = 0; j < subs.size(); ++j) {
        for (int i = 0; i < st.n; ++i)
          z[i] = st.center_xi[o * st.n + i] - subs[j][i] * st.spacing[i];
        if (metric::rho(z, p) > eps) ++kept;
      }
    }
    st.sub_start[o + 1] = st.sub_start[o] + kept;
  }
  st.sub_xi.assign(st.sub_start[total] * st.n, 0.0);
  st.sub_rho.assign(st.sub_start[total], 0.0);
  st.sub_coarse.assign(st.sub_start[total], 0);
  for (std::size_t o = 0; o < total; ++o) {
    if (st.kind[o] != 2) continue;
    std::size_t at = st.sub_start[o];
    for (std::size_t j = 0; j < subs.size(); ++j) {
      for (int i = 0; i < st.n; ++i)
        z[i] = st.center_xi[o * st.n + i] - subs[j][i] * st.spacing[i];
      const double r = metric::rho(z, p);
      if (r > eps) {
        for (int i = 0; i < st.n; ++i) st.sub_xi[at * st.n + i] = z[i];
        st.sub_rho[at] = r;
        st.sub_coarse[at] = in_coarse_subset(j) ? 1 : 0;
        ++at;
      }
    }
  }
  return st;
}

// Evaluation points: rho-distance to the box boundary at least eps + 2 hmax,
// axis by axis via the gap >= (eps + 2 hmax)^alpha_i test.
std::vector<std::uint8_t> evaluation_mask(const gridfn::Grid& g, const Box& box,
                                          const metric::AnisotropyProfile& p,
                                          double eps) {
  double hmax = 0;
  for (int i = 0; i < g.dim(); ++i) hmax = std::max(hmax, g.spacing(i));
  const double margin = eps + 2.0 * hmax;
  std::vector<std::uint8_t> mask(g.size(), 1);
  for (std::size_t flat = 0; flat < g.size(); ++flat) {
    const Vec x = g.point(flat);
    for (int i = 0; i < g.dim(); ++i) {
      const double gap = std::min(x[i] - box.lower[i], box.upper[i] - x[i]);
      if (gap < std::pow(margin, p.exponents[i])) {
        mask[flat] = 0;
        break;
      }
    }
  }
  return mask;
}

// the policy's outer box, defaulting to the box of f's grid
Box resolve_box(const gridfn::Grid& g, const TruncationPolicy& pol) {
  if (!(pol.epsilon > 0))
    throw std::invalid_argument("transform: cutoff epsilon must be positive");
  Box box{g.lower, g.upper};
  if (!pol.outer_lower.empty() || !pol.outer_upper.empty()) {
    if (static_cast<int>(pol.outer_lower.size()) != g.dim() ||
        static_cast<int>(pol.outer_upper.size()) != g.dim())
      throw std::invalid_argument("transform: outer box dimension mismatch");
    for (int i = 0; i < g.dim(); ++i) {
      const double tol = 1e-9 * g.spacing(i);
      if (pol.outer_lower[i] < g.lower[i] - tol || pol.outer_upper[i] > g.upper[i] + tol ||
          !(pol.outer_lower[i] < pol.outer_upper[i]))
        throw std::invalid_argument("transform: outer box not inside the grid box");
    }
    box.lower = pol.outer_lower;
    box.upper = pol.outer_upper;
  }
  return box;
}

double box_inradius(const Box& box, const metric::AnisotropyProfile& p) {
  double r = std::numeric_limits<double>::infinity();
  for (int i = 0; i < p.dim(); ++i)
    r = std::min(r, std::pow(0.5 * (box.upper[i] - box.lower[i]),
                             1.0 / p.exponents[i]));
  return r;
}

// f restricted to the box in trapezoid fashion: nodes outside get weight 0,
// nodes on a box face weight 1/2 per axis. Cells of grid-edge nodes stick out
// of the grid box by half a spacing, so the same rule covers them. Folding
// the weights into f keeps the convolution a pure offset sum.
gridfn::GridFunction box_weighted(const gridfn::GridFunction& f, const Box& box) {
  gridfn::GridFunction out = f;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    double w = 1;
    const Vec x = out.grid.point(i);
    for (int a = 0; a < out.grid.dim(); ++a) {
      const double tol = 1e-9 * out.grid.spacing(a);
      if (x[a] < box.lower[a] - tol || x[a] > box.upper[a] + tol)
        w = 0;
      else if (x[a] < box.lower[a] + tol || x[a] > box.upper[a] - tol)
        w *= 0.5;
    }
    out.values[i] *= w;
  }
  return out;
}

using Evaluator = std::function<double(std::span<const double>)>;

// weights[o]: multiplier of f(y) * cellvol for offset o
std::vector<double> stencil_weights(const Stencil& st, const Evaluator& eval,
                                    double* err_out) {
  std::vector<double> w(st.offsets(), 0.0);
  double err = 0;
  parallel_for(st.offsets(), [&](std::size_t o) {
    if (st.kind[o] == 0) return;
    if (st.kind[o] == 1) {
      w[o] = eval(std::span<const double>(&st.center_xi[o * st.n], st.n));
      return;
    }
    double fine = 0;
    for (std::size_t j = st.sub_start[o]; j < st.sub_start[o + 1]; ++j)
      fine += eval(std::span<const double>(&st.sub_xi[j * st.n], st.n));
    w[o] = fine / 16.0;
  });
  // serial second pass for the 16-vs-4 subsample drift
  for (std::size_t o = 0; o < st.offsets(); ++o) {
    if (st.kind[o] != 2) continue;
    double coarse = 0;
    for (std::size_t j = st.sub_start[o]; j < st.sub_start[o + 1]; ++j)
      if (st.sub_coarse[j])
        coarse += eval(std::span<const double>(&st.sub_xi[j * st.n], st.n));
    err += std::abs(w[o] - coarse / 4.0) * st.cellvol;
  }
  for (double v : w)
    if (!std::isfinite(v)) throw EvaluationError("kernel non-finite in stencil weights");
  if (err_out) *err_out = err;
  return w;
}

// core loop: out(x) = cellvol * sum_y w(x - y) * f(y), or with the
// [a(y) - a(x)] factor inserted when a is present
void apply_weights(const Stencil& st, const std::vector<double>& w,
                   const gridfn::GridFunction& f, const gridfn::GridFunction* a,
                   const std::vector<std::uint8_t>& mask, gridfn::GridFunction& out) {
  const int n = st.n;
  const auto& axes = st.axes;
  parallel_for(f.grid.size(), [&](std::size_t ix) {
    if (!mask[ix]) return;
    double acc = 0;
    if (n == 2) {
      const int N1 = axes[0], N2 = axes[1];
      const int i1 = static_cast<int>(ix) / N2, i2 = static_cast<int>(ix) % N2;
      const double ax = a ? a->values[ix] : 0.0;
      for (int j1 = 0; j1 < N1; ++j1) {
        // offset of x - y, so the row is walked backwards in j2
        const double* wrow = &w[std::size_t(i1 - j1 + N1 - 1) * (2 * N2 - 1) +
                                std::size_t(i2 + N2 - 1)];
        const double* frow = &f.values[std::size_t(j1) * N2];
        if (a) {
          const double* arow = &a->values[std::size_t(j1) * N2];
          for (int j2 = 0; j2 < N2; ++j2)
            acc += wrow[-j2] * (arow[j2] - ax) * frow[j2];
        } else {
          for (int j2 = 0; j2 < N2; ++j2) acc += wrow[-j2] * frow[j2];
        }
      }
    } else {
      const int N1 = axes[0], N2 = axes[1], N3 = axes[2];
      const int M2 = 2 * N2 - 1, M3 = 2 * N3 - 1;
      const int i1 = static_cast<int>(ix / (std::size_t(N2) * N3));
      const int i2 = static_cast<int>(ix / N3) % N2;
      const int i3 = static_cast<int>(ix) % N3;
      const double ax = a ? a->values[ix] : 0.0;
      for (int j1 = 0; j1 < N1; ++j1)
        for (int j2 = 0; j2 < N2; ++j2) {
          const double* wrow = &w[(std::size_t(i1 - j1 + N1 - 1) * M2 +
                                   std::size_t(i2 - j2 + N2 - 1)) *
                                      M3 +
                                  std::size_t(i3 + N3 - 1)];
          const std::size_t fbase = (std::size_t(j1) * N2 + j2) * N3;
          const double* frow = &f.values[fbase];
          if (a) {
            const double* arow = &a->values[fbase];
            for (int j3 = 0; j3 < N3; ++j3)
              acc += wrow[-j3] * (arow[j3] - ax) * frow[j3];
          } else {
            for (int j3 = 0; j3 < N3; ++j3) acc += wrow[-j3] * frow[j3];
          }
        }
    }
    out.values[ix] = acc * st.cellvol;
  });
}

// same loop with per-pair kernel evaluation, for x-dependent kernels
void apply_variable(const Stencil& st, const kernel::VariableKernel& k,
                    const gridfn::GridFunction& f, const gridfn::GridFunction* a,
                    const std::vector<std::uint8_t>& mask, gridfn::GridFunction& out) {
  parallel_for(f.grid.size(), [&](std::size_t ix) {
    if (!mask[ix]) return;
    const Vec x = f.grid.point(ix);
    const double ax = a ? a->values[ix] : 0.0;
    double acc = 0;
    const auto& g = f.grid;
    for (std::size_t iy = 0; iy < g.size(); ++iy) {
      // offset index of x - y
      std::size_t o = 0;
      std::size_t rx = ix, ry = iy;
      for (int i = st.n - 1, stride = 1; i >= 0; --i) {
        const int xi_i = static_cast<int>(rx % st.axes[i]);
        const int yi_i = static_cast<int>(ry % st.axes[i]);
        rx /= st.axes[i];
        ry /= st.axes[i];
        o += std::size_t(xi_i - yi_i + st.axes[i] - 1) * stride;
        stride *= st.odims[i];
      }
      if (st.kind[o] == 0) continue;
      double w;
      if (st.kind[o] == 1) {
        w = k(x, std::span<const double>(&st.center_xi[o * st.n], st.n));
      } else {
        double fine = 0;
        for (std::size_t j = st.sub_start[o]; j < st.sub_start[o + 1]; ++j)
          fine += k(x, std::span<const double>(&st.sub_xi[j * st.n], st.n));
        w = fine / 16.0;
      }
      const double factor = a ? (a->values[iy] - ax) : 1.0;
      acc += w * factor * f.values[iy];
    }
    out.values[ix] = acc * st.cellvol;
  });
}

OperatorResult run_transform(const kernel::VariableKernel& k,
                             const gridfn::GridFunction& f,
                             const gridfn::GridFunction* a,
                             const TruncationPolicy& pol) {
  if (k.dim() != f.grid.dim())
    throw std::invalid_argument("transform: kernel and grid dimensions differ");
  if (a && !(a->grid == f.grid))
    throw std::invalid_argument("commutator: a and f live on different grids");
  const Box box = resolve_box(f.grid, pol);
  if (!(pol.epsilon < box_inradius(box, k.profile)))
    throw std::invalid_argument("transform: cutoff exceeds the evaluation box inradius");
  const Stencil st = build_stencil(f.grid, k.profile, pol.epsilon);
  OperatorResult res;
  res.epsilon = pol.epsilon;
  res.straddling_cells = st.straddling;
  res.evaluated = evaluation_mask(f.grid, box, k.profile, pol.epsilon);
  res.output.grid = f.grid;
  res.output.values.assign(f.grid.size(), 0.0);
  if (std::none_of(res.evaluated.begin(), res.evaluated.end(),
                   [](std::uint8_t v) { return v != 0; }))
    throw UnderResolved("cutoff leaves no evaluation points inside the box");
  const auto fw = box_weighted(f, box);

  if (!k.x_dependent) {
    const Vec origin(k.dim(), 0.0);
    auto eval = [&](std::span<const double> xi) { return k(origin, xi); };
    double err = 0;
    const auto w = stencil_weights(st, eval, &err);
    res.truncation_error_estimate = err;
    apply_weights(st, w, fw, a, res.evaluated, res.output);
  } else {
    // error proxy from the kernel slice at the first evaluation point
    for (std::size_t i = 0; i < res.evaluated.size(); ++i)
      if (res.evaluated[i]) {
        const Vec x0 = f.grid.point(i);
        auto eval = [&](std::span<const double> xi) { return k(x0, xi); };
        double err = 0;
        stencil_weights(st, eval, &err);
        res.truncation_error_estimate = err;
        break;
      }
    apply_variable(st, k, fw, a, res.evaluated, res.output);
  }
  for (std::size_t i = 0; i < res.output.values.size(); ++i)
    if (res.evaluated[i] && !std::isfinite(res.output.values[i]))
      throw EvaluationError("transform produced a non-finite value");
  return res;
}

}  // namespace

std::size_t OperatorResult::evaluated_count() const {
  std::size_t c = 0;
  for (auto v : evaluated) c += v != 0;
  return c;
}

OperatorResult truncated_transform(const kernel::VariableKernel& k,
                                   const gridfn::GridFunction& f,
                                   const TruncationPolicy& pol) {
  return run_transform(k, f, nullptr, pol);
}

OperatorResult commutator(const gridfn::GridFunction& a, const kernel::VariableKernel& k,
                          const gridfn::GridFunction& f, const TruncationPolicy& pol) {
  return run_transform(k, f, &a, pol);
}

OperatorResult constant_transform(const harmonics::HarmonicBasis& basis, int s, int m,
                                  const metric::AnisotropyProfile& profile,
                                  const gridfn::GridFunction& f,
                                  const TruncationPolicy& pol) {
  if (m < 1)
    throw std::out_of_range("constant_transform requires degree m >= 1");
  return truncated_transform(harmonics::hsm_kernel(basis, s, m, profile), f, pol);
}

OperatorResult series_transform(const kernel::VariableKernel& k,
                                const gridfn::GridFunction& f,
                                const TruncationPolicy& pol, int max_degree) {
  if (max_degree < 2)
    throw std::invalid_argument("series_transform needs max_degree >= 2");
  if (k.dim() != f.grid.dim())
    throw std::invalid_argument("transform: kernel and grid dimensions differ");
  const int n = k.dim();
  const double alpha = k.profile.homogeneous_dimension;
  const auto basis = harmonics::HarmonicBasis::make(n, max_degree);
  const auto sphere = metric::sphere_quadrature(n, n == 2 ? 256 : 24);

  if (!k.x_dependent) {
    const Vec origin(n, 0.0);
    const auto coeffs = harmonics::expand(
        [&](std::span<const double> u) { return k(origin, u); }, basis, sphere);
    // one synthetic kernel carrying the whole truncated series; degree zero
    // is omitted (no cancellation, and any valid kernel has b_0 ~ 0)
    kernel::VariableKernel series;
    series.name = k.name + "-series";
    series.profile = k.profile;
    // flatten the coefficients in eval_all order, degree zero zeroed out
    std::vector<double> flat;
    flat.push_back(0.0);
    for (int m = 1; m <= max_degree; ++m)
      for (int s = 1; s <= harmonics::basis_dim(n, m); ++s)
        flat.push_back(coeffs.coefficient(s, m));
    series.evaluate = [basis, flat, profile = k.profile, alpha](
                          std::span<const double>, std::span<const double> xi) {
      double r = 0;
      const Vec bar = metric::sphere_projection(xi, profile, &r);
      thread_local std::vector<double> vals;
      basis.eval_all(bar, vals);
      double sum = 0;
      for (std::size_t i = 1; i < flat.size(); ++i) sum += flat[i] * vals[i];
      return sum * std::pow(r, -alpha);
    };
    auto res = run_transform(series, f, nullptr, pol);
    return res;
  }

  if (n != 2)
    throw UnsupportedDimension(
        "per-point series expansion is implemented for n = 2 kernels only");

  // x-dependent path: coefficients re-expanded at every evaluation point;
  // the angular geometry is shared through the stencil
  const Box box = resolve_box(f.grid, pol);
  if (!(pol.epsilon < box_inradius(box, k.profile)))
    throw std::invalid_argument("transform: cutoff exceeds the evaluation box inradius");
  const Stencil st = build_stencil(f.grid, k.profile, pol.epsilon);
  OperatorResult res;
  res.epsilon = pol.epsilon;
  res.straddling_cells = st.straddling;
  res.evaluated = evaluation_mask(f.grid, box, k.profile, pol.epsilon);
  res.output.grid = f.grid;
  res.output.values.assign(f.grid.size(), 0.0);
  const auto fw = box_weighted(f, box);

  // cached angle and rho^{-alpha} per center / subsample
  std::vector<double> ccos(st.offsets(), 0.0), csin(st.offsets(), 0.0),
      cpow(st.offsets(), 0.0);
  for (std::size_t o = 0; o < st.offsets(); ++o) {
    if (st.kind[o] == 0) continue;
    const double r = st.center_rho[o];
    if (st.kind[o] == 1) {
      double rr = 0;
      const Vec bar = metric::sphere_projection(
          std::span<const double>(&st.center_xi[o * st.n], st.n), k.profile, &rr);
      ccos[o] = bar[0];
      csin[o] = bar[1];
      cpow[o] = std::pow(r, -alpha);
    }
  }
  std::vector<double> scos(st.sub_rho.size()), ssin(st.sub_rho.size()),
      spow(st.sub_rho.size());
  for (std::size_t j = 0; j < st.sub_rho.size(); ++j) {
    double rr = 0;
    const Vec bar = metric::sphere_projection(
        std::span<const double>(&st.sub_xi[j * st.n], st.n), k.profile, &rr);
    scos[j] = bar[0];
    ssin[j] = bar[1];
    spow[j] = std::pow(rr, -alpha);
  }

  parallel_for(f.grid.size(), [&](std::size_t ix) {
    if (!res.evaluated[ix]) return;
    const Vec x = f.grid.point(ix);
    const auto coeffs = harmonics::expand(
        [&](std::span<const double> u) { return k(x, u); }, basis, sphere);
    // series value at (cos t, sin t): sum_m (bc_m cos mt + bs_m sin mt)/sqrt(pi)
    auto series_at = [&](double c, double s, double rpow) {
      double cm = c, sm = s, sum = 0;
      for (int m = 1; m <= max_degree; ++m) {
        sum += coeffs.coefficient(1, m) * cm + coeffs.coefficient(2, m) * sm;
        const double cn = cm * c - sm * s;
        sm = sm * c + cm * s;
        cm = cn;
      }
      return sum / kSqrtPi * rpow;
    };
    double acc = 0;
    const int N1 = st.axes[0], N2 = st.axes[1];
    const int i1 = static_cast<int>(ix) / N2, i2 = static_cast<int>(ix) % N2;
    for (int j1 = 0; j1 < N1; ++j1)
      for (int j2 = 0; j2 < N2; ++j2) {
        const std::size_t o =
            std::size_t(i1 - j1 + N1 - 1) * (2 * N2 - 1) + std::size_t(i2 - j2 + N2 - 1);
        if (st.kind[o] == 0) continue;
        double w;
        if (st.kind[o] == 1) {
          w = series_at(ccos[o], csin[o], cpow[o]);
        } else {
          double fine = 0;
          for (std::size_t j = st.sub_start[o]; j < st.sub_start[o + 1]; ++j)
            fine += series_at(scos[j], ssin[j], spow[j]);
          w = fine / 16.0;
        }
        acc += w * fw.values[std::size_t(j1) * N2 + j2];
      }
    res.output.values[ix] = acc * st.cellvol;
  });
  return res;
}

double hormander_pointwise(const harmonics::HarmonicBasis& basis, int s, int m,
                           const metric::AnisotropyProfile& profile,
                           const metric::Ellipsoid& e, int samples) {
  if (samples < 1000)
    throw std::invalid_argument("hormander_pointwise needs at least 1000 samples");
  if (m < 1) throw std::out_of_range("hormander_pointwise requires degree m >= 1");
  const auto H = harmonics::hsm_kernel(basis, s, m, profile);
  const int n = profile.dim();
  const double alpha = profile.homogeneous_dimension;
  const double r = e.radius;
  Rng rng(777);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss;
  const Vec origin(n, 0.0);

  double sup = 0;
  for (int t = 0; t < samples; ++t) {
    // x uniform in e by rejection from the bounding box
    Vec x(n), d(n);
    double dist = 0;
    for (;;) {
      for (int i = 0; i < n; ++i) {
        const double semi = std::pow(r, profile.exponents[i]);
        x[i] = e.center[i] + (2.0 * unit(rng) - 1.0) * semi;
      }
      if (!metric::ellipsoid_contains(e, x)) continue;
      for (int i = 0; i < n; ++i) d[i] = x[i] - e.center[i];
      dist = metric::rho(d, profile);
      if (dist > 1e-9 * r) break;
    }

    // y at rho-distance in (2r, 64r] from the center, log-uniform radius
    Vec dir(n);
    double nrm = 0;
    do {
      for (auto& v : dir) v = gauss(rng);
      nrm = euclidean_norm(dir);
    } while (nrm < 1e-6);
    for (auto& v : dir) v /= nrm;
    const double ry = 2.0 * r * std::exp(std::max(unit(rng), 1e-12) * std::log(32.0));
    const Vec step = metric::dilate(ry, dir, profile);
    Vec y(n), xy(n), cy(n);
    for (int i = 0; i < n; ++i) {
      y[i] = e.center[i] + step[i];
      xy[i] = x[i] - y[i];
      cy[i] = e.center[i] - y[i];
    }
    const double diff = std::abs(H(origin, xy) - H(origin, cy));
    const double ratio =
        diff * std::pow(ry, alpha + 1.0) / (std::pow(double(m), n / 2.0) * dist);
    sup = std::max(sup, ratio);
  }
  return sup;
}

double hormander_integral(const harmonics::HarmonicBasis& basis, int s, int m,
                          const metric::AnisotropyProfile& profile,
                          std::span<const double> x, double r_max) {
  const double rho_x = metric::rho(x, profile);
  if (rho_x <= 0) throw SingularPoint("hormander_integral needs x != 0");
  const double r_lo = 4.0 * rho_x;
  if (!(r_max > r_lo))
    throw std::invalid_argument("hormander_integral: r_max must exceed 4 rho(x)");
  const auto H = harmonics::hsm_kernel(basis, s, m, profile);
  const int n = profile.dim();
  const Vec origin(n, 0.0);
  const auto sphere = metric::sphere_quadrature(n, n == 2 ? 96 : 12);

  // log-radial trapezoid: dy = r^alpha (sum_i alpha_i theta_i^2) du dsigma
  const double u_lo = std::log(r_lo), u_hi = std::log(r_max);
  const int octaves = std::max(1, (int)std::ceil((u_hi - u_lo) / std::log(2.0)));
  const int radial = 24 * octaves + 1;
  const double du = (u_hi - u_lo) / (radial - 1);

  double total = 0;
  for (int iu = 0; iu < radial; ++iu) {
    const double r = std::exp(u_lo + iu * du);
    const double wu = (iu == 0 || iu == radial - 1) ? 0.5 * du : du;
    const double ralpha = std::pow(r, profile.homogeneous_dimension);
    double shell = 0;
    for (std::size_t q = 0; q < sphere.size(); ++q) {
      const auto& th = sphere.nodes[q];
      double aform = 0;
      for (int i = 0; i < n; ++i) aform += profile.exponents[i] * th[i] * th[i];
      const Vec y = metric::dilate(r, th, profile);
      Vec ymx(n);
      for (int i = 0; i < n; ++i) ymx[i] = y[i] - x[i];
      shell += sphere.weights[q] * aform * std::abs(H(origin, ymx) - H(origin, y));
    }
    total += wu * ralpha * shell;
  }
  return total;
}

}  // namespace aniso::operators
