#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "aniso/common.hpp"

namespace aniso::gridfn {

// Uniform tensor grid on the box [lower_i, upper_i], endpoints included,
// axes[i] >= 2 points per axis. Values are stored row-major with the last
// axis varying fastest.
struct Grid {
  std::vector<int> axes;
  Vec lower;
  Vec upper;

  int dim() const { return static_cast<int>(axes.size()); }
  std::size_t size() const;
  double spacing(int axis) const;

  // Smallest spacing over all axes.
  double min_spacing() const;

  std::size_t flat_index(std::span<const int> multi) const;
  std::vector<int> multi_index(std::size_t flat) const;
  Vec point(std::size_t flat) const;
  double coordinate(int axis, int i) const;

  static Grid make(std::vector<int> axes, Vec lower, Vec upper);

  bool operator==(const Grid&) const = default;
};

struct GridFunction {
  Grid grid;
  Vec values;

  double operator[](std::size_t flat) const { return values[flat]; }
  double& operator[](std::size_t flat) { return values[flat]; }
};

// Evaluates fn at every grid point (parallel, order-independent).
GridFunction sample(const Grid& grid, const std::function<double(std::span<const double>)>& fn);

// Trapezoid rule over the whole box.
double integrate(const GridFunction& f);

// (integral of |f|^p)^{1/p}; p = infinity gives the max norm.
double lp_norm(const GridFunction& f, double p);

// Writes `# n=<n> axes=<p1,...,pn> lower=<l1,...,ln> upper=<u1,...,un>` then one
// `x1,...,xn,value` row per point, 17 significant digits, row-major order.
void write_csv(const GridFunction& f, const std::string& path);

// Reads the format produced by write_csv. Throws ParseError (with the 1-based
// line number) on malformed headers, bad numbers, coordinate drift beyond
// 1e-9 * spacing, or a row-count mismatch.
GridFunction read_csv(const std::string& path);

}  // namespace aniso::gridfn
