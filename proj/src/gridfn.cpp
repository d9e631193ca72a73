#include "aniso/gridfn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "aniso/errors.hpp"

namespace aniso::gridfn {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Comma-separated doubles; `what` names the field in error messages.
std::vector<double> parse_doubles(const std::string& text, const char* what, long line) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    const std::string piece = text.substr(pos, comma - pos);
    char* end = nullptr;
    const double v = std::strtod(piece.c_str(), &end);
    if (end == piece.c_str() || *end != '\0' || !std::isfinite(v))
      throw ParseError(std::string("bad ") + what + " value '" + piece + "'", line);
    out.push_back(v);
    pos = comma + 1;
    if (comma == text.size()) break;
  }
  return out;
}

std::vector<int> parse_ints(const std::string& text, const char* what, long line) {
  std::vector<int> out;
  for (double v : parse_doubles(text, what, line)) {
    if (v != std::floor(v) || v < 2 || v > 1 << 20)
      throw ParseError(std::string("bad ") + what + " value", line);
    out.push_back(static_cast<int>(v));
  }
  return out;
}

// header fields look like `key=v1,v2,...`; returns the part after '='.
std::string header_field(const std::string& header, const std::string& key, long line) {
  const std::string tag = key + "=";
  const std::size_t at = header.find(tag);
  if (at == std::string::npos)
    throw ParseError("header missing '" + key + "='", line);
  std::size_t end = header.find(' ', at);
  if (end == std::string::npos) end = header.size();
  return header.substr(at + tag.size(), end - at - tag.size());
}

}  // namespace

std::size_t Grid::size() const {
  std::size_t s = 1;
  for (int a : axes) s *= static_cast<std::size_t>(a);
  return s;
}

double Grid::spacing(int axis) const {
  return (upper[axis] - lower[axis]) / (axes[axis] - 1);
}

double Grid::min_spacing() const {
  double h = spacing(0);
  for (int i = 1; i < dim(); ++i) h = std::min(h, spacing(i));
  return h;
}

std::size_t Grid::flat_index(std::span<const int> multi) const {
  std::size_t flat = 0;
  for (int i = 0; i < dim(); ++i) flat = flat * axes[i] + multi[i];
  return flat;
}

std::vector<int> Grid::multi_index(std::size_t flat) const {
  std::vector<int> multi(dim());
  for (int i = dim() - 1; i >= 0; --i) {
    multi[i] = static_cast<int>(flat % axes[i]);
    flat /= axes[i];
  }
  return multi;
}

double Grid::coordinate(int axis, int i) const {
  return lower[axis] + spacing(axis) * i;
}

Vec Grid::point(std::size_t flat) const {
  Vec x(dim());
  for (int i = dim() - 1; i >= 0; --i) {
    x[i] = coordinate(i, static_cast<int>(flat % axes[i]));
    flat /= axes[i];
  }
  return x;
}

Grid Grid::make(std::vector<int> axes, Vec lower, Vec upper) {
  if (axes.empty() || axes.size() != lower.size() || axes.size() != upper.size())
    throw std::invalid_argument("grid: axes/lower/upper must share a nonzero size");
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i] < 2)
      throw std::invalid_argument("grid: need at least 2 points per axis");
    if (!(lower[i] < upper[i]))
      throw std::invalid_argument("grid: lower must be strictly below upper");
  }
  Grid g;
  g.axes = std::move(axes);
  g.lower = std::move(lower);
  g.upper = std::move(upper);
  return g;
}

GridFunction sample(const Grid& grid,
                    const std::function<double(std::span<const double>)>& fn) {
  GridFunction f;
  f.grid = grid;
  f.values.assign(grid.size(), 0.0);
  parallel_for(grid.size(), [&](std::size_t i) { f.values[i] = fn(grid.point(i)); });
  return f;
}

double integrate(const GridFunction& f) {
  const Grid& g = f.grid;
  double cell = 1;
  for (int i = 0; i < g.dim(); ++i) cell *= g.spacing(i);
  double s = 0;
  for (std::size_t flat = 0; flat < g.size(); ++flat) {
    double w = 1;
    std::size_t rest = flat;
    for (int i = g.dim() - 1; i >= 0; --i) {
      const int idx = static_cast<int>(rest % g.axes[i]);
      rest /= g.axes[i];
      if (idx == 0 || idx == g.axes[i] - 1) w *= 0.5;
    }
    s += w * f.values[flat];
  }
  return s * cell;
}

double lp_norm(const GridFunction& f, double p) {
  if (std::isinf(p)) {
    double m = 0;
    for (double v : f.values) m = std::max(m, std::abs(v));
    return m;
  }
  if (!(p >= 1)) throw std::invalid_argument("lp_norm: p must be >= 1 or infinity");
  GridFunction pow_f = f;
  for (double& v : pow_f.values) v = std::pow(std::abs(v), p);
  return std::pow(integrate(pow_f), 1.0 / p);
}

void write_csv(const GridFunction& f, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  const Grid& g = f.grid;
  out << "# n=" << g.dim() << " axes=";
  for (int i = 0; i < g.dim(); ++i) out << (i ? "," : "") << g.axes[i];
  out << " lower=";
  for (int i = 0; i < g.dim(); ++i) out << (i ? "," : "") << fmt17(g.lower[i]);
  out << " upper=";
  for (int i = 0; i < g.dim(); ++i) out << (i ? "," : "") << fmt17(g.upper[i]);
  out << "\n";
  for (std::size_t flat = 0; flat < g.size(); ++flat) {
    const Vec x = g.point(flat);
    for (double c : x) out << fmt17(c) << ',';
    out << fmt17(f.values[flat]) << "\n";
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

GridFunction read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file", 1);
  if (line.rfind("# ", 0) != 0) throw ParseError("missing '# ' header", 1);

  const int n = static_cast<int>(parse_ints(header_field(line, "n", 1), "n", 1).at(0));
  auto axes = parse_ints(header_field(line, "axes", 1), "axes", 1);
  auto lower = parse_doubles(header_field(line, "lower", 1), "lower", 1);
  auto upper = parse_doubles(header_field(line, "upper", 1), "upper", 1);
  if (static_cast<int>(axes.size()) != n || static_cast<int>(lower.size()) != n ||
      static_cast<int>(upper.size()) != n)
    throw ParseError("header sizes disagree with n", 1);

  GridFunction f;
  f.grid = Grid::make(std::move(axes), std::move(lower), std::move(upper));
  f.values.reserve(f.grid.size());

  long lineno = 1;
  std::size_t flat = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto row = parse_doubles(line, "row", lineno);
    if (static_cast<int>(row.size()) != n + 1)
      throw ParseError("expected " + std::to_string(n + 1) + " fields, got " +
                           std::to_string(row.size()),
                       lineno);
    if (flat >= f.grid.size()) throw ParseError("more rows than grid points", lineno);
    const Vec x = f.grid.point(flat);
    for (int i = 0; i < n; ++i) {
      const double tol = 1e-9 * f.grid.spacing(i);
      if (std::abs(row[i] - x[i]) > tol)
        throw ParseError("coordinate " + std::to_string(i + 1) + " off-grid", lineno);
    }
    f.values.push_back(row[n]);
    ++flat;
  }
  if (flat != f.grid.size())
    throw ParseError("expected " + std::to_string(f.grid.size()) + " rows, got " +
                         std::to_string(flat),
                     0);
  return f;
}

}  // namespace aniso::gridfn
