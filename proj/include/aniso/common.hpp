#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace aniso {

using Vec = std::vector<double>;
using Rng = std::mt19937_64;

// Run fn(i) for i in [0, count). Work is split into contiguous blocks, one
// per worker; fn must only write state owned by index i so results do not
// depend on the thread count. Thread count is capped by ANISO_SIO_THREADS.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

// Effective worker count (>= 1).
int worker_count();

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double euclidean_norm(std::span<const double> x) {
  double s = 0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

}  // namespace aniso
