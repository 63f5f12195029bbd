#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "labcat/bounds.hpp"

namespace labcat {

/// Stratum index of `x` when [lo, hi] is split into `n` equal cells; the top edge belongs
/// to the last cell.
inline int lhs_stratum(double x, double lo, double hi, int n) {
  const int s = static_cast<int>(std::floor((x - lo) / (hi - lo) * n));
  return std::clamp(s, 0, n - 1);
}

/// Plain Latin hypercube: per dimension an independent random permutation of the strata,
/// one uniform draw inside each stratum. Returns a d x n matrix in objective space.
template <class Rng>
Eigen::MatrixXd latin_hypercube(const Bounds& bounds, int n_points, Rng& rng) {
  const int d = bounds.dim();
  Eigen::MatrixXd points(d, n_points);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<int> perm(static_cast<std::size_t>(n_points));
  for (int i = 0; i < d; ++i) {
    const double lo = bounds.lower()(i);
    const double hi = bounds.upper()(i);
    const double width = (hi - lo) / n_points;
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int j = 0; j < n_points; ++j) {
      const int stratum = perm[static_cast<std::size_t>(j)];
      double x = std::min(lo + (stratum + unit(rng)) * width, hi);
      // Rounding can push a draw across the upper cell edge.
      while (x > lo && std::floor((x - lo) / (hi - lo) * n_points) > stratum) {
        x = std::nextafter(x, lo);
      }
      while (x < hi && std::floor((x - lo) / (hi - lo) * n_points) < stratum) {
        x = std::nextafter(x, hi);
      }
      points(i, j) = x;
    }
  }
  return points;
}

}  // namespace labcat
