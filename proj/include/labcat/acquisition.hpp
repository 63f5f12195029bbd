#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "labcat/bounds.hpp"
#include "labcat/gp.hpp"
#include "labcat/transform.hpp"

namespace labcat {

/// Closed cube [-beta, beta]^d in transformed space.
struct TrustRegion {
  double beta = 0.5;

  [[nodiscard]] bool contains(const Eigen::Ref<const Eigen::VectorXd>& x_prime) const {
    return x_prime.size() == 0 || x_prime.cwiseAbs().maxCoeff() <= beta;
  }
};

/// beta = 1/d clamped to [0.1, 1].
inline double default_beta(int dim) {
  return std::clamp(1.0 / static_cast<double>(dim), 0.1, 1.0);
}

struct Proposal {
  Eigen::VectorXd x_prime;
  Eigen::VectorXd x_objective;
  double ei_value = 0.0;
  /// True when rejection sampling found no feasible candidate and the fallback was used.
  bool fallback = false;
};

inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// EI below the incumbent y' = 0 (minimization). Deterministic branch for sigma < 1e-12.
inline double expected_improvement(double mean, double variance) {
  const double sigma = std::sqrt(std::max(variance, 0.0));
  if (sigma < 1e-12) return std::max(0.0, -mean);
  const double z = -mean / sigma;
  return std::max(0.0, sigma * (z * normal_cdf(z) + normal_pdf(z)));
}

inline double expected_improvement(const GpSurrogate& gp,
                                   const Eigen::Ref<const Eigen::VectorXd>& x_prime) {
  const Prediction p = gp.predict(x_prime);
  return expected_improvement(p.mean, p.variance);
}

/// Pulls `x_prime` towards the origin until its objective image lies in `bounds`, then snaps
/// the image onto the box. The origin maps to the incumbent, which is feasible.
inline Proposal pull_into_bounds(const TransformState& state, const Bounds& bounds,
                                 const Eigen::VectorXd& x_prime) {
  const Eigen::VectorXd dir = state.rotation * state.scale.cwiseProduct(x_prime);
  double t = 1.0;
  for (Eigen::Index k = 0; k < dir.size(); ++k) {
    const double c = state.offset(k);
    if (c + dir(k) > bounds.upper()(k) && dir(k) > 0.0) {
      t = std::min(t, (bounds.upper()(k) - c) / dir(k));
    } else if (c + dir(k) < bounds.lower()(k) && dir(k) < 0.0) {
      t = std::min(t, (bounds.lower()(k) - c) / dir(k));
    }
  }
  t = std::max(t, 0.0);
  Proposal p;
  p.x_prime = t * x_prime;
  p.x_objective = bounds.clamp(state.offset + t * dir);
  p.fallback = true;
  return p;
}

/// Random-search EI maximization over the trust region intersected with the bounds.
///
/// Draws 10d uniform points in the trust region and rejects those whose objective image
/// leaves `bounds`. Up to 10 fresh batches are drawn if everything is rejected; after that
/// the last batch is pulled into the bounds along the ray to the incumbent. Ties keep the
/// first candidate drawn.
template <class Rng>
Proposal propose(const GpSurrogate& gp, const TrustRegion& tr, const TransformState& state,
                 const Bounds& bounds, Rng& rng) {
  const Eigen::Index d = state.scale.size();
  const Eigen::Index batch = 10 * d;
  constexpr int kExtraBatches = 10;
  std::uniform_real_distribution<double> coord(-tr.beta, tr.beta);

  Proposal best;
  bool found = false;
  std::vector<Eigen::VectorXd> last_batch;
  for (int attempt = 0; attempt <= kExtraBatches && !found; ++attempt) {
    last_batch.clear();
    for (Eigen::Index s = 0; s < batch; ++s) {
      Eigen::VectorXd xp(d);
      for (Eigen::Index k = 0; k < d; ++k) xp(k) = coord(rng);
      Eigen::VectorXd x = to_objective(state, xp);
      if (!bounds.contains(x)) {
        last_batch.push_back(std::move(xp));
        continue;
      }
      const double ei = expected_improvement(gp, xp);
      if (!found || ei > best.ei_value) {
        best.x_prime = std::move(xp);
        best.x_objective = std::move(x);
        best.ei_value = ei;
        found = true;
      }
    }
  }
  if (found) return best;

  for (const Eigen::VectorXd& xp : last_batch) {
    Proposal p = pull_into_bounds(state, bounds, xp);
    p.ei_value = expected_improvement(gp, p.x_prime);
    if (!found || p.ei_value > best.ei_value) {
      best = std::move(p);
      found = true;
    }
  }
  return best;
}

/// Greedy cache reduction: while more than rho*d observations are stored, drop the oldest
/// observations lying outside the trust region. The incumbent (at the origin) always stays.
inline void discard(ObservationSet& obs, const TrustRegion& tr, int rho, int d) {
  const Eigen::Index limit = static_cast<Eigen::Index>(rho) * d;
  if (obs.size() <= limit) return;
  std::vector<Eigen::Index> outside;
  for (Eigen::Index i = 0; i < obs.size(); ++i) {
    if (i != obs.min_index && !tr.contains(obs.inputs.col(i))) outside.push_back(i);
  }
  std::stable_sort(outside.begin(), outside.end(), [&obs](Eigen::Index a, Eigen::Index b) {
    return obs.ages[static_cast<std::size_t>(a)] < obs.ages[static_cast<std::size_t>(b)];
  });
  const auto excess = static_cast<std::size_t>(obs.size() - limit);
  if (outside.size() > excess) outside.resize(excess);
  obs.remove(std::move(outside));
}

}  // namespace labcat
