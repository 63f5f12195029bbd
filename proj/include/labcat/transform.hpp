#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "labcat/bounds.hpp"
#include "labcat/errors.hpp"

namespace labcat {

/// Affine map between objective space and transformed space:
///   x = R * diag(scale) * x' + offset,   y = out_scale * y' + out_offset.
struct TransformState {
  Eigen::MatrixXd rotation;
  Eigen::VectorXd scale;
  Eigen::VectorXd offset;
  double out_scale = 1.0;
  double out_offset = 0.0;

  static TransformState identity(int dim) {
    TransformState s;
    s.rotation = Eigen::MatrixXd::Identity(dim, dim);
    s.scale = Eigen::VectorXd::Ones(dim);
    s.offset = Eigen::VectorXd::Zero(dim);
    return s;
  }

  [[nodiscard]] int dim() const { return static_cast<int>(scale.size()); }

  [[nodiscard]] double orthogonality_error() const {
    const Eigen::Index d = rotation.rows();
    return (rotation.transpose() * rotation - Eigen::MatrixXd::Identity(d, d)).norm();
  }
};

/// Transformed observations. Columns of `inputs` pair with entries of `outputs` and `ages`.
struct ObservationSet {
  Eigen::MatrixXd inputs;
  Eigen::VectorXd outputs;
  std::vector<std::uint64_t> ages;
  Eigen::Index min_index = 0;

  [[nodiscard]] Eigen::Index size() const { return inputs.cols(); }
  [[nodiscard]] Eigen::Index dim() const { return inputs.rows(); }

  /// Lowest index among the minimal outputs.
  void refresh_min_index() {
    min_index = 0;
    for (Eigen::Index i = 1; i < outputs.size(); ++i) {
      if (outputs(i) < outputs(min_index)) min_index = i;
    }
  }

  void append(const Eigen::Ref<const Eigen::VectorXd>& x_prime, double y_prime,
              std::uint64_t age) {
    const Eigen::Index n = size();
    inputs.conservativeResize(x_prime.size(), n + 1);
    inputs.col(n) = x_prime;
    outputs.conservativeResize(n + 1);
    outputs(n) = y_prime;
    ages.push_back(age);
    if (n == 0 || y_prime < outputs(min_index)) min_index = n;
  }

  /// Removes the given columns (any order, no duplicates).
  void remove(std::vector<Eigen::Index> indices) {
    if (indices.empty()) return;
    std::vector<bool> drop(static_cast<std::size_t>(size()), false);
    for (const Eigen::Index i : indices) drop[static_cast<std::size_t>(i)] = true;
    const Eigen::Index keep = size() - static_cast<Eigen::Index>(indices.size());
    Eigen::MatrixXd new_inputs(dim(), keep);
    Eigen::VectorXd new_outputs(keep);
    std::vector<std::uint64_t> new_ages;
    new_ages.reserve(static_cast<std::size_t>(keep));
    const bool min_dropped = drop[static_cast<std::size_t>(min_index)];
    Eigen::Index new_min = 0;
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < size(); ++i) {
      if (drop[static_cast<std::size_t>(i)]) continue;
      if (i == min_index) new_min = k;
      new_inputs.col(k) = inputs.col(i);
      new_outputs(k) = outputs(i);
      new_ages.push_back(ages[static_cast<std::size_t>(i)]);
      ++k;
    }
    inputs = std::move(new_inputs);
    outputs = std::move(new_outputs);
    ages = std::move(new_ages);
    if (min_dropped) {
      refresh_min_index();
    } else {
      min_index = new_min;
    }
  }
};

inline Eigen::VectorXd to_objective(const TransformState& state,
                                    const Eigen::Ref<const Eigen::VectorXd>& x_prime) {
  return state.rotation * state.scale.cwiseProduct(x_prime) + state.offset;
}

inline Eigen::VectorXd from_objective(const TransformState& state,
                                      const Eigen::Ref<const Eigen::VectorXd>& x) {
  return (state.rotation.transpose() * (x - state.offset)).cwiseQuotient(state.scale);
}

inline double output_to_objective(const TransformState& state, double y_prime) {
  return state.out_scale * y_prime + state.out_offset;
}

inline double output_from_objective(const TransformState& state, double y) {
  return (y - state.out_offset) / state.out_scale;
}

/// Reconstructs objective-space inputs R S X' + c 1^T for every stored observation.
inline Eigen::MatrixXd reconstruct_inputs(const TransformState& state, const ObservationSet& obs) {
  Eigen::MatrixXd x = state.rotation * (state.scale.asDiagonal() * obs.inputs);
  x.colwise() += state.offset;
  return x;
}

/// Initial transform from the domain bounds: centred on the box midpoint, scaled so the
/// box maps to [-1, 1]^d, outputs min-max normalized.
inline std::pair<ObservationSet, TransformState> init_from_bounds(const Eigen::MatrixXd& x0,
                                                                  const Eigen::VectorXd& y0,
                                                                  const Bounds& bounds) {
  if (x0.rows() != bounds.dim() || x0.cols() != y0.size()) {
    throw DimensionMismatch("init_from_bounds: design does not match bounds/outputs");
  }
  if (x0.cols() < 2) throw DimensionMismatch("init_from_bounds: need at least two observations");
  const double y_min = y0.minCoeff();
  const double y_max = y0.maxCoeff();
  if (!(y_max > y_min)) throw DegenerateOutputs("initial design has constant outputs");

  TransformState state = TransformState::identity(bounds.dim());
  state.offset = bounds.midpoint();
  state.scale = bounds.half_widths();
  state.out_scale = y_max - y_min;
  state.out_offset = y_min;

  ObservationSet obs;
  obs.inputs = (x0.colwise() - state.offset).array().colwise() / state.scale.array();
  obs.outputs = (y0.array() - y_min) / (y_max - y_min);
  obs.ages.resize(static_cast<std::size_t>(x0.cols()));
  std::iota(obs.ages.begin(), obs.ages.end(), std::uint64_t{0});
  obs.refresh_min_index();
  return {std::move(obs), std::move(state)};
}

/// Min-max renormalization of the transformed outputs with the matching update of a and b.
inline void normalize_outputs(TransformState& state, ObservationSet& obs) {
  if (obs.size() < 2) throw DegenerateOutputs("normalization needs at least two observations");
  const double lo = obs.outputs.minCoeff();
  const double hi = obs.outputs.maxCoeff();
  const double range = hi - lo;
  if (!(range >= 1e-300)) throw DegenerateOutputs("transformed outputs have zero range");
  obs.outputs = (obs.outputs.array() - lo) / range;
  state.out_offset += lo * state.out_scale;
  state.out_scale *= range;
}

/// Moves the minimum candidate to the origin and shifts the offset to compensate.
inline void recenter(TransformState& state, ObservationSet& obs) {
  const Eigen::VectorXd x_min = obs.inputs.col(obs.min_index);
  obs.inputs.colwise() -= x_min;
  state.offset += state.rotation * state.scale.cwiseProduct(x_min);
}

/// Flips each column so its largest-magnitude entry (first one on ties) is positive.
inline void canonicalize_signs(Eigen::MatrixXd& u) {
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < u.rows(); ++i) {
      if (std::abs(u(i, j)) > std::abs(u(arg, j))) arg = i;
    }
    if (u(arg, j) < 0.0) u.col(j) = -u.col(j);
  }
}

/// Left singular vectors of S X' W with W = diag(1 - y'), sign-canonicalized.
inline Eigen::MatrixXd weighted_principal_axes(const TransformState& state,
                                               const ObservationSet& obs) {
  const Eigen::VectorXd weights = (1.0 - obs.outputs.array()).matrix();
  const Eigen::MatrixXd weighted =
      state.scale.asDiagonal() * obs.inputs * weights.asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(weighted, Eigen::ComputeFullU);
  Eigen::MatrixXd u = svd.matrixU();
  canonicalize_signs(u);
  return u;
}

/// Re-orthogonalizes R through its own SVD once drift exceeds 1e-8.
inline void reorthogonalize_if_needed(TransformState& state) {
  if (state.orthogonality_error() <= 1e-8) return;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(state.rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
  state.rotation = svd.matrixU() * svd.matrixV().transpose();
}

/// Aligns the weighted principal components of the (recentred) observations with the
/// coordinate axes: X' <- S^-1 U^T S X', R <- R U.
inline void rotate(TransformState& state, ObservationSet& obs) {
  const Eigen::MatrixXd u = weighted_principal_axes(state, obs);
  const Eigen::MatrixXd scaled = state.scale.asDiagonal() * obs.inputs;
  obs.inputs = u.transpose() * scaled;
  obs.inputs.array().colwise() /= state.scale.array();
  state.rotation = state.rotation * u;
  reorthogonalize_if_needed(state);
}

/// Divides each coordinate by its length-scale and absorbs the factor into S.
inline void rescale(TransformState& state, ObservationSet& obs,
                    const Eigen::Ref<const Eigen::VectorXd>& lengthscales) {
  if (lengthscales.size() != obs.dim()) throw DimensionMismatch("rescale: lengthscale dimension");
  obs.inputs.array().colwise() /= lengthscales.array();
  state.scale = state.scale.cwiseProduct(lengthscales);
}

}  // namespace labcat
