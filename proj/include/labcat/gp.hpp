#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "labcat/errors.hpp"

namespace labcat {

/// Hyperparameters of the squared-exponential kernel with one length-scale per input
/// coordinate (ARD).
struct KernelParams {
  Eigen::VectorXd lengthscales;
  double signal_variance = 1.0;
  double noise_variance = 0.0;

  [[nodiscard]] bool valid() const {
    if (lengthscales.size() == 0) return false;
    for (Eigen::Index i = 0; i < lengthscales.size(); ++i) {
      if (!(lengthscales(i) > 0.0) || !std::isfinite(lengthscales(i))) return false;
    }
    return signal_variance > 0.0 && noise_variance >= 0.0 && std::isfinite(signal_variance) &&
           std::isfinite(noise_variance);
  }
};

/// sigma_f^2 * exp(-0.5 * sum_i (xp_i - xq_i)^2 / l_i^2), plus the nugget when `same_index`.
inline double kernel_se_ard(const Eigen::Ref<const Eigen::VectorXd>& xp,
                            const Eigen::Ref<const Eigen::VectorXd>& xq, const KernelParams& params,
                            bool same_index) {
  double r2 = 0.0;
  for (Eigen::Index i = 0; i < xp.size(); ++i) {
    const double diff = (xp(i) - xq(i)) / params.lengthscales(i);
    r2 += diff * diff;
  }
  double k = params.signal_variance * std::exp(-0.5 * r2);
  if (same_index) k += params.noise_variance;
  return k;
}

struct FitOptions {
  /// Nugget as a fraction of the signal variance.
  double nugget_ratio = 1e-6;
  /// Escalation stops once the nugget ratio would exceed this value.
  double max_nugget_ratio = 1e-2;
  double min_signal_std = 1e-8;
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

/// Exact GP regression with a constant mean, fixed signal variance and fixed nugget.
/// Immutable once fitted.
class GpSurrogate {
 public:
  /// Mean is the target average, sigma_f the population standard deviation of the targets.
  /// Throws CholeskyFailure when even the largest permitted nugget leaves K indefinite.
  static GpSurrogate fit(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                         const Eigen::VectorXd& lengthscales, const FitOptions& options = {}) {
    if (inputs.cols() < 1) throw DimensionMismatch("GP fit needs at least one observation");
    if (inputs.cols() != targets.size()) {
      throw DimensionMismatch("GP fit: input count does not match target count");
    }
    if (inputs.rows() != lengthscales.size()) {
      throw DimensionMismatch("GP fit: lengthscale dimension does not match inputs");
    }
    for (Eigen::Index i = 0; i < targets.size(); ++i) {
      if (!std::isfinite(targets(i))) throw DimensionMismatch("GP fit: non-finite target");
    }

    GpSurrogate gp;
    gp.inputs_ = inputs;
    gp.targets_ = targets;
    gp.options_ = options;
    gp.mean_ = targets.mean();
    const double pop_var = (targets.array() - gp.mean_).square().mean();
    const double sigma_f = std::max(std::sqrt(pop_var), options.min_signal_std);
    gp.params_.lengthscales = lengthscales;
    gp.params_.signal_variance = sigma_f * sigma_f;
    gp.factorize();
    return gp;
  }

  /// Same data and options, new length-scales.
  [[nodiscard]] GpSurrogate with_lengthscales(const Eigen::VectorXd& lengthscales) const {
    return fit(inputs_, targets_, lengthscales, options_);
  }

  /// Posterior mean and latent (nugget-free) variance, clamped to be non-negative.
  [[nodiscard]] Prediction predict(const Eigen::Ref<const Eigen::VectorXd>& x_star) const {
    const Eigen::Index n = inputs_.cols();
    Eigen::VectorXd k_star(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      k_star(i) = kernel_se_ard(inputs_.col(i), x_star, params_, false);
    }
    Prediction p;
    p.mean = mean_ + k_star.dot(alpha_);
    const Eigen::VectorXd v = chol_.triangularView<Eigen::Lower>().solve(k_star);
    double var = params_.signal_variance - v.squaredNorm();
    if (var < 1e-12) var = 0.0;
    p.variance = var;
    return p;
  }

  [[nodiscard]] Eigen::Index size() const { return inputs_.cols(); }
  [[nodiscard]] Eigen::Index dim() const { return inputs_.rows(); }
  [[nodiscard]] const Eigen::MatrixXd& inputs() const { return inputs_; }
  [[nodiscard]] const Eigen::VectorXd& targets() const { return targets_; }
  [[nodiscard]] double mean_const() const { return mean_; }
  [[nodiscard]] const KernelParams& params() const { return params_; }
  [[nodiscard]] const Eigen::MatrixXd& chol() const { return chol_; }
  [[nodiscard]] const Eigen::VectorXd& alpha() const { return alpha_; }
  [[nodiscard]] const FitOptions& options() const { return options_; }

  /// Full Gram matrix including the nugget on the diagonal.
  [[nodiscard]] Eigen::MatrixXd gram() const {
    const Eigen::Index n = inputs_.cols();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) {
        k(i, j) = kernel_se_ard(inputs_.col(i), inputs_.col(j), params_, i == j);
        k(j, i) = k(i, j);
      }
    }
    return k;
  }

  /// K^{-1} from the Cholesky factor.
  [[nodiscard]] Eigen::MatrixXd gram_inverse() const {
    const Eigen::Index n = inputs_.cols();
    Eigen::MatrixXd inv = Eigen::MatrixXd::Identity(n, n);
    chol_.triangularView<Eigen::Lower>().solveInPlace(inv);
    chol_.triangularView<Eigen::Lower>().transpose().solveInPlace(inv);
    return inv;
  }

  /// log|K| from the Cholesky diagonal.
  [[nodiscard]] double log_det() const {
    return 2.0 * chol_.diagonal().array().log().sum();
  }

 private:
  void factorize() {
    double ratio = options_.nugget_ratio;
    while (true) {
      params_.noise_variance = ratio * params_.signal_variance;
      const Eigen::MatrixXd k = gram();
      Eigen::LLT<Eigen::MatrixXd> llt(k);
      if (llt.info() == Eigen::Success) {
        Eigen::MatrixXd l = llt.matrixL();
        if (l.diagonal().allFinite() && (l.diagonal().array() > 0.0).all()) {
          chol_ = std::move(l);
          alpha_ = llt.solve((targets_.array() - mean_).matrix());
          return;
        }
      }
      ratio *= 10.0;
      if (ratio > options_.max_nugget_ratio * (1.0 + 1e-12)) {
        throw CholeskyFailure("Gram matrix is not positive definite after nugget escalation");
      }
    }
  }

  Eigen::MatrixXd inputs_;
  Eigen::VectorXd targets_;
  double mean_ = 0.0;
  KernelParams params_;
  Eigen::MatrixXd chol_;
  Eigen::VectorXd alpha_;
  FitOptions options_;
};

/// Log-likelihood augmented with a Gaussian prior on ln(l_i) centred at 0. An infinite
/// `sigma_prior` drops the prior term.
inline double log_likelihood(const GpSurrogate& gp, double sigma_prior) {
  const Eigen::VectorXd resid = gp.targets().array() - gp.mean_const();
  const double n = static_cast<double>(gp.size());
  double ll = -0.5 * resid.dot(gp.alpha()) - 0.5 * gp.log_det() -
              0.5 * n * std::log(2.0 * std::numbers::pi);
  const double inv_var = 1.0 / (sigma_prior * sigma_prior);
  for (Eigen::Index i = 0; i < gp.dim(); ++i) {
    const double log_l = std::log(gp.params().lengthscales(i));
    ll -= 0.5 * log_l * log_l * inv_var;
  }
  return ll;
}

struct LikelihoodDerivatives {
  double value = 0.0;
  Eigen::VectorXd jacobian;
  Eigen::MatrixXd hessian;
};

/// Value, gradient and Hessian of the augmented log-likelihood with respect to ln(l).
///
/// With D_i = dK/dln(l_i) = K_se o R_i, R_i[p,q] = (x_pi - x_qi)^2 / l_i^2 and
/// D_ij = K_se o R_i o R_j (i != j), D_ii = D_i o (R_i - 2):
///   J_i  = 1/2 a'D_i a - 1/2 tr(K^-1 D_i)
///   H_ij = 1/2 a'D_ij a - a'D_j K^-1 D_i a + 1/2 tr(K^-1 D_j K^-1 D_i) - 1/2 tr(K^-1 D_ij)
/// where a = K^-1 (y - m). The prior contributes -ln(l)/s^2 and -I/s^2.
inline LikelihoodDerivatives likelihood_derivatives(const GpSurrogate& gp, double sigma_prior) {
  const Eigen::Index n = gp.size();
  const Eigen::Index d = gp.dim();
  const Eigen::MatrixXd& x = gp.inputs();
  const Eigen::VectorXd& ell = gp.params().lengthscales;
  const Eigen::VectorXd& alpha = gp.alpha();
  const Eigen::MatrixXd k_inv = gp.gram_inverse();

  std::vector<Eigen::MatrixXd> r(static_cast<std::size_t>(d), Eigen::MatrixXd::Zero(n, n));
  Eigen::MatrixXd k_se(n, n);
  for (Eigen::Index p = 0; p < n; ++p) {
    for (Eigen::Index q = 0; q <= p; ++q) {
      k_se(p, q) = kernel_se_ard(x.col(p), x.col(q), gp.params(), false);
      k_se(q, p) = k_se(p, q);
      for (Eigen::Index i = 0; i < d; ++i) {
        const double diff = (x(i, p) - x(i, q)) / ell(i);
        r[static_cast<std::size_t>(i)](p, q) = diff * diff;
        r[static_cast<std::size_t>(i)](q, p) = diff * diff;
      }
    }
  }

  std::vector<Eigen::MatrixXd> dk(static_cast<std::size_t>(d));
  std::vector<Eigen::MatrixXd> kinv_dk(static_cast<std::size_t>(d));
  std::vector<Eigen::VectorXd> dk_alpha(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto si = static_cast<std::size_t>(i);
    dk[si] = k_se.cwiseProduct(r[si]);
    kinv_dk[si] = k_inv * dk[si];
    dk_alpha[si] = dk[si] * alpha;
  }

  const double inv_var = 1.0 / (sigma_prior * sigma_prior);
  LikelihoodDerivatives out;
  out.value = log_likelihood(gp, sigma_prior);
  out.jacobian.resize(d);
  out.hessian.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto si = static_cast<std::size_t>(i);
    out.jacobian(i) = 0.5 * alpha.dot(dk_alpha[si]) - 0.5 * kinv_dk[si].trace() -
                      std::log(ell(i)) * inv_var;
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto si = static_cast<std::size_t>(i);
    for (Eigen::Index j = i; j < d; ++j) {
      const auto sj = static_cast<std::size_t>(j);
      Eigen::MatrixXd d2;
      if (i == j) {
        d2 = dk[si].cwiseProduct((r[si].array() - 2.0).matrix());
      } else {
        d2 = dk[si].cwiseProduct(r[sj]);
      }
      // tr(A B) = sum(A o B^T)
      const double tr_pair = kinv_dk[sj].cwiseProduct(kinv_dk[si].transpose()).sum();
      const double tr_second = k_inv.cwiseProduct(d2).sum();
      const double quad_second = alpha.dot(d2 * alpha);
      const double quad_pair = dk_alpha[sj].dot(k_inv * dk_alpha[si]);
      double h = 0.5 * quad_second - quad_pair + 0.5 * tr_pair - 0.5 * tr_second;
      if (i == j) h -= inv_var;
      out.hessian(i, j) = h;
      out.hessian(j, i) = h;
    }
  }
  return out;
}

/// Newton direction -H^{-1} J when H is negative definite (max eigenvalue < -1e-12),
/// otherwise the gradient J.
inline Eigen::VectorXd ascent_direction(const Eigen::VectorXd& jacobian,
                                        const Eigen::MatrixXd& hessian) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hessian);
  if (eig.info() == Eigen::Success && eig.eigenvalues().maxCoeff() < -1e-12) {
    const Eigen::MatrixXd& v = eig.eigenvectors();
    const Eigen::VectorXd coeffs = (v.transpose() * jacobian).cwiseQuotient(eig.eigenvalues());
    return -(v * coeffs);
  }
  return jacobian;
}

struct LineSearchOptions {
  double initial_step = 1.0;
  double shrink = 0.5;
  double armijo = 1e-4;
  int max_shrinks = 20;
  double log_lengthscale_min = -10.0;
  double log_lengthscale_max = 10.0;
};

/// Takes `n_steps` Newton/gradient ascent steps on the augmented log-likelihood in
/// log-length-scale space, each with a backtracking Armijo line search. Returns the new
/// length-scales; a failed line search leaves them unchanged.
inline Eigen::VectorXd hyperparameter_step(const GpSurrogate& gp, double sigma_prior, int n_steps,
                                           const LineSearchOptions& ls = {}) {
  GpSurrogate current = gp;
  Eigen::VectorXd log_ell = gp.params().lengthscales.array().log();
  for (int step = 0; step < n_steps; ++step) {
    const LikelihoodDerivatives der = likelihood_derivatives(current, sigma_prior);
    const Eigen::VectorXd dir = ascent_direction(der.jacobian, der.hessian);
    const double slope = der.jacobian.dot(dir);
    if (!std::isfinite(slope) || !(slope > 0.0)) break;

    double t = ls.initial_step;
    bool accepted = false;
    for (int k = 0; k <= ls.max_shrinks; ++k, t *= ls.shrink) {
      const Eigen::VectorXd trial =
          (log_ell + t * dir).cwiseMax(ls.log_lengthscale_min).cwiseMin(ls.log_lengthscale_max);
      try {
        GpSurrogate candidate = current.with_lengthscales(trial.array().exp().matrix());
        const double value = log_likelihood(candidate, sigma_prior);
        if (std::isfinite(value) && value >= der.value + ls.armijo * t * slope) {
          log_ell = trial;
          current = std::move(candidate);
          accepted = true;
          break;
        }
      } catch (const CholeskyFailure&) {
        // shrink and retry
      }
    }
    if (!accepted) break;
  }
  return log_ell.array().exp();
}

}  // namespace labcat
