#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <boost/math/constants/constants.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include "labcat/gp.hpp"
#include "labcat/optimizer.hpp"
#include "labcat/test_functions.hpp"
#include "labcat/transform.hpp"

namespace labcat {

struct CheckResult {
  std::string name;
  bool passed = false;
  /// Worst observed error and the tolerance it was held to.
  double worst = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

/// Random GP instance with n <= max_n points in d <= max_d dimensions.
template <class Rng>
GpSurrogate random_gp_instance(Rng& rng, int max_n = 8, int max_d = 4) {
  std::uniform_int_distribution<int> pick_n(2, max_n);
  std::uniform_int_distribution<int> pick_d(1, max_d);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  std::uniform_real_distribution<double> log_ell(std::log(0.3), std::log(3.0));
  const int n = pick_n(rng);
  const int d = pick_d(rng);
  Eigen::MatrixXd x(d, n);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = coord(rng);
  }
  Eigen::VectorXd y(n);
  for (Eigen::Index j = 0; j < n; ++j) y(j) = 0.5 * (coord(rng) + 1.0);
  Eigen::VectorXd ell(d);
  for (Eigen::Index i = 0; i < d; ++i) ell(i) = std::exp(log_ell(rng));
  return GpSurrogate::fit(x, y, ell);
}

namespace detail {

/// 50 significant digits: finite-difference round-off stays negligible even when K is
/// nearly singular.
using Wide = boost::multiprecision::cpp_bin_float_50;

/// Dense high-precision evaluation of the augmented log-likelihood at ln(l) = `log_ell`,
/// holding the data, mean, signal variance and nugget of `gp` fixed. Shares no code with
/// the production path.
inline Wide log_likelihood_reference(const GpSurrogate& gp, const std::vector<Wide>& log_ell,
                                     double sigma_prior) {
  const Eigen::MatrixXd& x = gp.inputs();
  const auto n = static_cast<std::size_t>(x.cols());
  const auto d = static_cast<std::size_t>(x.rows());
  const Wide sf2 = gp.params().signal_variance;
  const Wide nugget = gp.params().noise_variance;
  std::vector<Wide> inv_ell(d);
  for (std::size_t i = 0; i < d; ++i) inv_ell[i] = exp(-log_ell[i]);

  // Lower-triangular Cholesky factor of K, row-major n x n.
  std::vector<Wide> l(n * n, Wide(0));
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = 0; q <= p; ++q) {
      Wide r2 = 0;
      for (std::size_t i = 0; i < d; ++i) {
        const Wide t = (Wide(x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p))) -
                        Wide(x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q)))) *
                       inv_ell[i];
        r2 += t * t;
      }
      Wide v = sf2 * exp(-r2 / 2) + (p == q ? nugget : Wide(0));
      for (std::size_t m = 0; m < q; ++m) v -= l[p * n + m] * l[q * n + m];
      l[p * n + q] = (p == q) ? sqrt(v) : v / l[q * n + q];
    }
  }
  // z = L^-1 (y - m); the quadratic form is |z|^2.
  std::vector<Wide> z(n);
  Wide quad = 0, log_det = 0;
  for (std::size_t p = 0; p < n; ++p) {
    Wide v = Wide(gp.targets()(static_cast<Eigen::Index>(p))) - Wide(gp.mean_const());
    for (std::size_t m = 0; m < p; ++m) v -= l[p * n + m] * z[m];
    z[p] = v / l[p * n + p];
    quad += z[p] * z[p];
    log_det += 2 * log(l[p * n + p]);
  }
  const Wide pi = boost::math::constants::pi<Wide>();
  Wide out = -quad / 2 - log_det / 2 - Wide(n) * log(2 * pi) / 2;
  if (std::isfinite(sigma_prior)) {
    const Wide s2 = Wide(sigma_prior) * Wide(sigma_prior);
    for (std::size_t i = 0; i < d; ++i) out -= log_ell[i] * log_ell[i] / (2 * s2);
  }
  return out;
}

/// Central-difference gradient and Hessian at step h, in high precision.
inline void central_differences(const GpSurrogate& gp, double sigma_prior, const Wide& h,
                                std::vector<Wide>& jac, std::vector<Wide>& hess) {
  const auto d = static_cast<std::size_t>(gp.dim());
  std::vector<Wide> base(d);
  for (std::size_t i = 0; i < d; ++i) {
    base[i] = log(Wide(gp.params().lengthscales(static_cast<Eigen::Index>(i))));
  }
  const auto f = [&](std::size_t i, int si, std::size_t j, int sj) {
    std::vector<Wide> v = base;
    v[i] += si * h;
    v[j] += sj * h;
    return log_likelihood_reference(gp, v, sigma_prior);
  };
  const Wide f0 = log_likelihood_reference(gp, base, sigma_prior);
  jac.assign(d, Wide(0));
  hess.assign(d * d, Wide(0));
  for (std::size_t i = 0; i < d; ++i) {
    const Wide fp = f(i, 1, i, 0), fm = f(i, -1, i, 0);
    jac[i] = (fp - fm) / (2 * h);
    hess[i * d + i] = (fp - 2 * f0 + fm) / (h * h);
    for (std::size_t j = 0; j < i; ++j) {
      const Wide v = (f(i, 1, j, 1) - f(i, 1, j, -1) - f(i, -1, j, 1) + f(i, -1, j, -1)) /
                     (4 * h * h);
      hess[i * d + j] = v;
      hess[j * d + i] = v;
    }
  }
}

}  // namespace detail

/// Finite-difference gradient and Hessian of the augmented log-likelihood in ln(l): central
/// differences at steps h and h/2 in 50-digit arithmetic, Richardson-extrapolated to fourth
/// order.
inline LikelihoodDerivatives finite_difference_derivatives(const GpSurrogate& gp,
                                                           double sigma_prior, double h = 1e-4) {
  const Eigen::Index d = gp.dim();
  std::vector<detail::Wide> j1, j2, h1, h2;
  detail::central_differences(gp, sigma_prior, detail::Wide(h), j1, h1);
  detail::central_differences(gp, sigma_prior, detail::Wide(h) / 2, j2, h2);
  const auto extrapolate = [](const detail::Wide& coarse, const detail::Wide& fine) {
    return static_cast<double>((4 * fine - coarse) / 3);
  };
  LikelihoodDerivatives out;
  out.value = log_likelihood(gp, sigma_prior);
  out.jacobian.resize(d);
  out.hessian.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto si = static_cast<std::size_t>(i);
    out.jacobian(i) = extrapolate(j1[si], j2[si]);
    for (Eigen::Index j = 0; j < d; ++j) {
      const auto k = si * static_cast<std::size_t>(d) + static_cast<std::size_t>(j);
      out.hessian(i, j) = extrapolate(h1[k], h2[k]);
    }
  }
  return out;
}

/// Normwise relative error with a unit floor on the reference magnitude.
inline double relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& reference) {
  return (analytic - reference).norm() / std::max(reference.norm(), 1.0);
}

/// Analytic Jacobian and Hessian against central differences on random instances.
inline CheckResult check_likelihood_derivatives(int instances, std::uint64_t seed,
                                                double tolerance = 1e-4) {
  std::mt19937_64 rng(seed);
  CheckResult res{"likelihood gradient/hessian", true, 0.0, tolerance, ""};
  for (int k = 0; k < instances; ++k) {
    const GpSurrogate gp = random_gp_instance(rng);
    const double sigma_prior = (k % 2 == 0) ? 0.1 : 1.0;
    const LikelihoodDerivatives an = likelihood_derivatives(gp, sigma_prior);
    const LikelihoodDerivatives fd = finite_difference_derivatives(gp, sigma_prior);
    const double err = std::max(relative_error(an.jacobian, fd.jacobian),
                                relative_error(an.hessian, fd.hessian));
    res.worst = std::max(res.worst, err);
  }
  res.passed = res.worst <= tolerance;
  res.detail = std::to_string(instances) + " instances";
  return res;
}

struct TransformCheck {
  CheckResult reconstruction;
  CheckResult orthogonality;
};

/// Randomized recenter/rotate/rescale/normalize sequences. Every update must leave the
/// objective-space reconstruction R S X' + c 1' and the outputs a y' + b unchanged, and R
/// orthogonal.
inline TransformCheck check_transform_updates(int updates, std::uint64_t seed,
                                              double recon_tol = 1e-8, double orth_tol = 1e-10) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_d(1, 5);
  std::uniform_int_distribution<int> pick_op(0, 3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> log_ell(std::log(0.2), std::log(5.0));

  TransformCheck out;
  out.reconstruction = {"transform reconstruction", true, 0.0, recon_tol, ""};
  out.orthogonality = {"rotation orthogonality", true, 0.0, orth_tol, ""};

  int done = 0;
  while (done < updates) {
    const int d = pick_d(rng);
    const int n = d + 3;
    Bounds bounds = Bounds::uniform(d, -2.0, 3.0);
    Eigen::MatrixXd x0(d, n);
    Eigen::VectorXd y0(n);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < d; ++i) x0(i, j) = -2.0 + 5.0 * unit(rng);
      y0(j) = 10.0 * unit(rng);
    }
    auto [obs, state] = init_from_bounds(x0, y0, bounds);
    const Eigen::MatrixXd x_ref = x0;
    const Eigen::VectorXd y_ref = y0;
    // A trajectory of 50 updates per instance keeps drift accumulation in play.
    for (int t = 0; t < 50 && done < updates; ++t, ++done) {
      switch (pick_op(rng)) {
        case 0: recenter(state, obs); break;
        case 1: rotate(state, obs); break;
        case 2: {
          Eigen::VectorXd ell(d);
          for (int i = 0; i < d; ++i) ell(i) = std::exp(log_ell(rng));
          rescale(state, obs, ell);
          break;
        }
        default: normalize_outputs(state, obs); break;
      }
      const Eigen::MatrixXd x_now = reconstruct_inputs(state, obs);
      const double rx = (x_now - x_ref).norm() / std::max(x_ref.norm(), 1.0);
      Eigen::VectorXd y_now(n);
      for (int j = 0; j < n; ++j) y_now(j) = output_to_objective(state, obs.outputs(j));
      const double ry = (y_now - y_ref).norm() / std::max(y_ref.norm(), 1.0);
      out.reconstruction.worst = std::max({out.reconstruction.worst, rx, ry});
      out.orthogonality.worst = std::max(out.orthogonality.worst, state.orthogonality_error());
    }
  }
  out.reconstruction.passed = out.reconstruction.worst <= recon_tol;
  out.orthogonality.passed = out.orthogonality.worst <= orth_tol;
  out.reconstruction.detail = out.orthogonality.detail = std::to_string(updates) + " updates";
  return out;
}

/// With rotation disabled the rotation matrix must stay exactly the identity.
inline CheckResult check_rotation_disabled(std::uint64_t seed) {
  const TestFunction fn = make_test_function(TestFunctionName::Rosenbrock, 2);
  LabcatConfig cfg = LabcatConfig::defaults(2);
  cfg.max_evals = 60;
  cfg.seed = seed;
  cfg.ablation.rotation_enabled = false;
  AskTellSession session(fn.bounds, cfg);
  CheckResult res{"rotation disabled keeps R = I", true, 0.0, 0.0, ""};
  while (!session.finished()) {
    const Eigen::VectorXd x = session.ask();
    session.tell(x, eval_testfn(fn, x));
    const Eigen::MatrixXd& r = session.transform().rotation;
    res.worst = std::max(res.worst, (r - Eigen::MatrixXd::Identity(r.rows(), r.cols())).norm());
  }
  res.passed = res.worst == 0.0;
  return res;
}

/// Gradient and transform invariant suites as run by `labcat selftest`.
inline std::vector<CheckResult> run_selftests(std::uint64_t seed = 0) {
  std::vector<CheckResult> out;
  out.push_back(check_likelihood_derivatives(100, seed));
  const TransformCheck tc = check_transform_updates(1000, seed + 1);
  out.push_back(tc.reconstruction);
  out.push_back(tc.orthogonality);
  out.push_back(check_rotation_disabled(seed + 2));
  return out;
}

}  // namespace labcat
