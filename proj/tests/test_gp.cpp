#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "labcat/gp.hpp"
#include "labcat/selftest.hpp"

using namespace labcat;

namespace {

Eigen::MatrixXd random_points(std::mt19937_64& rng, int d, int n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd x(d, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < d; ++i) x(i, j) = u(rng);
  }
  return x;
}

Eigen::VectorXd random_targets(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd y(n);
  for (int j = 0; j < n; ++j) y(j) = u(rng);
  return y;
}

// Gram matrix rebuilt entry by entry from the kernel formula.
Eigen::MatrixXd dense_gram(const Eigen::MatrixXd& x, const Eigen::VectorXd& ell, double sf2,
                           double sn2) {
  const Eigen::Index n = x.cols();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index p = 0; p < n; ++p) {
    for (Eigen::Index q = 0; q < n; ++q) {
      const double r2 = ((x.col(p) - x.col(q)).array() / ell.array()).square().sum();
      k(p, q) = sf2 * std::exp(-0.5 * r2) + (p == q ? sn2 : 0.0);
    }
  }
  return k;
}

}  // namespace

TEST(Kernel, ZeroDistanceIsSignalVariance) {
  KernelParams p{Eigen::VectorXd::Ones(2), 1.0, 0.0};
  const Eigen::Vector2d x(0.3, -0.7);
  EXPECT_DOUBLE_EQ(kernel_se_ard(x, x, p, false), 1.0);
}

TEST(Kernel, DiagonalAddsNugget) {
  KernelParams p{Eigen::VectorXd::Ones(2), 1.0, 1e-6};
  const Eigen::Vector2d x(0.3, -0.7);
  EXPECT_DOUBLE_EQ(kernel_se_ard(x, x, p, true), 1.000001);
}

TEST(Kernel, UnitDistance) {
  KernelParams p{Eigen::VectorXd::Ones(2), 1.0, 0.0};
  EXPECT_NEAR(kernel_se_ard(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 0), p, false),
              std::exp(-0.5), 1e-15);
  EXPECT_NEAR(std::exp(-0.5), 0.606531, 1e-6);
}

TEST(Kernel, SymmetricExactly) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 100; ++k) {
    const Eigen::MatrixXd x = random_points(rng, 3, 2);
    KernelParams p{Eigen::Vector3d(0.3, 1.7, 2.2), 0.8, 0.0};
    EXPECT_EQ(kernel_se_ard(x.col(0), x.col(1), p, false),
              kernel_se_ard(x.col(1), x.col(0), p, false));
  }
}

TEST(Fit, SinglePoint) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 1);
  Eigen::VectorXd y(1);
  y << 0.5;
  const GpSurrogate gp = GpSurrogate::fit(x, y, Eigen::VectorXd::Ones(2));
  EXPECT_DOUBLE_EQ(gp.mean_const(), 0.5);
  EXPECT_DOUBLE_EQ(gp.alpha()(0), 0.0);
}

TEST(Fit, PopulationStdSignal) {
  Eigen::MatrixXd x(1, 2);
  x << -1.0, 1.0;
  Eigen::VectorXd y(2);
  y << 0.0, 1.0;
  const GpSurrogate gp = GpSurrogate::fit(x, y, Eigen::VectorXd::Ones(1));
  EXPECT_DOUBLE_EQ(gp.params().signal_variance, 0.25);
}

TEST(Fit, CholeskyReconstructsGram) {
  std::mt19937_64 rng(11);
  const Eigen::MatrixXd x = random_points(rng, 2, 4);
  const Eigen::VectorXd y = random_targets(rng, 4);
  const Eigen::Vector2d ell(0.7, 1.3);
  const GpSurrogate gp = GpSurrogate::fit(x, y, ell);
  const Eigen::MatrixXd k =
      dense_gram(x, ell, gp.params().signal_variance, gp.params().noise_variance);
  const Eigen::MatrixXd l = gp.chol();
  EXPECT_LT((l * l.transpose() - k).norm(), 1e-10);
}

TEST(Fit, NuggetWithinLimitsOnDuplicates) {
  // Identical inputs with different targets: rank-one signal part, nugget carries the fit.
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 6);
  Eigen::VectorXd y(6);
  y << 0, 1, 0.5, 0.2, 0.9, 0.3;
  const GpSurrogate gp = GpSurrogate::fit(x, y, Eigen::VectorXd::Ones(2));
  EXPECT_GE(gp.params().noise_variance, 1e-6 * gp.params().signal_variance);
  EXPECT_LE(gp.params().noise_variance, 1e-2 * gp.params().signal_variance * (1 + 1e-12));
}

TEST(Fit, RejectsMismatchedShapes) {
  EXPECT_THROW(GpSurrogate::fit(Eigen::MatrixXd::Zero(2, 3), Eigen::VectorXd::Zero(2),
                                Eigen::VectorXd::Ones(2)),
               DimensionMismatch);
  EXPECT_THROW(GpSurrogate::fit(Eigen::MatrixXd::Zero(2, 3), Eigen::VectorXd::Zero(3),
                                Eigen::VectorXd::Ones(3)),
               DimensionMismatch);
}

TEST(Predict, InterpolatesObservedPoint) {
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd x = random_points(rng, 2, 5);
  const Eigen::VectorXd y = random_targets(rng, 5);
  FitOptions opt;
  opt.nugget_ratio = 1e-12;
  const GpSurrogate gp = GpSurrogate::fit(x, y, Eigen::VectorXd::Constant(2, 0.5), opt);
  for (int j = 0; j < 5; ++j) {
    const Prediction p = gp.predict(x.col(j));
    EXPECT_NEAR(p.mean, y(j), 1e-6);
    EXPECT_LE(p.variance, 1e-8);
  }
}

TEST(Predict, RevertsToPriorFarAway) {
  std::mt19937_64 rng(6);
  const Eigen::MatrixXd x = random_points(rng, 2, 5);
  const Eigen::VectorXd y = random_targets(rng, 5);
  const GpSurrogate gp = GpSurrogate::fit(x, y, Eigen::VectorXd::Ones(2));
  const Prediction p = gp.predict(Eigen::Vector2d(25.0, -25.0));
  EXPECT_NEAR(p.mean, gp.mean_const(), 1e-6);
  EXPECT_NEAR(p.variance, gp.params().signal_variance, 1e-6);
}

TEST(Predict, TwoPointHandSolve) {
  Eigen::MatrixXd x(1, 2);
  x << -1.0, 1.0;
  Eigen::VectorXd y(2);
  y << 0.0, 1.0;
  FitOptions opt;
  opt.nugget_ratio = 0.0;
  const GpSurrogate gp = GpSurrogate::fit(x, y, Eigen::VectorXd::Ones(1), opt);
  // K = 0.25 [[1, e^-2], [e^-2, 1]], k* = 0.25 e^-0.5 (1, 1), m = 0.5, y - m = (-0.5, 0.5).
  const double sf2 = 0.25;
  const double e2 = std::exp(-2.0);
  const double k11 = sf2, k12 = sf2 * e2;
  const double det = k11 * k11 - k12 * k12;
  const double r0 = -0.5, r1 = 0.5;
  const double a0 = (k11 * r0 - k12 * r1) / det;
  const double a1 = (-k12 * r0 + k11 * r1) / det;
  const double ks = sf2 * std::exp(-0.5);
  const double mean = 0.5 + ks * (a0 + a1);
  const double v0 = (k11 * ks - k12 * ks) / det;
  const double v1 = (-k12 * ks + k11 * ks) / det;
  const double var = sf2 - ks * (v0 + v1);
  const Prediction p = gp.predict(Eigen::VectorXd::Zero(1));
  EXPECT_NEAR(p.mean, mean, 1e-12);
  EXPECT_NEAR(p.mean, 0.5, 1e-12);  // symmetry
  EXPECT_NEAR(p.variance, var, 1e-12);
}

TEST(Predict, VarianceBounded) {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 20; ++k) {
    const Eigen::MatrixXd x = random_points(rng, 3, 6);
    const GpSurrogate gp = GpSurrogate::fit(x, random_targets(rng, 6), Eigen::VectorXd::Ones(3));
    const Eigen::MatrixXd probes = random_points(rng, 3, 20);
    for (int j = 0; j < 20; ++j) {
      const Prediction p = gp.predict(probes.col(j));
      EXPECT_GE(p.variance, 0.0);
      EXPECT_LE(p.variance,
                gp.params().signal_variance + gp.params().noise_variance + 1e-9);
    }
  }
}

TEST(LogLikelihood, SinglePointClosedForm) {
  // y = m and K = [1] (signal floor raised to 1, no nugget): only the normalizer remains.
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(1, 1);
  Eigen::VectorXd y(1);
  y << 0.3;
  FitOptions opt;
  opt.min_signal_std = 1.0;
  opt.nugget_ratio = 0.0;
  const GpSurrogate gp = GpSurrogate::fit(x, y, Eigen::VectorXd::Ones(1), opt);
  EXPECT_NEAR(log_likelihood(gp, 0.1), -0.5 * std::log(2.0 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(log_likelihood(gp, 0.1), -0.918939, 1e-6);
}

TEST(LogLikelihood, UnitLengthscalesHaveNoPriorContribution) {
  std::mt19937_64 rng(9);
  const GpSurrogate gp =
      GpSurrogate::fit(random_points(rng, 2, 4), random_targets(rng, 4), Eigen::VectorXd::Ones(2));
  EXPECT_EQ(log_likelihood(gp, 0.1), log_likelihood(gp, std::numeric_limits<double>::infinity()));
}

TEST(LogLikelihood, MatchesDenseInverse) {
  std::mt19937_64 rng(10);
  const Eigen::MatrixXd x = random_points(rng, 2, 3);
  const Eigen::VectorXd y = random_targets(rng, 3);
  const Eigen::Vector2d ell(0.8, 1.6);
  const GpSurrogate gp = GpSurrogate::fit(x, y, ell);
  const Eigen::MatrixXd k =
      dense_gram(x, ell, gp.params().signal_variance, gp.params().noise_variance);
  const Eigen::VectorXd r = y.array() - y.mean();
  const double expected = -0.5 * r.dot(k.inverse() * r) - 0.5 * std::log(k.determinant()) -
                          1.5 * std::log(2.0 * std::numbers::pi) -
                          0.5 * (std::log(0.8) * std::log(0.8) + std::log(1.6) * std::log(1.6)) /
                              0.01;
  EXPECT_NEAR(log_likelihood(gp, 0.1), expected, 1e-10);
}

TEST(Derivatives, IdenticalInputsLeavePriorOnly) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 3);
  Eigen::VectorXd y(3);
  y << 0.0, 0.4, 1.0;
  const Eigen::Vector2d ell(0.5, 2.0);
  const GpSurrogate gp = GpSurrogate::fit(x, y, ell);
  const LikelihoodDerivatives der = likelihood_derivatives(gp, 0.1);
  EXPECT_NEAR(der.jacobian(0), -std::log(0.5) / 0.01, 1e-9);
  EXPECT_NEAR(der.jacobian(1), -std::log(2.0) / 0.01, 1e-9);
}

TEST(Derivatives, PriorCurvatureOnDiagonal) {
  std::mt19937_64 rng(12);
  const GpSurrogate gp =
      GpSurrogate::fit(random_points(rng, 2, 4), random_targets(rng, 4), Eigen::VectorXd::Ones(2));
  const auto with = likelihood_derivatives(gp, 0.1);
  const auto without = likelihood_derivatives(gp, std::numeric_limits<double>::infinity());
  const Eigen::MatrixXd diff = with.hessian - without.hessian;
  EXPECT_NEAR(diff(0, 0), -100.0, 1e-9);
  EXPECT_NEAR(diff(1, 1), -100.0, 1e-9);
  EXPECT_NEAR(diff(0, 1), 0.0, 1e-12);
  EXPECT_NEAR((with.jacobian - without.jacobian).norm(), 0.0, 1e-12);
}

TEST(Derivatives, MatchCentralDifferences) {
  std::mt19937_64 rng(13);
  const Eigen::MatrixXd x = random_points(rng, 2, 3);
  const Eigen::VectorXd y = random_targets(rng, 3);
  const GpSurrogate gp = GpSurrogate::fit(x, y, Eigen::Vector2d(0.6, 1.4));
  const LikelihoodDerivatives an = likelihood_derivatives(gp, 0.1);
  const LikelihoodDerivatives fd = finite_difference_derivatives(gp, 0.1, 1e-5);
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(an.jacobian(i), fd.jacobian(i), 1e-4 * std::max(1.0, std::abs(fd.jacobian(i))));
    for (int j = 0; j < 2; ++j) {
      EXPECT_NEAR(an.hessian(i, j), fd.hessian(i, j),
                  1e-4 * std::max(1.0, std::abs(fd.hessian(i, j))));
    }
  }
}

TEST(Derivatives, RandomInstancesMatchCentralDifferences) {
  const CheckResult r = check_likelihood_derivatives(30, 77);
  EXPECT_TRUE(r.passed) << "worst relative error " << r.worst;
}

TEST(AscentDirection, NewtonWhenNegativeDefinite) {
  const Eigen::Vector2d g(0.3, -1.2);
  const Eigen::MatrixXd h = -Eigen::MatrixXd::Identity(2, 2);
  EXPECT_LT((ascent_direction(g, h) - g).norm(), 1e-15);
  Eigen::Matrix2d h2;
  h2 << -2.0, 0.5, 0.5, -1.0;
  EXPECT_LT((ascent_direction(g, h2) + h2.inverse() * g).norm(), 1e-12);
}

TEST(AscentDirection, GradientWhenIndefinite) {
  const Eigen::Vector2d g(0.3, -1.2);
  Eigen::Matrix2d h;
  h << 1.0, 0.0, 0.0, -1.0;
  EXPECT_EQ(ascent_direction(g, h), Eigen::VectorXd(g));
}

TEST(HyperparameterStep, StationaryPointUnchanged) {
  // Identical inputs: data term has zero gradient, prior gradient vanishes at l = 1.
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 3);
  Eigen::VectorXd y(3);
  y << 0.0, 0.4, 1.0;
  const GpSurrogate gp = GpSurrogate::fit(x, y, Eigen::VectorXd::Ones(2));
  const Eigen::VectorXd ell = hyperparameter_step(gp, 0.1, 1);
  EXPECT_EQ(ell, Eigen::VectorXd::Ones(2));
}

TEST(HyperparameterStep, PriorOnlyNewtonStepIsExact) {
  // With identical inputs the objective is the pure quadratic prior, so one Newton step
  // from any point lands on ln l = 0 and the full step is accepted.
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 3);
  Eigen::VectorXd y(3);
  y << 0.0, 0.4, 1.0;
  const GpSurrogate gp = GpSurrogate::fit(x, y, Eigen::Vector2d(0.5, 3.0));
  const Eigen::VectorXd ell = hyperparameter_step(gp, 0.1, 1);
  EXPECT_NEAR(ell(0), 1.0, 1e-12);
  EXPECT_NEAR(ell(1), 1.0, 1e-12);
}

TEST(HyperparameterStep, DoesNotDecreaseLikelihood) {
  std::mt19937_64 rng(14);
  for (int k = 0; k < 25; ++k) {
    const GpSurrogate gp = GpSurrogate::fit(random_points(rng, 2, 3), random_targets(rng, 3),
                                            Eigen::VectorXd::Ones(2));
    const double before = log_likelihood(gp, 0.1);
    const Eigen::VectorXd ell = hyperparameter_step(gp, 0.1, 1);
    const double after = log_likelihood(gp.with_lengthscales(ell), 0.1);
    EXPECT_GE(after, before);
  }
}

TEST(HyperparameterStep, ClampsLogLengthscales) {
  std::mt19937_64 rng(15);
  for (int k = 0; k < 10; ++k) {
    const GpSurrogate gp = GpSurrogate::fit(random_points(rng, 3, 5), random_targets(rng, 5),
                                            Eigen::VectorXd::Ones(3));
    const Eigen::VectorXd ell =
        hyperparameter_step(gp, std::numeric_limits<double>::infinity(), 10);
    for (int i = 0; i < 3; ++i) {
      EXPECT_GE(std::log(ell(i)), -10.0 - 1e-12);
      EXPECT_LE(std::log(ell(i)), 10.0 + 1e-12);
    }
  }
}
