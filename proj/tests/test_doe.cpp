#include <algorithm>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "labcat/doe.hpp"

using namespace labcat;

namespace {

std::vector<int> strata(const Eigen::MatrixXd& design, const Bounds& b, int dim) {
  std::vector<int> s;
  const int n = static_cast<int>(design.cols());
  for (int j = 0; j < n; ++j) {
    s.push_back(lhs_stratum(design(dim, j), b.lower()(dim), b.upper()(dim), n));
  }
  std::sort(s.begin(), s.end());
  return s;
}

std::vector<int> iota_vec(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

}  // namespace

TEST(LatinHypercube, OnePointPerUnitCell) {
  std::mt19937_64 rng(1);
  const Bounds b = Bounds::uniform(1, 0.0, 3.0);
  const Eigen::MatrixXd x = latin_hypercube(b, 3, rng);
  std::vector<double> v(x.data(), x.data() + 3);
  std::sort(v.begin(), v.end());
  EXPECT_GE(v[0], 0.0);
  EXPECT_LT(v[0], 1.0);
  EXPECT_GE(v[1], 1.0);
  EXPECT_LT(v[1], 2.0);
  EXPECT_GE(v[2], 2.0);
  EXPECT_LE(v[2], 3.0);
}

TEST(LatinHypercube, MarginalsArePermutations) {
  std::mt19937_64 rng(2);
  const Bounds b({{-5.0, 10.0}, {0.0, 15.0}});
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::MatrixXd x = latin_hypercube(b, 5, rng);
    ASSERT_EQ(x.rows(), 2);
    ASSERT_EQ(x.cols(), 5);
    for (int i = 0; i < 2; ++i) EXPECT_EQ(strata(x, b, i), iota_vec(5));
  }
}

TEST(LatinHypercube, ManyShapesStayStratifiedAndInside) {
  std::mt19937_64 rng(3);
  for (int d = 1; d <= 6; ++d) {
    for (int n : {2, 3, 7, 13, 64}) {
      const Bounds b = Bounds::uniform(d, -1.28, 1.28);
      const Eigen::MatrixXd x = latin_hypercube(b, n, rng);
      for (int i = 0; i < d; ++i) EXPECT_EQ(strata(x, b, i), iota_vec(n));
      for (int j = 0; j < n; ++j) EXPECT_TRUE(b.contains(x.col(j)));
    }
  }
}

TEST(LatinHypercube, DeterministicForSeed) {
  const Bounds b = Bounds::uniform(3, -5.12, 5.12);
  std::mt19937_64 r1(42), r2(42);
  const Eigen::MatrixXd a = latin_hypercube(b, 7, r1);
  const Eigen::MatrixXd c = latin_hypercube(b, 7, r2);
  EXPECT_EQ(a, c);
}

TEST(LatinHypercube, StratumOfUpperEdgeIsLast) {
  EXPECT_EQ(lhs_stratum(3.0, 0.0, 3.0, 3), 2);
  EXPECT_EQ(lhs_stratum(0.0, 0.0, 3.0, 3), 0);
  EXPECT_EQ(lhs_stratum(1.0, 0.0, 3.0, 3), 1);
}
