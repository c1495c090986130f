#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "msbo/optimize.hpp"
#include "msbo/random.hpp"
#include "msbo/sobol.hpp"

using namespace msbo;

TEST(StreamRng, SameKeySameSequence) {
  StreamRng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
}

TEST(StreamRng, SplitStreamsAreDistinctAndStable) {
  const StreamRng root(7);
  StreamRng s1 = root.split(1), s1b = root.split(1), s2 = root.split(2);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 50; ++i) {
    const auto v = s1();
    EXPECT_EQ(v, s1b());
    seen.insert(v);
    seen.insert(s2());
  }
  EXPECT_EQ(seen.size(), 100u);
  EXPECT_NE(root.split(1).key(), root.split(1).split(0).key());
}

TEST(StreamRng, UniformAndNormalMoments) {
  StreamRng r(3);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = r.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 3e-3);
  EXPECT_NEAR(sn / n, 0.0, 1e-2);
  EXPECT_NEAR(sn2 / n, 1.0, 1.5e-2);
}

TEST(StreamRng, BelowCoversRange) {
  StreamRng r(11);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 7000; ++i) ++counts[r.below(7)];
  for (int c : counts) EXPECT_NEAR(c, 1000, 150);
}

TEST(Sobol, DeterministicAndInUnitCube) {
  SobolSequence a(5, 99), b(5, 99), c(5, 100);
  const Eigen::MatrixXd pa = a.draw(256), pb = b.draw(256), pc = c.draw(256);
  EXPECT_EQ(pa, pb);
  EXPECT_NE(pa, pc);
  EXPECT_GE(pa.minCoeff(), 0.0);
  EXPECT_LT(pa.maxCoeff(), 1.0);
}

TEST(Sobol, LowDiscrepancyMarginals) {
  // Each 1-d projection of 1024 points puts close to 1/16 of the points in
  // each of 16 bins; far tighter than i.i.d. sampling would.
  SobolSequence s(4, 5);
  const Eigen::MatrixXd p = s.draw(1024);
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    std::vector<int> bins(16, 0);
    for (Eigen::Index i = 0; i < p.rows(); ++i) ++bins[static_cast<std::size_t>(p(i, j) * 16)];
    for (int b : bins) EXPECT_NEAR(b, 64, 2);
  }
}

TEST(Sobol, RejectsZeroDimension) { EXPECT_THROW(SobolSequence(0), std::invalid_argument); }

TEST(BoxAscent, InteriorQuadratic) {
  const Eigen::Vector3d c(0.2, 0.7, 0.5);
  auto f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = -2.0 * (x - c);
    return -(x - c).squaredNorm();
  };
  const auto r = maximize_in_box(f, Eigen::Vector3d(0.9, 0.1, 0.0), Eigen::Vector3d::Zero(), Eigen::Vector3d::Ones());
  EXPECT_LT((r.x - c).norm(), 1e-6);
}

TEST(BoxAscent, OptimumOnBoundary) {
  const Eigen::Vector2d c(1.4, -0.3);
  auto f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = -2.0 * (x - c);
    return -(x - c).squaredNorm();
  };
  const auto r = maximize_in_box(f, Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d::Zero(), Eigen::Vector2d::Ones());
  EXPECT_NEAR(r.x(0), 1.0, 1e-10);
  EXPECT_NEAR(r.x(1), 0.0, 1e-10);
}

TEST(BoxAscent, Rosenbrock) {
  auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const double a = 1 - x(0), b = x(1) - x(0) * x(0);
    g.resize(2);
    g(0) = 2 * a + 400 * x(0) * b;
    g(1) = -200 * b;
    return -(a * a + 100 * b * b);
  };
  BoxAscentOptions opt;
  opt.max_iterations = 2000;
  const auto r = maximize_in_box(f, Eigen::Vector2d(-1.2, 1.0), Eigen::Vector2d(-2, -2), Eigen::Vector2d(2, 2), opt);
  EXPECT_NEAR(r.x(0), 1.0, 1e-4);
  EXPECT_NEAR(r.x(1), 1.0, 1e-4);
}

TEST(FiniteDifference, MatchesAnalyticAndStaysInBox) {
  auto f = [](const Eigen::VectorXd& x) { return std::sin(3 * x(0)) * std::exp(x(1)); };
  const Eigen::Vector2d lo(0, 0), hi(1, 1);
  for (const Eigen::Vector2d x : {Eigen::Vector2d(0.3, 0.6), Eigen::Vector2d(0.0, 1.0)}) {
    const Eigen::VectorXd g = finite_difference_gradient(f, x, 1e-6, lo, hi);
    EXPECT_NEAR(g(0), 3 * std::cos(3 * x(0)) * std::exp(x(1)), 1e-4);
    EXPECT_NEAR(g(1), std::sin(3 * x(0)) * std::exp(x(1)), 1e-4);
  }
}
