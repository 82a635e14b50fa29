#include <gtest/gtest.h>

#include "oracles.hpp"
#include "spurious/paths_quadratic.hpp"

using namespace spurious;

namespace {

// A from the network by evaluating the quadratic form on basis pairs.
Mat A_oracle(const QuadState& s) {
  const Eigen::Index n = s.n();
  Mat a(n, n);
  auto f = [&](const Vec& x) {
    double v = 0;
    for (Eigen::Index i = 0; i < s.p(); ++i) v += s.u(i) * std::pow(s.W.row(i).dot(x), 2);
    return v;
  };
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const Vec ei = Vec::Unit(n, i), ej = Vec::Unit(n, j);
      a(i, j) = 0.25 * (f(ei + ej) - f(ei - ej));
    }
  return a;
}

double max_A_change(const ParamPath<QuadState>& path, std::size_t seg, int grid) {
  const Mat a0 = path.segment(seg).eval(0.0).A();
  double worst = 0;
  for (int k = 0; k <= grid; ++k) worst = std::max(worst, (path.segment(seg).eval(k / double(grid)).A() - a0).norm());
  return worst;
}

TwoLayerParams random_quad(Rng& rng, int p, int n) {
  TwoLayerParams th{oracle::gaussian(rng, 1, p), oracle::gaussian(rng, p, n), std::nullopt};
  return th;
}

Discrete noisy_data(Rng& rng, int N, int n) { return Discrete::uniform(oracle::gaussian(rng, N, n), oracle::gaussian(rng, N, 1)); }

}  // namespace

TEST(QuadState, AMatchesNetworkForm) {
  Rng rng(1);
  QuadState s = QuadState::from(random_quad(rng, 5, 3));
  EXPECT_LT((s.A() - A_oracle(s)).norm(), 1e-12);
  EXPECT_LT((s.A() - s.A().transpose()).norm(), 1e-15);
}

TEST(ConvexOptimum, RecoversPlantedMatrix) {
  Rng rng(2);
  for (int n : {2, 3, 4}) {
    Mat b = oracle::gaussian(rng, n, n);
    Mat star = b + b.transpose();
    Mat x = oracle::gaussian(rng, 3 * n * n, n);
    Mat y(x.rows(), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) y(i, 0) = x.row(i) * star * x.row(i).transpose();
    ConvexOptimum o = convex_A_optimum(Discrete::uniform(x, y));
    EXPECT_LT((o.A - star).norm(), 1e-8);
    EXPECT_LT(o.risk, 1e-16);
  }
}

TEST(ConvexOptimum, ZeroTargetsAndSinglePoint) {
  Rng rng(3);
  ConvexOptimum z = convex_A_optimum(Discrete::uniform(oracle::gaussian(rng, 4, 3), Mat::Zero(4, 1)));
  EXPECT_EQ(z.A.norm(), 0.0);
  EXPECT_EQ(z.risk, 0.0);
  Mat x(1, 2);
  x << 1, 0;
  ConvexOptimum o = convex_A_optimum(Discrete::uniform(x, Mat::Constant(1, 1, 3.0)));
  EXPECT_NEAR(o.A(0, 0), 3.0, 1e-14);
  EXPECT_NEAR(o.A(0, 1), 0.0, 1e-14);
  EXPECT_NEAR(o.A(1, 1), 0.0, 1e-14);
  EXPECT_NEAR(o.risk, 0.0, 1e-24);
}

TEST(ConvexOptimum, MatchesUnscaledNormalEquations) {
  Rng rng(4);
  Mat x = oracle::gaussian(rng, 30, 3), y = oracle::gaussian(rng, 30, 1);
  Mat phi(30, 6);
  for (int i = 0; i < 30; ++i)
    phi.row(i) << x(i, 0) * x(i, 0), 2 * x(i, 0) * x(i, 1), 2 * x(i, 0) * x(i, 2), x(i, 1) * x(i, 1),
        2 * x(i, 1) * x(i, 2), x(i, 2) * x(i, 2);
  Mat c = oracle::normal_equations(phi, y);
  const double best = (phi * c - y).squaredNorm() / 30;
  ConvexOptimum o = convex_A_optimum(Discrete::uniform(x, y));
  EXPECT_NEAR(o.risk, best, 1e-12);
  EXPECT_NEAR(o.A(0, 1), c(1, 0), 1e-10);
  EXPECT_NEAR(quadratic_risk(o.A, Discrete::uniform(x, y)), best, 1e-12);
}

TEST(NormalizeSigns, ScalesRowsBySqrtWeight) {
  TwoLayerParams th{Mat::Constant(1, 1, 4.0), Mat(1, 2), std::nullopt};
  th.W << 1, 0;
  ParamPath<QuadState> path = normalize_signs_path(th);
  QuadState e = path.end();
  EXPECT_EQ(e.u(0), 1.0);
  EXPECT_NEAR(e.W(0, 0), 2.0, 1e-15);
  Mat a = Mat::Zero(2, 2);
  a(0, 0) = 4;
  for (int k = 0; k <= 30; ++k) EXPECT_LT((path(k / 30.0).A() - a).norm(), 1e-14);
}

TEST(NormalizeSigns, SilentRowGoesToZeroThenUnitWeight) {
  TwoLayerParams th{Mat::Zero(1, 1), Mat::Constant(1, 3, 0.7), std::nullopt};
  ParamPath<QuadState> path = normalize_signs_path(th);
  EXPECT_EQ(path.end().u(0), 1.0);
  EXPECT_EQ(path.end().W.norm(), 0.0);
  for (int k = 0; k <= 30; ++k) EXPECT_EQ(path(k / 30.0).A().norm(), 0.0);
}

TEST(NormalizeSigns, RandomStateKeepsA) {
  Rng rng(5);
  TwoLayerParams th = random_quad(rng, 5, 3);
  th.U(0, 2) = 0;
  ParamPath<QuadState> path = normalize_signs_path(th);
  const Mat a0 = QuadState::from(th).A();
  for (int k = 0; k <= 500; ++k) EXPECT_LE((path(k / 500.0).A() - a0).norm(), 1e-10);
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_EQ(std::abs(path.end().u(i)), 1.0);
  EXPECT_LT(path.max_joint_gap(), 1e-15);
}

TEST(NullRow, LargerGroupHasLeftKernel) {
  Rng rng(6);
  const int n = 3;
  // p_plus = n+1 rows, p_minus = n rows; p = 2n+1.
  QuadState s{Vec::Ones(2 * n + 1), oracle::gaussian(rng, 2 * n + 1, n)};
  s.u.tail(n).setConstant(-1.0);
  Vec v = Vec::Unit(n, 0);
  QuadStep st = null_row_rotation_path(s, v, {0, 1, 2, 3, 4, 5, 6});
  EXPECT_EQ(st.row, 0);
  const QuadState rotated = st.path.segment(0).eval(1.0);
  EXPECT_LE(rotated.W.row(0).norm(), 1e-10);
  for (std::size_t seg = 0; seg < st.path.size(); ++seg) EXPECT_LE(max_A_change(st.path, seg, 500), 1e-10);
  EXPECT_LT((st.end.W.row(0).transpose() - v).norm(), 1e-15);
  EXPECT_EQ(st.end.u(0), 0.0);
}

TEST(NullRow, RotationStaysInSpecialOrthogonalGroup) {
  Rng rng(7);
  QuadState s{Vec::Ones(7), oracle::gaussian(rng, 7, 3)};
  s.u(6) = -1;
  QuadStep st = null_row_rotation_path(s, Vec::Unit(3, 1), {0, 1, 2, 3, 4, 5, 6});
  ASSERT_TRUE(st.rotation.has_value());
  EXPECT_EQ(st.group.size(), 6u);
  for (int k = 0; k <= 100; ++k) {
    const Mat q = st.rotation->exp(k / 100.0);
    EXPECT_LE((q.transpose() * q - Mat::Identity(6, 6)).norm(), 1e-10);
    EXPECT_GT(q.determinant(), 0.0);
  }
}

TEST(NullRow, ExistingZeroRowSkipsRotation) {
  Rng rng(8);
  QuadState s{Vec::Ones(7), oracle::gaussian(rng, 7, 3)};
  s.W.row(4).setZero();
  QuadStep st = null_row_rotation_path(s, Vec::Unit(3, 2), {0, 1, 2, 3, 4, 5, 6});
  EXPECT_EQ(st.row, 4);
  for (int k = 0; k <= 10; ++k) EXPECT_EQ(param_distance(st.path.segment(0).eval(k / 10.0), s), 0.0);
}

TEST(NullRow, RefusesNarrowWidth) {
  Rng rng(9);
  QuadState s{Vec::Ones(6), oracle::gaussian(rng, 6, 3)};
  EXPECT_THROW(null_row_rotation_path(s, Vec::Unit(3, 0), {0, 1, 2, 3, 4, 5}), PreconditionError);
}

TEST(Orthogonalize, RandomStateKeepsA) {
  Rng rng(10);
  for (int rep = 0; rep < 5; ++rep) {
    const int p = 7, n = 3;
    QuadState s{Vec::Ones(p), oracle::gaussian(rng, p, n)};
    for (int i = 0; i < p; ++i) s.u(i) = rng.uniform() < 0.5 ? 1.0 : -1.0;
    s.u(0) = 0.0;
    s.W.row(0).setZero();
    const SortedEigen e = eigen_desc(s.A());
    s.W.row(0) = e.vectors.col(1).transpose();
    QuadStep st = orthogonalize_path(s, 0, e.values(1));
    const Mat a0 = s.A();
    for (int k = 0; k <= 500; ++k) EXPECT_LE((st.path(k / 500.0).A() - a0).norm(), 1e-10);
    const Vec v = e.vectors.col(1);
    for (int i = 1; i < p; ++i) EXPECT_LE(std::abs(st.end.W.row(i).dot(v)), 1e-12);
    EXPECT_DOUBLE_EQ(st.end.u(0), e.values(1));
    EXPECT_LT(param_distance(st.path.start(), s), 1e-12);
  }
}

TEST(Orthogonalize, AlreadyOrthogonalIsConstant) {
  QuadState s{Vec(3), Mat::Zero(3, 2)};
  s.u << 2.5, 1, -1;
  s.W(0, 0) = 1;
  s.W(1, 1) = 1;
  s.W(2, 1) = 0.5;
  QuadStep st = orthogonalize_path(s, 0, 2.5);
  for (int k = 0; k <= 10; ++k) {
    EXPECT_EQ(param_distance(st.path(k / 10.0), s), 0.0);
    EXPECT_EQ(st.path(k / 10.0).u(0), 2.5);
  }
}

TEST(Orthogonalize, RejectsNonUnitPivot) {
  QuadState s{Vec::Ones(2), Mat::Identity(2, 2) * 2};
  EXPECT_THROW(orthogonalize_path(s, 0, 4.0), PreconditionError);
}

TEST(QuadraticDescent, RefusesAtTwoN) {
  Rng rng(11);
  Discrete d = noisy_data(rng, 20, 3);
  EXPECT_THROW(quadratic_descent_path(random_quad(rng, 6, 3), d), PreconditionError);
}

TEST(QuadraticDescent, OptimalStartKeepsLossConstant) {
  Rng rng(12);
  Discrete d = noisy_data(rng, 20, 2);
  ConvexOptimum o = convex_A_optimum(d);
  const SortedEigen e = eigen_desc(o.A);
  TwoLayerParams th{Mat::Zero(1, 5), Mat::Zero(5, 2), std::nullopt};
  for (int k = 0; k < 2; ++k) {
    th.U(0, k) = e.values(k);
    th.W.row(k) = e.vectors.col(k).transpose();
  }
  th.W.row(3) = oracle::gaussian(rng, 1, 2);
  QuadDescent q = quadratic_descent_path(th, d);
  for (const auto& s : q.report.samples) EXPECT_NEAR(s.loss, o.risk, 1e-10);
}

TEST(QuadraticDescent, RealizableTargetsInterpolate) {
  Rng rng(13);
  Mat x = oracle::gaussian(rng, 20, 2);
  Mat star(2, 2);
  star << 1.0, -0.4, -0.4, -2.0;
  Mat y(20, 1);
  for (int i = 0; i < 20; ++i) y(i, 0) = x.row(i) * star * x.row(i).transpose();
  QuadDescent q = quadratic_descent_path(random_quad(rng, 5, 2), Discrete::uniform(x, y));
  EXPECT_LE(q.report.endpoint_loss, 1e-8);
  EXPECT_TRUE(q.report.verdict);
}

TEST(QuadraticDescent, RandomTargetsReachConvexOptimum) {
  Rng rng(14);
  Discrete d = noisy_data(rng, 50, 3);
  QuadDescent q = quadratic_descent_path(random_quad(rng, 7, 3), d);
  EXPECT_NEAR(q.report.endpoint_loss, convex_A_optimum(d).risk, 1e-7);
  EXPECT_LE(q.report.max_uptick, 1e-8);
  EXPECT_LE(q.report.max_joint_gap, 1e-9);
  // Final interpolation is convex in t.
  const int last = static_cast<int>(q.path.size()) - 1;
  std::vector<double> tail;
  for (const auto& s : q.report.samples)
    if (s.segment_id == last) tail.push_back(s.loss);
  for (std::size_t k = 1; k + 1 < tail.size(); ++k) EXPECT_GE(tail[k + 1] - 2 * tail[k] + tail[k - 1], -1e-8);
}

class QuadraticRandom : public ::testing::TestWithParam<int> {};

TEST_P(QuadraticRandom, InvarianceMonotonicityOptimality) {
  const int seed = GetParam();
  Rng rng(500 + seed);
  const int n = 2 + seed % 3, p = 2 * n + 1 + seed % 2;
  Discrete d = noisy_data(rng, 50, n);
  TwoLayerParams th = random_quad(rng, p, n);
  if (seed % 4 == 0) th.U(0, 1) = 0.0;
  QuadDescent q = quadratic_descent_path(th, d);
  const std::size_t last = q.path.size() - 1;
  for (std::size_t s = 0; s < last; ++s) EXPECT_LE(max_A_change(q.path, s, 500), 1e-10) << "segment " << s;
  EXPECT_LE(q.report.max_uptick, 1e-8);
  EXPECT_LE(std::abs(q.report.endpoint_loss - convex_A_optimum(d).risk), 1e-7);
  EXPECT_TRUE(q.report.verdict);
  EXPECT_EQ(q.pivots.size(), static_cast<std::size_t>(n));
}

INSTANTIATE_TEST_SUITE_P(Seeds, QuadraticRandom, ::testing::Range(0, 24));

TEST(NarrowExperiment, RecordsOutcomeWithoutAsserting) {
  Rng rng(15);
  Discrete d = noisy_data(rng, 30, 3);
  NarrowAttempt a = try_narrow_quadratic(random_quad(rng, 4, 3), d);
  EXPECT_TRUE(a.completed || !a.failure.empty());
}
