#include <gtest/gtest.h>

#include <numbers>

#include "oracles.hpp"
#include "spurious/adversarial.hpp"

using namespace spurious;

namespace {

double mean_sq(const Vec& v) { return v.squaredNorm() / static_cast<double>(v.size()); }

double relu(double z) { return z > 0 ? z : 0.0; }

const AdversarialBuild& relu_build_m10() {
  static const AdversarialBuild b = build_adversarial(Activation::relu(), 3, 2, 10.0, 7);
  return b;
}

}  // namespace

TEST(AdversarialBuild, ReluCorrectionTermsVanish) {
  const AdversarialSpec& s = relu_build_m10().spec;
  EXPECT_EQ(s.rho0, 0.0);
  EXPECT_EQ(s.C * s.rho0, 0.0);
}

TEST(AdversarialBuild, Preconditions) {
  try {
    build_adversarial(Activation::relu(), 3, 1, 10.0, 1);
    FAIL() << "p = 1 accepted";
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("region degenerate"), std::string::npos);
  }
  EXPECT_THROW(build_adversarial(Activation::relu(), 2, 2, 10.0, 1), PreconditionError);
  EXPECT_THROW(build_adversarial(Activation::erf(), 3, 2, 10.0, 1), PreconditionError);
  EXPECT_THROW(build_adversarial(Activation::monomial(4), 4, 2, 10.0, 1), PreconditionError);
  EXPECT_THROW(build_adversarial(Activation::quadratic(), 3, 3, 10.0, 1), PreconditionError);
  EXPECT_THROW(build_adversarial(Activation::relu(), 3, 2, -1.0, 1), std::invalid_argument);
}

TEST(AdversarialBuild, SupportIsTheMixture) {
  const AdversarialBuild& b = relu_build_m10();
  const Mat& X = b.data.X;
  ASSERT_EQ(X.rows(), 2000);
  long upper = 0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const bool head_zero = X.row(i).head(2).isZero(0.0);
    const bool tail_zero = X(i, 2) == 0.0;
    EXPECT_TRUE(head_zero != tail_zero) << i;
    upper += tail_zero;
  }
  // Ber(1/2) count within 4 standard deviations.
  EXPECT_LE(std::abs(upper - 1000), 4 * std::sqrt(500.0));
}

TEST(AdversarialBuild, ConstructionInequalitiesRecomputed) {
  const AdversarialBuild& b = relu_build_m10();
  const AdversarialSpec& s = b.spec;
  const Mat& X = b.data.X;
  const Eigen::Index N = X.rows();
  ASSERT_EQ(s.g1.V.rows(), 2);
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(s.g1.V.row(i).norm(), 1.0, 1e-12);
    EXPECT_EQ(s.g1.V(i, 2), 0.0);
    EXPECT_GT(s.g1.alpha(i), 0.0);
  }
  EXPECT_LE(s.g1.V.row(0).dot(s.g1.V.row(1)), std::cos(std::numbers::pi / 6) + 1e-12);
  EXPECT_GT(s.beta, 0.0);

  // Moments from the support, element by element.
  double psi_v = 0, a0 = 0, a1 = 0;
  Vec y(N);
  for (Eigen::Index j = 0; j < N; ++j) {
    const double f0 = relu(s.g1.V.row(0).dot(X.row(j))), f1 = relu(s.g1.V.row(1).dot(X.row(j)));
    const double g2 = s.beta * relu(X(j, 2));
    psi_v += relu(X(j, 2)) * relu(X(j, 2)) / N;
    a0 += f0 * f0 / N;
    a1 += f1 * f1 / N;
    y(j) = s.g1.alpha(0) * f0 + s.g1.alpha(1) * f1 - g2;
  }
  EXPECT_LE((y - b.data.Y.col(0)).cwiseAbs().maxCoeff(), 1e-12);
  const double min_ap = std::min(s.g1.alpha(0) * s.g1.alpha(0) * a0, s.g1.alpha(1) * s.g1.alpha(1) * a1);
  EXPECT_GE(s.epsilon, 10.0);
  EXPECT_GE(s.beta * s.beta, (10.0 + min_ap) / psi_v * (1 - 1e-12));
  EXPECT_GE(s.epsilon_slack(), 0.0);
  EXPECT_GE(s.beta_slack(), -1e-9);

  // The recorded epsilon is reproduced by a fresh estimate on the scaled target.
  const double eps = epsilon_lower_bound(s.g1, s.act, 1, X, {}, 7);
  EXPECT_NEAR(eps, s.epsilon, 1e-6 * s.epsilon);
}

TEST(EpsilonLowerBound, EmptyClassIsTheTargetNorm) {
  const AdversarialBuild& b = relu_build_m10();
  const double e0 = epsilon_lower_bound(b.spec.g1, Activation::relu(), 0, b.data.X);
  EXPECT_DOUBLE_EQ(e0, mean_sq(b.spec.g1.eval(Activation::relu(), b.data.X)));
}

TEST(EpsilonLowerBound, RealizableTargetIsNearZero) {
  Rng rng(3);
  Mat X = oracle::gaussian(rng, 300, 3);
  TargetNetwork g{Vec::Constant(1, 2.0), Mat(1, 3)};
  g.V << 0.6, 0.8, 0.0;
  EXPECT_LE(epsilon_lower_bound(g, Activation::relu(), 1, X, {}, 3), 1e-6);
}

TEST(EpsilonLowerBound, PositiveAndStableAcrossSeeds) {
  const AdversarialBuild& b = relu_build_m10();
  std::vector<double> e;
  for (std::uint64_t seed : {1, 2, 3}) {
    EpsilonBudget budget;
    budget.starts = 15;
    e.push_back(epsilon_lower_bound(b.spec.g1, Activation::relu(), 1, b.data.X, budget, seed));
  }
  const auto [lo, hi] = std::minmax_element(e.begin(), e.end());
  EXPECT_GT(*lo, 0.0);
  EXPECT_LE(*hi - *lo, 0.2 * *lo);
}

TEST(ProjectedDescent, RespectsSignsAndDecreases) {
  const AdversarialBuild& b = relu_build_m10();
  Rng rng(5);
  for (const SignPattern& signs : {omega1_signs(2), omega2_signs(2)}) {
    for (int k = 0; k < 5; ++k) {
      TwoLayerParams th{oracle::gaussian(rng, 1, 2) * 5.0, oracle::gaussian(rng, 2, 3), std::nullopt};
      project_signs(th.U, signs);
      const double start = risk_discrete(th, Activation::relu(), b.data).value;
      DescentOptions opt;
      opt.max_iters = 200;
      DescentResult r = projected_descent(th, Activation::relu(), b.data, signs, opt);
      EXPECT_LE(r.loss, start);
      EXPECT_TRUE(respects_signs(r.theta.U, signs));
      EXPECT_NEAR(r.loss, risk_discrete(r.theta, Activation::relu(), b.data).value, 1e-12 * (1 + r.loss));
    }
  }
}

TEST(ProjectedDescent, FindsLeastSquaresForLinearModel) {
  Rng rng(6);
  const Mat X = oracle::gaussian(rng, 200, 3);
  const Mat Wt = oracle::gaussian(rng, 2, 3);
  const Vec y = (X * Wt.transpose()).rowwise().sum();
  const Discrete d = Discrete::uniform(X, y);
  TwoLayerParams th{Mat::Ones(1, 2), oracle::gaussian(rng, 2, 3), std::nullopt};
  DescentOptions opt;
  opt.max_iters = 5000;
  DescentResult r = projected_descent(th, Activation::linear(), d, {}, opt);
  EXPECT_LE(r.loss, 1e-8);
}

TEST(VerifyGap, ReluWitnessAtTen) {
  const AdversarialBuild& b = relu_build_m10();
  const AdversarialReport r = verify_gap(b.spec, b.data, {}, 7);
  EXPECT_TRUE(r.pass);
  EXPECT_GE(r.gap, 10.0);
  EXPECT_GE(r.barrier_estimate, 9.5);
  EXPECT_TRUE(respects_signs(r.incumbent1.U, omega1_signs(2)));
  EXPECT_TRUE(respects_signs(r.incumbent2.U, omega2_signs(2)));
  // Any nonnegative network leaves the g2 half unexplained.
  EXPECT_GE(r.min_omega2, b.spec.beta * b.spec.beta * b.spec.psi_v_sq * (1 - 1e-12));
  EXPECT_NE(r.evidence.find("empirical"), std::string::npos);

  const TrapReport t = trap_descents(b.spec, b.data, r, {}, 7);
  ASSERT_EQ(t.runs.size(), 20u);
  EXPECT_TRUE(t.pass);
  for (const TrapRun& run : t.runs) {
    EXPECT_LT(run.start_loss, r.min_omega2 + 5.0);
    EXPECT_GE(run.final_loss, r.min_omega1 + 10.0);
  }
}

TEST(VerifyGap, GapGrowsWithM) {
  AdversarialBudget budget;
  budget.starts = 40;
  double prev = -1;
  for (double M : {1.0, 10.0, 100.0}) {
    const AdversarialBuild b = build_adversarial(Activation::relu(), 3, 2, M, 11);
    const AdversarialReport r = verify_gap(b.spec, b.data, budget, 11);
    EXPECT_TRUE(r.pass) << M;
    EXPECT_GE(r.gap, M);
    EXPECT_GE(r.gap, prev);
    prev = r.gap;
  }
}

TEST(VerifyGap, Deterministic) {
  const AdversarialBuild& b = relu_build_m10();
  AdversarialBudget budget;
  budget.starts = 10;
  const AdversarialReport a = verify_gap(b.spec, b.data, budget, 9);
  const AdversarialReport c = verify_gap(b.spec, b.data, budget, 9);
  EXPECT_EQ(a.min_omega1, c.min_omega1);
  EXPECT_EQ(a.min_omega2, c.min_omega2);
  EXPECT_EQ(a.barrier_estimate, c.barrier_estimate);
}

TEST(VerifyGap, QuadraticBelowSymmetricRank) {
  const AdversarialBuild b = build_adversarial(Activation::quadratic(), 4, 2, 10.0, 3);
  AdversarialBudget budget;
  budget.starts = 20;
  const AdversarialReport r = verify_gap(b.spec, b.data, budget, 3);
  EXPECT_TRUE(r.pass);
  EXPECT_GE(r.gap, 10.0);
}

TEST(BarrierEstimate, StraightLineOfConstantPathIsZero) {
  const AdversarialBuild& b = relu_build_m10();
  const TwoLayerParams th{b.spec.g1.alpha.transpose(), b.spec.g1.V, std::nullopt};
  const double l = risk_discrete(th, Activation::relu(), b.data).value;
  EXPECT_NEAR(barrier_estimate(th, th, Activation::relu(), b.data, l, 10), 0.0, 1e-9 * l);
}
