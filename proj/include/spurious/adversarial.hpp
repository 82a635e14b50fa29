#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "spurious/activation.hpp"
#include "spurious/errors.hpp"
#include "spurious/linalg.hpp"
#include "spurious/model.hpp"
#include "spurious/risk.hpp"
#include "spurious/rng.hpp"

namespace spurious {

// g(x) = sum_i alpha_i rho(<v_i, x>), rows of V are the v_i.
struct TargetNetwork {
  Vec alpha;
  Mat V;

  Vec eval(const Activation& rho, const Mat& X) const { return rho.apply(X * V.transpose()) * alpha; }
};

struct AdversarialSpec {
  int n = 0;
  int p = 0;
  Activation act = Activation::relu();
  double M = 0;
  double margin = 1.1;  // both inequalities are met with margin * M
  TargetNetwork g1;     // p neurons orthogonal to e_n
  double beta = 0;      // g2 = beta rho(x_n)
  long n_support = 2000;
  std::uint64_t seed = 0;

  // Quantities realized on the emitted support.
  double epsilon = 0;      // estimate of inf over (p-1)-neuron nonneg nets of E|f - g1|^2
  double rho0 = 0;         // rho(0)
  double C = 0;            // E[g1] + E[g2]
  double psi_v_sq = 0;     // E|rho(X_n)|^2
  Vec psi_vi_sq;           // E|rho(<v_i, X>)|^2
  double min_alpha_psi = 0;  // min_i alpha_i^2 E|rho(<v_i, X>)|^2

  Vec v_last() const {
    Vec e = Vec::Zero(n);
    e(n - 1) = 1.0;
    return e;
  }
  TargetNetwork g2() const { return {Vec::Constant(1, beta), v_last().transpose()}; }

  // Slack in the two construction inequalities; both are >= 0 on a valid spec.
  double epsilon_slack() const { return epsilon - (M + C * rho0); }
  double beta_slack() const { return beta * beta * psi_v_sq - (M + C * rho0 + min_alpha_psi); }
};

struct AdversarialBuild {
  AdversarialSpec spec;
  Discrete data;
};

// Sign pattern on u: +1 keeps u_i >= 0, -1 keeps u_i <= 0, 0 leaves it free.
using SignPattern = std::vector<int>;

// Low-loss region of the construction: p-1 positive output weights and one negative.
inline SignPattern omega1_signs(int p) {
  SignPattern s(p, 1);
  s.back() = -1;
  return s;
}

// The valley: all output weights positive.
inline SignPattern omega2_signs(int p) { return SignPattern(p, 1); }

inline void project_signs(Mat& U, const SignPattern& signs) {
  for (Eigen::Index i = 0; i < U.cols(); ++i) {
    const int s = signs.empty() ? 0 : signs[i];
    if (s > 0) U.col(i) = U.col(i).cwiseMax(0.0);
    if (s < 0) U.col(i) = U.col(i).cwiseMin(0.0);
  }
}

inline bool respects_signs(const Mat& U, const SignPattern& signs) {
  for (Eigen::Index i = 0; i < U.cols(); ++i) {
    if (signs[i] > 0 && (U.col(i).array() < 0.0).any()) return false;
    if (signs[i] < 0 && (U.col(i).array() > 0.0).any()) return false;
  }
  return true;
}

struct DescentOptions {
  int max_iters = 1000;
  double rel_tol = 1e-13;
  double step0 = 1e-2;
  double max_step = 1e3;
};

struct DescentResult {
  TwoLayerParams theta;
  double loss = 0;
  int iters = 0;
};

// Projected gradient with backtracking on the sufficient-decrease bound.
inline DescentResult projected_descent(TwoLayerParams th, const Activation& rho, const Discrete& d,
                                       const SignPattern& signs, const DescentOptions& opt = {}) {
  project_signs(th.U, signs);
  double loss = risk_discrete(th, rho, d).value;
  double eta = opt.step0;
  int it = 0;
  for (; it < opt.max_iters; ++it) {
    const RiskGradient g = risk_gradient(th, rho, d);
    bool moved = false;
    TwoLayerParams cand = th;
    double cl = loss;
    while (eta > 1e-20) {
      cand.U = th.U - eta * g.dU;
      project_signs(cand.U, signs);
      cand.W = th.W - eta * g.dW;
      cl = risk_discrete(cand, rho, d).value;
      const Mat dU = cand.U - th.U, dW = cand.W - th.W;
      const double lin = (g.dU.array() * dU.array()).sum() + (g.dW.array() * dW.array()).sum();
      const double sq = dU.squaredNorm() + dW.squaredNorm();
      if (sq == 0.0) break;
      if (cl <= loss + lin + sq / (2.0 * eta)) {
        moved = true;
        break;
      }
      eta *= 0.5;
    }
    if (!moved) break;
    const double drop = loss - cl;
    th = std::move(cand);
    loss = cl;
    eta = std::min(2.0 * eta, opt.max_step);
    if (drop <= opt.rel_tol * (1.0 + std::abs(loss))) {
      ++it;
      break;
    }
  }
  return {std::move(th), loss, it};
}

namespace detail {

inline Mat adversarial_directions(int n, int p, bool even_act, Rng& rng) {
  // v_i in the span of e_1 .. e_{n-1}, pairwise angle >= 30 degrees.
  const double max_cos = std::cos(std::numbers::pi / 6.0);
  Mat V = Mat::Zero(p, n);
  for (int i = 0; i < p; ++i) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw NumericalError("could not draw separated directions");
      Vec v = Vec::Zero(n);
      for (int j = 0; j + 1 < n; ++j) v(j) = rng.normal();
      if (v.norm() < 1e-12) continue;
      v.normalize();
      bool ok = true;
      for (int k = 0; k < i && ok; ++k) {
        const double c = V.row(k).dot(v);
        ok = (even_act ? std::abs(c) : c) <= max_cos;
      }
      if (ok) {
        V.row(i) = v.transpose();
        break;
      }
    }
  }
  return V;
}

// X = (Z Xbar, (1 - Z) Xbar_n), Z ~ Ber(1/2), Xbar and Xbar_n standard normal.
inline Mat adversarial_support(int n, long count, Rng& rng) {
  Mat X = Mat::Zero(count, n);
  for (long s = 0; s < count; ++s) {
    const bool z = rng.bernoulli(0.5);
    for (int j = 0; j + 1 < n; ++j) {
      const double g = rng.normal();
      if (z) X(s, j) = g;
    }
    const double g = rng.normal();
    if (!z) X(s, n - 1) = g;
  }
  return X;
}

inline Discrete with_target(const Mat& X, const Vec& y) { return Discrete::uniform(X, y); }

inline TwoLayerParams random_start(int n, const SignPattern& signs, const Vec& scale, Rng& rng) {
  const int p = static_cast<int>(signs.size());
  TwoLayerParams th{Mat(1, p), Mat(p, n), std::nullopt};
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < n; ++j) th.W(i, j) = rng.normal();
    const double mag = std::abs(rng.normal()) * scale(i);
    th.U(0, i) = signs[i] < 0 ? -mag : mag;
  }
  return th;
}

}  // namespace detail

struct EpsilonBudget {
  int starts = 30;
  DescentOptions descent;
};

// Best E|f - g1|^2 found over q-neuron networks with nonnegative output weights.
inline double epsilon_lower_bound(const TargetNetwork& g1, const Activation& rho, int q, const Mat& X,
                                  const EpsilonBudget& budget = {}, std::uint64_t seed = 0) {
  if (q < 0) throw std::invalid_argument("q must be non-negative");
  const Vec y = g1.eval(rho, X);
  if (q == 0) return y.squaredNorm() / static_cast<double>(y.size());
  const Discrete d = detail::with_target(X, y);
  const int n = static_cast<int>(X.cols());
  const int p = static_cast<int>(g1.alpha.size());
  const SignPattern signs(q, 1);
  double best = std::numeric_limits<double>::infinity();
  // Informed starts: q consecutive neurons of g1 (cyclically).
  for (int s = 0; s < p; ++s) {
    TwoLayerParams th{Mat(1, q), Mat(q, n), std::nullopt};
    for (int i = 0; i < q; ++i) {
      th.U(0, i) = g1.alpha((s + i) % p);
      th.W.row(i) = g1.V.row((s + i) % p);
    }
    best = std::min(best, projected_descent(th, rho, d, signs, budget.descent).loss);
  }
  Rng rng = Rng(seed).split(stream::kAdversarialBuild).split(1);
  const Vec scale = Vec::Constant(q, g1.alpha.mean());
  for (int s = 0; s < budget.starts; ++s)
    best = std::min(best, projected_descent(detail::random_start(n, signs, scale, rng), rho, d, signs,
                                            budget.descent).loss);
  return best;
}

inline void check_adversarial_preconditions(const Activation& act, int n, int p) {
  if (p < 2) throw PreconditionError("region degenerate: p = 1 leaves no sign pattern with a negative weight");
  if (n < 3) throw PreconditionError("adversarial construction needs n >= 3");
  if (!act.is_nonnegative()) throw PreconditionError("adversarial construction needs a non-negative activation");
  if (act.is_polynomial() && !(act.is_quadratic() && p <= n - 1))
    throw PreconditionError("polynomial activations are only supported as Quadratic with p <= n - 1");
}

inline AdversarialBuild build_adversarial(const Activation& act, int n, int p, double M, std::uint64_t seed,
                                          long n_support = 2000, double margin = 1.1,
                                          const EpsilonBudget& eps_budget = {}) {
  check_adversarial_preconditions(act, n, p);
  if (!(M > 0)) throw std::invalid_argument("M must be positive");
  if (margin < 1.0) throw std::invalid_argument("margin must be at least 1");
  Rng root(seed);
  Rng rng = root.split(stream::kAdversarialBuild);

  AdversarialSpec s;
  s.n = n;
  s.p = p;
  s.act = act;
  s.M = M;
  s.margin = margin;
  s.seed = seed;
  s.n_support = n_support;
  s.g1.V = detail::adversarial_directions(n, p, act.is_quadratic(), rng);
  s.g1.alpha = Vec(p);
  for (int i = 0; i < p; ++i) s.g1.alpha(i) = 0.5 + rng.uniform();

  const Mat X = detail::adversarial_support(n, n_support, rng);
  const double N = static_cast<double>(n_support);
  s.rho0 = act(0.0);
  const Vec rho_n = act.apply(X.col(n - 1));
  s.psi_v_sq = rho_n.squaredNorm() / N;
  const Mat feats = act.apply(X * s.g1.V.transpose());
  s.psi_vi_sq = feats.colwise().squaredNorm().transpose() / N;

  // epsilon scales with alpha^2 since the competitor class is a cone.
  const double eps_unit = epsilon_lower_bound(s.g1, act, p - 1, X, eps_budget, seed);
  if (!(eps_unit > 0)) throw NumericalError("estimated epsilon is zero; directions are not separated");
  const double target = margin * M;
  double scale = 1.0;
  for (int round = 0; round < 200; ++round) {
    const Vec alpha = scale * s.g1.alpha;
    const double mean_g1 = (feats * alpha).sum() / N;
    const double min_ap = (alpha.array().square() * s.psi_vi_sq.array()).minCoeff();
    // beta^2 a - beta b - c >= 0 with C = E g1 + beta E rho(X_n).
    const double a = s.psi_v_sq, b = s.rho0 * rho_n.mean(), c = target + s.rho0 * mean_g1 + min_ap;
    const double beta = (b + std::sqrt(b * b + 4.0 * a * c)) / (2.0 * a);
    const double C = mean_g1 + beta * rho_n.mean();
    if (scale * scale * eps_unit >= target + C * s.rho0) {
      s.g1.alpha = alpha;
      s.beta = beta;
      s.C = C;
      s.epsilon = scale * scale * eps_unit;
      s.min_alpha_psi = min_ap;
      const Vec y = s.g1.eval(act, X) - s.beta * rho_n;
      return {s, detail::with_target(X, y)};
    }
    scale = std::max(scale * 1.25, std::sqrt((target + C * s.rho0) / eps_unit));
  }
  throw NumericalError("could not satisfy the construction inequalities");
}

struct AdversarialBudget {
  int starts = 200;
  int trap_starts = 20;
  int barrier_grid = 200;  // samples per probe segment
  DescentOptions descent;
};

struct AdversarialReport {
  double min_omega1 = 0;
  double min_omega2 = 0;
  double gap = 0;
  double barrier_estimate = 0;
  TwoLayerParams incumbent1;
  TwoLayerParams incumbent2;
  bool pass = false;
  std::string evidence =
      "empirical: region minima come from multistart local descent and the barrier is probed on finitely many "
      "paths; neither is a certified bound";
};

namespace detail {

inline TwoLayerParams informed_omega1(const AdversarialSpec& s, int drop) {
  TwoLayerParams th{Mat(1, s.p), Mat(s.p, s.n), std::nullopt};
  int r = 0;
  for (int i = 0; i < s.p; ++i) {
    if (i == drop) continue;
    th.U(0, r) = s.g1.alpha(i);
    th.W.row(r++) = s.g1.V.row(i);
  }
  th.U(0, s.p - 1) = -s.beta;
  th.W.row(s.p - 1) = s.v_last().transpose();
  return th;
}

inline DescentResult region_minimum(const AdversarialSpec& s, const Discrete& d, const SignPattern& signs,
                                    const std::vector<TwoLayerParams>& informed, const AdversarialBudget& b,
                                    Rng rng) {
  Vec scale = Vec::Constant(s.p, s.g1.alpha.mean());
  for (int i = 0; i < s.p; ++i)
    if (signs[i] < 0) scale(i) = s.beta;
  DescentResult best;
  best.loss = std::numeric_limits<double>::infinity();
  auto consider = [&](const TwoLayerParams& th) {
    DescentResult r = projected_descent(th, s.act, d, signs, b.descent);
    if (r.loss < best.loss) best = std::move(r);
  };
  for (const auto& th : informed) consider(th);
  for (int k = 0; k < b.starts; ++k) consider(random_start(s.n, signs, scale, rng));
  return best;
}

// max loss along a piecewise-linear sequence of parameter states.
inline double max_along(const std::vector<TwoLayerParams>& knots, const Activation& rho, const Discrete& d, int grid) {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < knots.size(); ++k)
    for (int g = 0; g <= grid; ++g) {
      const double t = static_cast<double>(g) / grid;
      worst = std::max(worst, risk_discrete(lerp(knots[k], knots[k + 1], t), rho, d).value);
    }
  return worst;
}

inline double max_along_reoptimized(const TwoLayerParams& a, const TwoLayerParams& b, const Activation& rho,
                                    const Discrete& d, int grid) {
  // U_a -> q(W_a), then W_t with U = q(W_t), then q(W_b) -> U_b.
  const TwoLayerParams qa{optimal_second_layer(a.W, d, rho), a.W, std::nullopt};
  const TwoLayerParams qb{optimal_second_layer(b.W, d, rho), b.W, std::nullopt};
  double worst = std::max(max_along({a, qa}, rho, d, grid), max_along({qb, b}, rho, d, grid));
  for (int g = 0; g <= grid; ++g) {
    const double t = static_cast<double>(g) / grid;
    const Mat W = (1.0 - t) * a.W + t * b.W;
    const TwoLayerParams th{optimal_second_layer(W, d, rho), W, std::nullopt};
    worst = std::max(worst, risk_discrete(th, rho, d).value);
  }
  return worst;
}

}  // namespace detail

// Probed barrier: lowest path maximum among the probes, minus min_omega2.
inline double barrier_estimate(const TwoLayerParams& from2, const TwoLayerParams& to1, const Activation& rho,
                               const Discrete& d, double min_omega2, int grid = 200) {
  const double straight = detail::max_along({from2, to1}, rho, d, grid);
  const double reopt = detail::max_along_reoptimized(from2, to1, rho, d, grid);
  return std::min(straight, reopt) - min_omega2;
}

inline AdversarialReport verify_gap(const AdversarialSpec& s, const Discrete& d, const AdversarialBudget& b = {},
                                    std::uint64_t seed = 0) {
  AdversarialReport r;
  Rng rng = Rng(seed).split(stream::kAdversarialVerify);
  std::vector<TwoLayerParams> informed1;
  for (int drop = 0; drop < s.p; ++drop) informed1.push_back(detail::informed_omega1(s, drop));
  const std::vector<TwoLayerParams> informed2{{s.g1.alpha.transpose(), s.g1.V, std::nullopt}};
  DescentResult m1 = detail::region_minimum(s, d, omega1_signs(s.p), informed1, b, rng.split(1));
  DescentResult m2 = detail::region_minimum(s, d, omega2_signs(s.p), informed2, b, rng.split(2));
  r.min_omega1 = m1.loss;
  r.min_omega2 = m2.loss;
  r.incumbent1 = std::move(m1.theta);
  r.incumbent2 = std::move(m2.theta);
  r.gap = r.min_omega2 - r.min_omega1;
  r.barrier_estimate = barrier_estimate(r.incumbent2, r.incumbent1, s.act, d, r.min_omega2, b.barrier_grid);
  r.pass = r.gap >= s.M && r.barrier_estimate >= s.M * (1.0 - 0.05);
  return r;
}

struct TrapRun {
  double start_loss = 0;
  double final_loss = 0;
  Vec final_u;
};

struct TrapReport {
  std::vector<TrapRun> runs;
  double threshold = 0;  // min_omega1 + M
  bool pass = false;     // every run ends at or above the threshold
};

// Unconstrained descent from random points of the valley: Omega2 with loss
// below min_omega2 + M / 2.
inline TrapReport trap_descents(const AdversarialSpec& s, const Discrete& d, const AdversarialReport& v,
                                const AdversarialBudget& b = {}, std::uint64_t seed = 0) {
  TrapReport t;
  t.threshold = v.min_omega1 + s.M;
  t.pass = true;
  Rng rng = Rng(seed).split(stream::kAdversarialVerify).split(3);
  const double level = v.min_omega2 + 0.5 * s.M;
  const SignPattern free;
  for (int k = 0; k < b.trap_starts; ++k) {
    TwoLayerParams th = v.incumbent2;
    double sigma = 0.5;
    for (int attempt = 0;; ++attempt) {
      th = v.incumbent2;
      for (Eigen::Index i = 0; i < th.p(); ++i) {
        th.U(0, i) = std::abs(th.U(0, i) * (1.0 + sigma * rng.normal())) + 1e-3;
        for (Eigen::Index j = 0; j < th.n(); ++j) th.W(i, j) += sigma * rng.normal();
      }
      if (risk_discrete(th, s.act, d).value < level) break;
      if (attempt > 200) throw NumericalError("could not sample a start inside the valley");
      sigma *= 0.8;
    }
    TrapRun run;
    run.start_loss = risk_discrete(th, s.act, d).value;
    DescentResult res = projected_descent(th, s.act, d, free, b.descent);
    run.final_loss = res.loss;
    run.final_u = res.theta.U.row(0).transpose();
    if (run.final_loss < t.threshold) t.pass = false;
    t.runs.push_back(std::move(run));
  }
  return t;
}

}  // namespace spurious
