#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <tuple>
#include <string>
#include <vector>

#include "spurious/activation.hpp"
#include "spurious/errors.hpp"
#include "spurious/linalg.hpp"
#include "spurious/risk.hpp"
#include "spurious/rng.hpp"

namespace spurious {

// Rows (w_i, b_i) on the unit sphere of R^{n+1}.
struct SphereWeights {
  Mat W;  // p x n
  Vec b;  // p

  Eigen::Index p() const { return W.rows(); }
  SphereWeights head(Eigen::Index k) const { return {W.topRows(k), b.head(k)}; }
};

// Rows are drawn in order from one stream, so a smaller p gives a prefix of a larger one.
inline SphereWeights sample_sphere_weights(Eigen::Index p, Eigen::Index n, Rng rng) {
  if (p < 1 || n < 1) throw std::invalid_argument("p and n must be positive");
  SphereWeights s{Mat(p, n), Vec(p)};
  Vec row(n + 1);
  for (Eigen::Index i = 0; i < p; ++i) {
    do {
      for (Eigen::Index j = 0; j <= n; ++j) row(j) = rng.normal();
    } while (row.norm() < 1e-300);
    row.normalize();
    s.W.row(i) = row.head(n).transpose();
    s.b(i) = row(n);
  }
  return s;
}

inline SphereWeights sample_sphere_weights(Eigen::Index p, Eigen::Index n, std::uint64_t seed) {
  return sample_sphere_weights(p, n, Rng(seed).split(stream::kQuadratureWeights));
}

// Feature matrix rho(<w_i, x_j> + b_i), N x p.
inline Mat sphere_features(const SphereWeights& s, const Activation& rho, const Mat& X) {
  require_shape(X.cols() == s.W.cols(), "input dimension mismatch");
  Mat z = X * s.W.transpose();
  z.rowwise() += s.b.transpose();
  return rho.apply(z);
}

using GStar = std::function<double(const Vec& w, double b)>;

inline GStar default_gstar(double c = 1.0) {
  return [c](const Vec& w, double) { return c * w(0); };
}

// f(x) = (1/Q) sum_j g*(w_j, b_j) rho(<w_j, x> + b_j).
struct SynthTarget {
  SphereWeights atoms;
  Vec coef;  // g*(w_j, b_j)
  Activation act = Activation::relu();

  Eigen::Index Q() const { return atoms.p(); }

  Vec eval(const Mat& X) const {
    constexpr Eigen::Index kChunk = 2048;
    Vec f = Vec::Zero(X.rows());
    for (Eigen::Index s = 0; s < Q(); s += kChunk) {
      const Eigen::Index k = std::min(kChunk, Q() - s);
      const SphereWeights part{atoms.W.middleRows(s, k), atoms.b.segment(s, k)};
      f += sphere_features(part, act, X) * coef.segment(s, k);
    }
    return f / static_cast<double>(Q());
  }
};

inline SynthTarget synth_target(const GStar& gstar, const Activation& act, Eigen::Index Q, Eigen::Index n,
                                std::uint64_t seed) {
  SynthTarget t{sample_sphere_weights(Q, n, Rng(seed).split(stream::kQuadratureTarget)), Vec(Q), act};
  for (Eigen::Index j = 0; j < Q; ++j) t.coef(j) = gstar(t.atoms.W.row(j).transpose(), t.atoms.b(j));
  return t;
}

struct SecondLayerFit {
  Vec u;
  double risk = 0;
  bool homogeneous = true;  // false when the activation is not positively homogeneous
};

// Minimum-norm least squares of the targets on the features; weights from the design.
inline SecondLayerFit fit_second_layer(const SphereWeights& s, const Activation& act, const Discrete& d) {
  require_shape(d.Y.cols() == 1, "quadrature fits a scalar target");
  const Mat F = sphere_features(s, act, d.X);
  const Vec sw = d.weights.cwiseSqrt();
  SecondLayerFit fit;
  fit.u = lstsq(sw.asDiagonal() * F, sw.asDiagonal() * d.Y).col(0);
  fit.risk = d.weights.dot((F * fit.u - d.Y.col(0)).array().square().matrix());
  fit.homogeneous = act.is_positively_homogeneous();
  return fit;
}

inline double second_layer_risk(const SphereWeights& s, const Activation& act, const Vec& u, const Discrete& d) {
  const Mat F = sphere_features(s, act, d.X);
  return d.weights.dot((F * u - d.Y.col(0)).array().square().matrix());
}

struct QuadratureRun {
  std::vector<Eigen::Index> p_list{8, 16, 32, 64, 128, 256, 512};
  int trials = 10;
  Eigen::Index n = 5;
  Eigen::Index Q = 100000;
  Eigen::Index n_design = 4096;
  double gstar_scale = 1.0;
  Activation act = Activation::relu();
  std::uint64_t seed = 0;
};

struct CurveRow {
  Eigen::Index p = 0;
  double median = 0;                // held-out excess risk
  std::vector<double> test_risks;   // per trial
  std::vector<double> train_risks;  // per trial
  double mc_median = 0;             // held-out risk of u_i = g*(w_i, b_i) / p
  std::vector<double> mc_train_risks;
};

struct QuadratureCurve {
  std::vector<CurveRow> rows;
  double slope = 0;
  double intercept = 0;
  double mc_slope = 0;  // same fit for the Monte Carlo quadrature weights
  int median_violations = 0;     // adjacent p pairs whose median went up
  bool nested_monotone = true;   // train risk non-increasing in p for every trial
  bool homogeneous = true;
};

inline constexpr double kRiskFloor = 1e-14;

// Least squares line through (log p, log max(median, floor)).
inline std::pair<double, double> loglog_fit(const std::vector<CurveRow>& rows, bool mc = false) {
  const auto m = static_cast<Eigen::Index>(rows.size());
  if (m < 2) throw std::invalid_argument("need at least two widths for a slope");
  Mat A(m, 2);
  Vec y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    A(i, 0) = std::log(static_cast<double>(rows[i].p));
    A(i, 1) = 1.0;
    y(i) = std::log(std::max(mc ? rows[i].mc_median : rows[i].median, kRiskFloor));
  }
  const Vec c = lstsq(A, y).col(0);
  return {c(0), c(1)};
}

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size();
  return k % 2 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

inline QuadratureCurve excess_risk_curve(const QuadratureRun& run) {
  if (run.p_list.empty()) throw std::invalid_argument("p_list is empty");
  if (run.trials < 1) throw std::invalid_argument("trials must be positive");
  std::vector<Eigen::Index> ps = run.p_list;
  std::sort(ps.begin(), ps.end());
  if (ps.front() < 1) throw std::invalid_argument("widths must be positive");

  const GStar gstar = default_gstar(run.gstar_scale);
  const SynthTarget target = synth_target(gstar, run.act, run.Q, run.n, run.seed);
  Rng design = Rng(run.seed).split(stream::kQuadratureDesign);
  auto draw = [&](Eigen::Index N) {
    Mat X(N, run.n);
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index j = 0; j < run.n; ++j) X(i, j) = design.normal();
    return X;
  };
  const Mat Xtr = draw(run.n_design);
  const Mat Xte = draw(run.n_design);
  const Discrete train = Discrete::uniform(Xtr, target.eval(Xtr));
  const Discrete test = Discrete::uniform(Xte, target.eval(Xte));

  QuadratureCurve curve;
  curve.homogeneous = run.act.is_positively_homogeneous();
  curve.rows.resize(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) curve.rows[i].p = ps[i];
  const Rng weights_root = Rng(run.seed).split(stream::kQuadratureWeights);
  std::vector<std::vector<double>> mc_test(ps.size());
  for (int t = 0; t < run.trials; ++t) {
    const SphereWeights all = sample_sphere_weights(ps.back(), run.n, weights_root.split(static_cast<std::uint64_t>(t)));
    double prev_train = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const SphereWeights s = all.head(ps[i]);
      const SecondLayerFit fit = fit_second_layer(s, run.act, train);
      const double te = second_layer_risk(s, run.act, fit.u, test);
      curve.rows[i].train_risks.push_back(fit.risk);
      curve.rows[i].test_risks.push_back(te);
      Vec u_mc(ps[i]);
      for (Eigen::Index k = 0; k < ps[i]; ++k) u_mc(k) = gstar(s.W.row(k).transpose(), s.b(k)) / static_cast<double>(ps[i]);
      curve.rows[i].mc_train_risks.push_back(second_layer_risk(s, run.act, u_mc, train));
      mc_test[i].push_back(second_layer_risk(s, run.act, u_mc, test));
      if (fit.risk > prev_train + 1e-10 * std::max(prev_train, 1e-300)) curve.nested_monotone = false;
      prev_train = fit.risk;
    }
  }
  for (std::size_t i = 0; i < ps.size(); ++i) {
    curve.rows[i].median = median_of(curve.rows[i].test_risks);
    curve.rows[i].mc_median = median_of(mc_test[i]);
  }
  for (std::size_t i = 0; i + 1 < curve.rows.size(); ++i)
    if (curve.rows[i + 1].median > curve.rows[i].median) ++curve.median_violations;
  std::tie(curve.slope, curve.intercept) = loglog_fit(curve.rows);
  curve.mc_slope = loglog_fit(curve.rows, true).first;
  return curve;
}

}  // namespace spurious
