#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "spurious/activation.hpp"
#include "spurious/errors.hpp"
#include "spurious/linalg.hpp"
#include "spurious/model.hpp"
#include "spurious/path.hpp"
#include "spurious/risk.hpp"
#include "spurious/rng.hpp"

namespace spurious {

inline long binomial(long n, long k) {
  if (k < 0 || k > n) return 0;
  long r = 1;
  for (long i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Exponent vectors of total degree k in n variables, ordered so that the
// exponent of x_1 decreases first: (2,0), (1,1), (0,2).
inline std::vector<std::vector<int>> monomial_exponents(int n, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(n, 0);
  std::function<void(int, int)> rec = [&](int pos, int left) {
    if (pos == n - 1) {
      cur[pos] = left;
      out.push_back(cur);
      return;
    }
    for (int e = left; e >= 0; --e) {
      cur[pos] = e;
      rec(pos + 1, left - e);
    }
  };
  if (n > 0) rec(0, k);
  return out;
}

struct FeatureBasis {
  enum class Kind { DiscreteEval, Monomials };

  Kind kind = Kind::DiscreteEval;
  Mat points;                // DiscreteEval: N x n
  std::vector<int> degrees;  // Monomials: sorted degree set
  int n = 0;
  long q = 0;  // dimension of the span of all filters in this basis

  static FeatureBasis monomials(std::vector<int> degrees, int n) {
    std::sort(degrees.begin(), degrees.end());
    degrees.erase(std::unique(degrees.begin(), degrees.end()), degrees.end());
    FeatureBasis b;
    b.kind = Kind::Monomials;
    b.degrees = degrees;
    b.n = n;
    for (int k : degrees) b.q += binomial(n + k - 1, k);
    return b;
  }

  // Degrees carrying a nonzero coefficient, the constant included, so that
  // the filters are represented exactly.
  static FeatureBasis for_polynomial(const Activation& rho, int n) {
    auto c = rho.polynomial_coeffs();
    if (!c) throw std::invalid_argument("monomial basis requires a polynomial activation");
    std::vector<int> deg;
    for (std::size_t k = 0; k < c->size(); ++k)
      if ((*c)[k] != 0.0) deg.push_back(static_cast<int>(k));
    return monomials(deg, n);
  }

  // Filter evaluations on a finite set of points. q is estimated as the rank
  // of the feature matrix of many Gaussian filters.
  static FeatureBasis discrete(const Mat& X, const Activation& rho, std::uint64_t seed = 0) {
    FeatureBasis b;
    b.kind = Kind::DiscreteEval;
    b.points = X;
    b.n = static_cast<int>(X.cols());
    Rng rng = Rng(seed).split(stream::kFreshDirections);
    const Eigen::Index probes = std::max<Eigen::Index>(4 * X.rows(), 32);
    Mat w(probes, X.cols());
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.normal();
    b.q = static_cast<long>(numerical_rank(rho.apply(w * X.transpose())));
    return b;
  }

  Eigen::Index coordinate_count() const {
    if (kind == Kind::DiscreteEval) return points.rows();
    return q;
  }
};

// Row i holds the coordinates of the filter x -> rho(<w_i, x>) in the basis.
inline Mat feature_matrix(const Mat& W, const Activation& rho, const FeatureBasis& basis) {
  require_shape(W.cols() == basis.n, "filter dimension does not match the basis");
  if (basis.kind == FeatureBasis::Kind::DiscreteEval) return rho.apply(W * basis.points.transpose());

  auto c = rho.polynomial_coeffs();
  if (!c) throw std::invalid_argument("monomial basis requires a polynomial activation");
  for (std::size_t k = 0; k < c->size(); ++k)
    if ((*c)[k] != 0.0 && !std::binary_search(basis.degrees.begin(), basis.degrees.end(), static_cast<int>(k)))
      throw std::invalid_argument("activation has degree " + std::to_string(k) + " outside the basis degree set");

  Mat f(W.rows(), basis.q);
  Eigen::Index col = 0;
  for (int k : basis.degrees) {
    const double a = k < static_cast<int>(c->size()) ? (*c)[k] : 0.0;
    for (const auto& alpha : monomial_exponents(basis.n, k)) {
      // multinomial coefficient k! / prod(alpha_j!)
      double mult = 1.0;
      int run = 0;
      for (int e : alpha) {
        for (int t = 1; t <= e; ++t) mult *= static_cast<double>(++run) / t;
      }
      for (Eigen::Index i = 0; i < W.rows(); ++i) {
        double mono = 1.0;
        for (int j = 0; j < basis.n; ++j) mono *= std::pow(W(i, j), alpha[j]);
        f(i, col) = a * mult * mono;
      }
      ++col;
    }
  }
  return f;
}

// Monomial coordinates phi(x) matching feature_matrix, so that
// rho(<w, x>) = feature_matrix(w) . phi(x).
inline Mat monomial_design(const Mat& X, const FeatureBasis& basis) {
  Mat out(X.rows(), basis.q);
  Eigen::Index col = 0;
  for (int k : basis.degrees)
    for (const auto& alpha : monomial_exponents(basis.n, k)) {
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double mono = 1.0;
        for (int j = 0; j < basis.n; ++j) mono *= std::pow(X(i, j), alpha[j]);
        out(i, col) = mono;
      }
      ++col;
    }
  return out;
}

using FeatureMap = std::function<Mat(const Mat&)>;

inline FeatureMap linear_features() {
  return [](const Mat& w) { return w; };
}

inline FeatureMap basis_features(const Activation& rho, const FeatureBasis& basis) {
  return [rho, basis](const Mat& w) { return feature_matrix(w, rho, basis); };
}

// Rejection sampling of Gaussian rows that strictly increase the feature rank.
inline Mat fresh_directions(const Mat& current, const FeatureMap& features, Eigen::Index needed, Rng& rng,
                            int budget_per_row = 200) {
  const Eigen::Index n = current.cols();
  Mat rows = current;
  Mat out(0, n);
  Eigen::Index rank = rows.rows() ? numerical_rank(features(rows)) : 0;
  int attempts = 0;
  while (out.rows() < needed) {
    if (attempts++ >= budget_per_row * needed)
      throw NumericalError("fresh direction budget exhausted: the feature span cannot be extended");
    Vec g(n);
    for (Eigen::Index j = 0; j < n; ++j) g(j) = rng.normal();
    Mat cand(rows.rows() + 1, n);
    cand << rows, g.transpose();
    const Eigen::Index r = numerical_rank(features(cand));
    if (r > rank) {
      rows = cand;
      rank = r;
      out.conservativeResize(out.rows() + 1, n);
      out.row(out.rows() - 1) = g.transpose();
    }
  }
  return out;
}

inline Mat fresh_directions(const Mat& current, const Activation& rho, const FeatureBasis& basis, Eigen::Index needed,
                            std::uint64_t seed) {
  Rng rng = Rng(seed).split(stream::kFreshDirections);
  return fresh_directions(current, basis_features(rho, basis), needed, rng);
}

// Step 1 of the generic construction: U1 absorbs the output weights of
// dependent filters, and W1 replaces some dependent rows so the feature
// matrix reaches `target` rank.
struct RankRepair {
  Mat U1;
  Mat W1;
  Eigen::Index rank_before = 0;
  Eigen::Index target = 0;
  std::vector<Eigen::Index> independent;
  std::vector<Eigen::Index> dependent;
  std::vector<Eigen::Index> moved;
  bool needed = false;
};

inline RankRepair plan_rank_repair(const Mat& U, const Mat& W, const FeatureMap& features, Eigen::Index target,
                                   Rng& rng) {
  require_shape(U.cols() == W.rows(), "U and W disagree on the hidden width");
  RankRepair rep;
  rep.U1 = U;
  rep.W1 = W;
  rep.target = target;
  const Eigen::Index p = W.rows();
  const Mat f = features(W);
  rep.rank_before = p ? numerical_rank(f) : 0;
  if (rep.rank_before >= target) return rep;
  if (p < target) throw PreconditionError("hidden width is below the required feature rank");
  rep.needed = true;

  const Eigen::Index r = rep.rank_before;
  Eigen::ColPivHouseholderQR<Mat> qr(f.transpose());
  const auto& perm = qr.colsPermutation().indices();
  for (Eigen::Index i = 0; i < p; ++i) (i < r ? rep.independent : rep.dependent).push_back(perm(i));
  std::sort(rep.independent.begin(), rep.independent.end());
  std::sort(rep.dependent.begin(), rep.dependent.end());

  Mat fi(f.cols(), r), fj(f.cols(), static_cast<Eigen::Index>(rep.dependent.size()));
  for (Eigen::Index k = 0; k < r; ++k) fi.col(k) = f.row(rep.independent[k]).transpose();
  for (std::size_t k = 0; k < rep.dependent.size(); ++k) fj.col(k) = f.row(rep.dependent[k]).transpose();
  const Mat a = lstsq(fi, fj);  // r x |J|

  Mat uj(U.rows(), fj.cols());
  for (std::size_t k = 0; k < rep.dependent.size(); ++k) uj.col(k) = U.col(rep.dependent[k]);
  const Mat transfer = uj * a.transpose();
  for (Eigen::Index k = 0; k < r; ++k) rep.U1.col(rep.independent[k]) += transfer.col(k);
  for (auto j : rep.dependent) rep.U1.col(j).setZero();

  Mat wi(r, W.cols());
  for (Eigen::Index k = 0; k < r; ++k) wi.row(k) = W.row(rep.independent[k]);
  const Mat fresh = fresh_directions(wi, features, target - r, rng);
  for (Eigen::Index k = 0; k < fresh.rows(); ++k) {
    rep.W1.row(rep.dependent[k]) = fresh.row(k);
    rep.moved.push_back(rep.dependent[k]);
  }
  return rep;
}

struct GenericPath {
  ParamPath<TwoLayerParams> path;
  RankRepair repair;
  Mat U_star;
  double endpoint_risk = 0;
};

// Three phases: transfer of output weights (1a), replacement of dependent
// filters (1b), interpolation of U to the least squares optimum (2).
inline GenericPath rank_completion_path(const TwoLayerParams& initial, const Activation& rho, const FeatureBasis& basis,
                                        const Discrete& data, std::uint64_t seed = 0) {
  initial.check();
  require_shape(!initial.b, "the generic construction has no bias");
  if (initial.p() < basis.q)
    throw PreconditionError("hidden width p=" + std::to_string(initial.p()) + " is below q=" + std::to_string(basis.q));
  Rng rng = Rng(seed).split(stream::kFreshDirections);
  GenericPath g;
  g.repair = plan_rank_repair(initial.U, initial.W, basis_features(rho, basis), basis.q, rng);

  const TwoLayerParams a0 = initial;
  const TwoLayerParams a1{g.repair.U1, initial.W, std::nullopt};
  const TwoLayerParams a2{g.repair.U1, g.repair.W1, std::nullopt};
  g.U_star = optimal_second_layer(a2.W, data, rho);
  const TwoLayerParams a3{g.U_star, a2.W, std::nullopt};

  g.path.append(linear_segment(a0, a1, Contract::FunctionInvariant, "transfer output weights"));
  g.path.append(linear_segment(a1, a2, Contract::FunctionInvariant, "replace dependent filters"));
  g.path.append(linear_segment(a2, a3, Contract::LossNonIncreasing, "second layer to optimum"));
  g.endpoint_risk = risk_discrete(a3, rho, data).value;
  return g;
}

// Relative change of the network outputs on the data since `ref`.
inline double function_drift(const TwoLayerParams& th, const TwoLayerParams& ref, const Activation& rho, const Mat& X) {
  const Mat a = eval_network_batch(th, rho, X), b = eval_network_batch(ref, rho, X);
  double d = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    d = std::max(d, (a.row(i) - b.row(i)).norm() / (1.0 + b.row(i).norm()));
  return d;
}

inline PathReport generic_path_report(const GenericPath& g, const Activation& rho, const Discrete& data, int grid,
                                      double oracle, Tolerances tol) {
  auto loss = [&](const TwoLayerParams& th) { return risk_discrete(th, rho, data).value; };
  auto drift = [&](const TwoLayerParams& th, const TwoLayerParams& ref) { return function_drift(th, ref, rho, data.X); };
  return sample_path(g.path, loss, drift, grid, oracle, tol);
}

}  // namespace spurious
