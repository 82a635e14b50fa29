#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <variant>

#include "spurious/activation.hpp"
#include "spurious/errors.hpp"
#include "spurious/linalg.hpp"
#include "spurious/model.hpp"
#include "spurious/rng.hpp"

namespace spurious {

// Finite support: rows of X are inputs, rows of Y targets.
struct Discrete {
  Mat X;        // N x n
  Mat Y;        // N x m
  Vec weights;  // N, sums to 1

  static Discrete uniform(Mat X, Mat Y) {
    const Eigen::Index n = X.rows();
    Discrete d{std::move(X), std::move(Y), Vec::Constant(n, 1.0 / static_cast<double>(n))};
    d.check();
    return d;
  }

  Eigen::Index size() const { return X.rows(); }

  void check() const {
    require_shape(X.rows() == Y.rows() && X.rows() == weights.size(), "support size mismatch");
    require_shape(X.rows() > 0, "empty support");
    if ((weights.array() < 0.0).any()) throw std::invalid_argument("weights must be nonnegative");
    if (std::abs(weights.sum() - 1.0) > 1e-12) throw std::invalid_argument("weights must sum to 1");
  }
};

// Second moments E[XX^T], E[XY^T], E[YY^T].
struct Moments {
  Mat sigma_x;   // n x n
  Mat sigma_xy;  // n x m
  Mat sigma_y;   // m x m

  Eigen::Index n() const { return sigma_x.rows(); }
  Eigen::Index m() const { return sigma_y.rows(); }

  void check() const {
    require_shape(sigma_x.rows() == sigma_x.cols() && sigma_y.rows() == sigma_y.cols(), "covariances must be square");
    require_shape(sigma_xy.rows() == sigma_x.rows() && sigma_xy.cols() == sigma_y.rows(), "cross moment shape");
    if (!is_psd(sigma_x, 1e-10)) throw std::invalid_argument("sigma_x must be symmetric PSD");
    if (!is_psd(sigma_y, 1e-10)) throw std::invalid_argument("sigma_y must be symmetric PSD");
  }
};

// X ~ N(mean, I), Y = target(X).
struct GaussianSampler {
  Vec mean;
  std::function<Vec(const Vec&)> target;
  std::uint64_t seed = 0;
};

using DataSpec = std::variant<Discrete, Moments, GaussianSampler>;

struct RiskValue {
  double value = 0;
  std::optional<double> std_error;
};

inline RiskValue risk_discrete(const TwoLayerParams& th, const Activation& rho, const Discrete& d) {
  require_shape(d.Y.cols() == th.m(), "output dimension mismatch");
  const Mat r = eval_network_batch(th, rho, d.X) - d.Y;
  return {d.weights.dot(r.rowwise().squaredNorm()), std::nullopt};
}

inline RiskValue risk_mc(const TwoLayerParams& th, const Activation& rho, const GaussianSampler& s,
                         long n_samples, std::uint64_t seed) {
  if (n_samples < 2) throw std::invalid_argument("risk_mc needs at least two samples");
  th.check();
  require_shape(s.mean.size() == th.n(), "sampler dimension mismatch");
  Rng rng = Rng(seed).split(stream::kMonteCarlo);
  double mean = 0, m2 = 0;
  Vec x(th.n());
  for (long i = 0; i < n_samples; ++i) {
    for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = s.mean(j) + rng.normal();
    const double l = (eval_network(th, rho, x) - s.target(x)).squaredNorm();
    const double delta = l - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (l - mean);
  }
  const double var = m2 / static_cast<double>(n_samples - 1);
  return {mean, std::sqrt(var / static_cast<double>(n_samples))};
}

struct RiskGradient {
  Mat dU;
  Mat dW;
  std::optional<Vec> db;
};

inline RiskGradient risk_gradient(const TwoLayerParams& th, const Activation& rho, const Discrete& d) {
  const Mat z = preactivations(th, d.X);
  const Mat f = rho.apply(z);
  const Mat r = f * th.U.transpose() - d.Y;          // N x m
  const Mat wr = d.weights.asDiagonal() * r * 2.0;   // N x m
  RiskGradient g;
  g.dU = wr.transpose() * f;
  const Mat back = (wr * th.U).cwiseProduct(rho.apply_derivative(z));  // N x p
  g.dW = back.transpose() * d.X;
  if (th.b) g.db = back.colwise().sum().transpose();
  return g;
}

// Second layer minimizing the weighted least squares risk with W (and b) fixed.
inline Mat optimal_second_layer(const Mat& W, const Discrete& d, const Activation& rho,
                                const std::optional<Vec>& b = std::nullopt) {
  TwoLayerParams th{Mat::Zero(d.Y.cols(), W.rows()), W, b};
  const Mat f = rho.apply(preactivations(th, d.X));
  const Vec sw = d.weights.cwiseSqrt();
  return lstsq(sw.asDiagonal() * f, sw.asDiagonal() * d.Y).transpose();
}

// q(W) = Sigma_YX W^T (W Sigma_X W^T)^+.
inline Mat optimal_second_layer(const Mat& W, const Moments& mo, const Activation& rho) {
  if (!rho.is_linear()) throw std::invalid_argument("moment data requires the linear activation");
  require_shape(W.cols() == mo.n(), "W does not match the input dimension");
  return mo.sigma_xy.transpose() * W.transpose() * pinv(W * mo.sigma_x * W.transpose());
}

namespace detail {
inline double clamp_risk(double v, double scale) {
  if (v >= 0.0) return v;
  if (v >= -1e-9 * (1.0 + scale)) return 0.0;
  throw NumericalError("negative risk: the moments are not jointly consistent");
}

inline void require_invertible(const Mat& sx) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(sx), Eigen::EigenvaluesOnly);
  const double mx = es.eigenvalues().cwiseAbs().maxCoeff();
  if (sx.size() == 0 || es.eigenvalues().minCoeff() <= rank_tolerance(sx.rows(), sx.cols(), mx))
    throw PreconditionError("sigma_x is singular");
}
}  // namespace detail

// Risk of the linear map x -> P x.
inline double risk_moments(const Mat& P, const Moments& mo) {
  require_shape(P.rows() == mo.m() && P.cols() == mo.n(), "product matrix shape");
  const double v = (P * mo.sigma_x * P.transpose()).trace() - 2.0 * (P * mo.sigma_xy).trace() + mo.sigma_y.trace();
  return detail::clamp_risk(v, mo.sigma_y.trace());
}

// Risk at (q(W), W): tr(Sigma_Y) - tr((WK)^+ (WK) M).
inline RiskValue linear_risk_closed_form(const Mat& W, const Moments& mo) {
  detail::require_invertible(mo.sigma_x);
  require_shape(W.cols() == mo.n(), "W does not match the input dimension");
  const Mat k = psd_sqrt(mo.sigma_x);
  const Mat kinv = k.inverse();
  const Mat m = kinv * mo.sigma_xy * mo.sigma_xy.transpose() * kinv;
  const Mat wk = W * k;
  const Mat proj = pinv(wk) * wk;
  const double v = mo.sigma_y.trace() - (proj * m).trace();
  return {detail::clamp_risk(v, mo.sigma_y.trace()), std::nullopt};
}

inline RiskValue global_min_linear(const Moments& mo, Eigen::Index p) {
  detail::require_invertible(mo.sigma_x);
  const Mat k = psd_sqrt(mo.sigma_x);
  const Mat kinv = k.inverse();
  const SortedEigen e = eigen_desc(kinv * mo.sigma_xy * mo.sigma_xy.transpose() * kinv);
  const Eigen::Index top = std::min(p, mo.n());
  const double v = mo.sigma_y.trace() - e.values.head(top).sum();
  return {detail::clamp_risk(v, mo.sigma_y.trace()), std::nullopt};
}

}  // namespace spurious
