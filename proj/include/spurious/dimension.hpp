#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "spurious/activation.hpp"
#include "spurious/errors.hpp"
#include "spurious/linalg.hpp"
#include "spurious/paths_generic.hpp"
#include "spurious/rng.hpp"

namespace spurious {

enum class DimKind { Finite, Infinite, UnknownBounded };

struct DimValue {
  DimKind kind = DimKind::Finite;
  long value = 0;             // Finite
  long lo = 0;                // UnknownBounded
  std::optional<long> hi;     // UnknownBounded; empty means unbounded

  static DimValue finite(long v) { return {DimKind::Finite, v, v, v}; }
  static DimValue infinite() { return {DimKind::Infinite, 0, 0, std::nullopt}; }
  static DimValue bounded(long lo, std::optional<long> hi) { return {DimKind::UnknownBounded, 0, lo, hi}; }

  bool is_finite() const { return kind == DimKind::Finite; }
  bool is_infinite() const { return kind == DimKind::Infinite; }
  std::string str() const {
    switch (kind) {
      case DimKind::Finite: return std::to_string(value);
      case DimKind::Infinite: return "inf";
      case DimKind::UnknownBounded:
        return "[" + std::to_string(lo) + ", " + (hi ? std::to_string(*hi) : std::string("inf")) + "]";
    }
    return "?";
  }
};

enum class DimRationale { PolynomialFormula, NonPolynomialInfinite, SymmetricRankTable };

inline std::string to_string(DimRationale r) {
  switch (r) {
    case DimRationale::PolynomialFormula: return "polynomial-formula";
    case DimRationale::NonPolynomialInfinite: return "non-polynomial-infinite";
    case DimRationale::SymmetricRankTable: return "symmetric-rank-table";
  }
  return "unknown";
}

// Span dimension of the filters x -> rho(<w, x>) for polynomial rho; the
// constant term is not counted.
inline DimValue upper_dim(const Activation& rho, int n) {
  if (n < 1) throw std::invalid_argument("n must be positive");
  const auto c = rho.polynomial_coeffs();
  if (!c) return DimValue::infinite();
  long total = 0;
  for (std::size_t i = 1; i < c->size(); ++i)
    if ((*c)[i] != 0.0) total += binomial(n + static_cast<long>(i) - 1, static_cast<long>(i));
  return DimValue::finite(total);
}

namespace detail {
// Degree k when rho = a z^k with a != 0, else nullopt.
inline std::optional<int> single_monomial_degree(const std::vector<double>& c) {
  std::optional<int> k;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c[i] == 0.0) continue;
    if (k || i == 0) return std::nullopt;
    k = static_cast<int>(i);
  }
  return k;
}
}  // namespace detail

inline DimValue lower_dim(const Activation& rho, int n) {
  if (n < 1) throw std::invalid_argument("n must be positive");
  const auto c = rho.polynomial_coeffs();
  if (!c) return n > 1 ? DimValue::infinite() : DimValue::bounded(1, std::nullopt);
  const auto k = detail::single_monomial_degree(*c);
  if (!k) {
    const DimValue up = upper_dim(rho, n);
    return DimValue::bounded(1, up.value);
  }
  if (*k == 1) return DimValue::finite(1);
  if (*k == 2) return DimValue::finite(n);
  return DimValue::bounded(n, binomial(n + *k - 1, *k));
}

struct IntrinsicDimReport {
  DimValue upper;
  DimValue lower;
  DimRationale rationale = DimRationale::PolynomialFormula;
  bool constant_term = false;  // a_0 != 0: the count above leaves constants out
  std::string note;

  // lower <= upper whenever they can be compared.
  bool consistent() const {
    if (!upper.is_finite()) return true;
    if (lower.is_infinite()) return false;
    if (lower.is_finite()) return lower.value <= upper.value;
    return lower.lo <= upper.value && (!lower.hi || *lower.hi <= upper.value);
  }
};

inline IntrinsicDimReport intrinsic_dims(const Activation& rho, int n) {
  IntrinsicDimReport r;
  r.upper = upper_dim(rho, n);
  r.lower = lower_dim(rho, n);
  const auto c = rho.polynomial_coeffs();
  if (!c) {
    r.rationale = DimRationale::NonPolynomialInfinite;
    if (n == 1) r.note = "non-polynomial with n = 1: lower dimension not determined";
  } else {
    const auto k = detail::single_monomial_degree(*c);
    r.rationale = k && *k >= 2 ? DimRationale::SymmetricRankTable : DimRationale::PolynomialFormula;
    r.constant_term = (*c)[0] != 0.0;
    if (r.constant_term) r.note = "a_0 != 0: constants are not included in the count";
    if (k && *k >= 3) r.note = "symmetric rank beyond degree 2 reported as bounds";
  }
  return r;
}

// Orthonormal probabilists' Hermite polynomials h_0..h_K at z.
inline Vec hermite_orthonormal(double z, int K) {
  Vec h(K + 1);
  h(0) = 1.0;
  if (K >= 1) h(1) = z;
  for (int k = 1; k < K; ++k) h(k + 1) = (z * h(k) - std::sqrt(static_cast<double>(k)) * h(k - 1)) / std::sqrt(k + 1.0);
  return h;
}

struct QuadratureRule {
  Vec nodes;
  Vec weights;  // integrate against the standard normal density
};

// Golub-Welsch for the probabilists' Hermite weight; weights sum to 1.
inline QuadratureRule gauss_hermite_rule(int nodes) {
  if (nodes < 1) throw std::invalid_argument("need at least one node");
  Mat J = Mat::Zero(nodes, nodes);
  for (int k = 1; k < nodes; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Mat> es(J, Eigen::EigenvaluesOnly);
  QuadratureRule r{es.eigenvalues(), Vec(nodes)};
  // w_i = 1 / sum_{k<N} h_k(x_i)^2; eigenvector components lose relative
  // accuracy at the outer nodes, this form does not.
  for (int i = 0; i < nodes; ++i) {
    const double z = r.nodes(i);
    double prev = 0, cur = 1, sum = 1, log_scale = 0;
    for (int k = 0; k + 1 < nodes; ++k) {
      const double next = (z * cur - std::sqrt(static_cast<double>(k)) * prev) / std::sqrt(k + 1.0);
      prev = cur;
      cur = next;
      sum += cur * cur;
      if (std::abs(cur) > 1e100) {
        prev *= 1e-100;
        cur *= 1e-100;
        sum *= 1e-200;
        log_scale += 200 * std::log(10.0);
      }
    }
    r.weights(i) = std::exp(-std::log(sum) - log_scale);
  }
  return r;
}

// Composite Gauss-Legendre on [-L, 0] and [0, L] against the normal density;
// exact splitting at the kink keeps piecewise-smooth integrands accurate.
inline QuadratureRule split_gauss_legendre_rule(int nodes, double half_width = 16.0, int per_panel = 16) {
  const int panels = std::max(1, nodes / per_panel);
  Mat J = Mat::Zero(per_panel, per_panel);
  for (int k = 1; k < per_panel; ++k) J(k, k - 1) = J(k - 1, k) = k / std::sqrt(4.0 * k * k - 1.0);
  Eigen::SelfAdjointEigenSolver<Mat> es(J);
  const Vec x = es.eigenvalues();
  const Vec w = 2.0 * es.eigenvectors().row(0).transpose().cwiseAbs2();
  const double width = half_width / panels;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  QuadratureRule r{Vec(2 * panels * per_panel), Vec(2 * panels * per_panel)};
  Eigen::Index c = 0;
  for (int side : {-1, 1})
    for (int p = 0; p < panels; ++p)
      for (int j = 0; j < per_panel; ++j) {
        const double mid = (p + 0.5) * width;
        const double z = side * (mid + 0.5 * width * x(j));
        r.nodes(c) = z;
        r.weights(c) = 0.5 * width * w(j) * inv_sqrt_2pi * std::exp(-0.5 * z * z);
        ++c;
      }
  return r;
}

inline QuadratureRule gaussian_rule_for(const Activation& rho, int nodes) {
  return rho.is_smooth() ? gauss_hermite_rule(nodes) : split_gauss_legendre_rule(nodes);
}

struct HermiteCoeffs {
  Vec coeffs;  // rho_hat_0 .. rho_hat_K
  int K = 0;
  double second_moment = 0;  // E[rho(Z)^2] with the same rule
  double tail_bound = 0;     // second_moment - sum of squares, clipped at 0
  bool converged = true;     // doubling the nodes moved no coefficient by more than 1e-8
  std::string method;
};

namespace detail {
inline Vec hermite_projection(const Activation& rho, int K, const QuadratureRule& q, double* second) {
  Vec c = Vec::Zero(K + 1);
  double m2 = 0;
  for (Eigen::Index i = 0; i < q.nodes.size(); ++i) {
    const double f = rho(q.nodes(i));
    c += q.weights(i) * f * hermite_orthonormal(q.nodes(i), K);
    m2 += q.weights(i) * f * f;
  }
  if (second) *second = m2;
  return c;
}
}  // namespace detail

inline HermiteCoeffs hermite_coeffs(const Activation& rho, int K, int quad_nodes = 200) {
  if (K < 0) throw std::invalid_argument("K must be non-negative");
  HermiteCoeffs h;
  h.K = K;
  h.method = rho.is_smooth() ? "gauss-hermite" : "split-gauss-legendre";
  h.coeffs = detail::hermite_projection(rho, K, gaussian_rule_for(rho, quad_nodes), &h.second_moment);
  const Vec fine = detail::hermite_projection(rho, K, gaussian_rule_for(rho, 2 * quad_nodes), nullptr);
  h.converged = (fine - h.coeffs).cwiseAbs().maxCoeff() <= 1e-8;
  h.tail_bound = std::max(0.0, h.second_moment - h.coeffs.squaredNorm());
  return h;
}

// ||sum_i u_i w_i^{(x)k}||_F^2 through the Gram matrix.
inline double symmetric_power_norm(const Vec& u, const Mat& W, int k) {
  if (k < 0) throw std::invalid_argument("k must be non-negative");
  require_shape(u.size() == W.rows(), "u and W disagree on p");
  const Mat G = W * W.transpose();
  return u.dot(G.array().pow(static_cast<double>(k)).matrix() * u);
}

struct NormIdentityReport {
  double mc_value = 0;
  double series_value = 0;
  double stderr_ = 0;
  double tail_allowance = 0;
  bool converged = true;
  bool pass = false;
};

// Monte Carlo E|sum_i u_i rho(<w_i, X>)|^2 with X ~ N(0, I) against
// sum_{k<=K} rho_hat_k^2 ||sum_i u_i w_i^{(x)k}||^2.
inline NormIdentityReport gaussian_norm_identity_check(const Vec& u, const Mat& W, const Activation& rho, int K,
                                                       long mc_samples, std::uint64_t seed, int quad_nodes = 200) {
  require_shape(u.size() == W.rows(), "u and W disagree on p");
  for (Eigen::Index i = 0; i < W.rows(); ++i)
    if (std::abs(W.row(i).norm() - 1.0) > 1e-10) throw PreconditionError("rows of W must have unit norm");
  if (mc_samples < 2) throw std::invalid_argument("need at least two Monte Carlo samples");
  NormIdentityReport r;
  const HermiteCoeffs h = hermite_coeffs(rho, K, quad_nodes);
  r.converged = h.converged;
  for (int k = 0; k <= K; ++k) r.series_value += h.coeffs(k) * h.coeffs(k) * symmetric_power_norm(u, W, k);

  Rng rng = Rng(seed).split(stream::kMonteCarlo);
  const Eigen::Index n = W.cols();
  double mean = 0, m2 = 0;
  long seen = 0;
  constexpr long kBatch = 4096;
  for (long start = 0; start < mc_samples; start += kBatch) {
    const long b = std::min(kBatch, mc_samples - start);
    Mat X(n, b);
    for (long s = 0; s < b; ++s)
      for (Eigen::Index j = 0; j < n; ++j) X(j, s) = rng.normal();
    const Vec phi = (u.transpose() * rho.apply(W * X)).transpose();
    for (long s = 0; s < b; ++s) {
      const double v = phi(s) * phi(s);
      const double d = v - mean;
      mean += d / static_cast<double>(++seen);
      m2 += d * (v - mean);
    }
  }
  r.mc_value = mean;
  r.stderr_ = std::sqrt(m2 / static_cast<double>(mc_samples - 1) / static_cast<double>(mc_samples));
  r.tail_allowance = h.tail_bound * std::pow(u.cwiseAbs().sum(), 2);
  r.pass = std::abs(r.mc_value - r.series_value) <= 3.0 * r.stderr_ + r.tail_allowance;
  return r;
}

}  // namespace spurious
