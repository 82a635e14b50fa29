#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "spurious/linalg.hpp"
#include "spurious/model.hpp"
#include "spurious/path.hpp"
#include "spurious/paths_generic.hpp"
#include "spurious/risk.hpp"
#include "spurious/rng.hpp"

namespace spurious {

// Linear networks in whitened coordinates. With O an orthonormal basis of
// the support of Sigma_X (identity when Sigma_X is invertible) and
// K = (O^T Sigma_X O)^{1/2}, a first layer W corresponds to W' = W O K.
struct WhitenedProblem {
  Mat K;
  Mat K_inv;
  Mat M;
  std::optional<Mat> projector;  // n x r, only when Sigma_X is singular
  SortedEigen eigen;
  Eigen::Index n = 0;
  Eigen::Index r = 0;

  bool reduced() const { return projector.has_value(); }
  Mat basis() const { return projector ? *projector : Mat::Identity(n, n); }
  Mat to_whitened(const Mat& W) const { return W * basis() * K; }
  Mat to_original(const Mat& Wt) const { return Wt * K_inv * basis().transpose(); }
};

inline WhitenedProblem whiten(const Moments& mo) {
  mo.check();
  WhitenedProblem wp;
  wp.n = mo.n();
  const SortedEigen ex = eigen_desc(mo.sigma_x);
  const double top = wp.n ? std::max(ex.values(0), 0.0) : 0.0;
  const double tol = rank_tolerance(wp.n, wp.n, top);
  Eigen::Index r = 0;
  while (r < wp.n && ex.values(r) > tol) ++r;
  wp.r = r;
  Mat sxy = mo.sigma_xy;
  if (r == wp.n) {
    wp.K = psd_sqrt(mo.sigma_x);
  } else {
    wp.projector = ex.vectors.leftCols(r);
    wp.K = ex.values.head(r).cwiseSqrt().asDiagonal();
    sxy = wp.projector->transpose() * mo.sigma_xy;
  }
  wp.K_inv = r ? Mat(wp.K.inverse()) : Mat(0, 0);
  wp.M = symmetrize(wp.K_inv * sxy * sxy.transpose() * wp.K_inv);
  wp.eigen = r ? eigen_desc(wp.M) : SortedEigen{Vec(0), Mat(0, 0)};
  return wp;
}

// Best risk with hidden width p, valid for singular Sigma_X as well.
inline double whitened_min(const WhitenedProblem& wp, const Moments& mo, Eigen::Index p) {
  const Eigen::Index top = std::min(p, wp.r);
  return detail::clamp_risk(mo.sigma_y.trace() - wp.eigen.values.head(top).sum(), mo.sigma_y.trace());
}

// f(W) = tr(M W^+ W).
inline double grassmann_objective(const Mat& W, const Mat& M) {
  if (W.rows() == 0) return 0.0;
  return (pinv(W) * W * M).trace();
}

inline bool rows_orthonormal(const Mat& W, double tol = 1e-10) {
  return (W * W.transpose() - Mat::Identity(W.rows(), W.rows())).cwiseAbs().maxCoeff() <= tol;
}

// Aligns row i with the i-th eigenvector of M for i = 0..p-1. Each step is a
// rotation of the basis inside the current row space (objective constant)
// followed by a great-circle move of row i (objective non-decreasing).
inline ParamPath<Mat> grassmann_ascent_path(const Mat& W0, const WhitenedProblem& wp) {
  const Eigen::Index p = W0.rows(), r = W0.cols();
  require_shape(r == wp.r, "W0 must live in the whitened coordinates");
  if (p > r || !rows_orthonormal(W0)) throw PreconditionError("grassmann ascent needs orthonormal rows");
  ParamPath<Mat> path;
  Mat state = W0;
  for (Eigen::Index i = 0; i < p; ++i) {
    Vec v = wp.eigen.vectors.col(i);
    const Mat tail = state.bottomRows(p - i);
    Vec c = tail * v;
    if (c.norm() > 1e-12) {
      c.normalize();
    } else {
      c = Vec::Unit(p - i, 0);  // v is orthogonal to the row space: start from row i
    }
    if (c(0) < 0) {
      c = -c;
      v = -v;
    }
    const RotationLog rot(rotation_with_first_row(c));
    const Mat head = state.topRows(i);
    auto rotated = [head, tail, rot, p, i](double t) {
      Mat w(p, tail.cols());
      w.topRows(i) = head;
      w.bottomRows(p - i) = rot.exp(t) * tail;
      return w;
    };
    path.append(Segment<Mat>{SegmentKind::RotationExponential, Contract::FunctionInvariant,
                             "rotate basis " + std::to_string(i), rotated});
    state = rotated(1.0);

    const Vec u = state.row(i).transpose();
    const double mu = std::clamp(u.dot(v), -1.0, 1.0);
    const Vec d = v - mu * u;
    if (1.0 - mu < 1e-15 || d.norm() < 1e-15) {
      path.append(constant_segment(state, Contract::LossNonIncreasing, "geodesic " + std::to_string(i)));
      continue;
    }
    const Vec e = d.normalized();
    const Mat base = state;
    auto geodesic = [base, u, e, mu, i](double t) {
      const double a = 1.0 - (1.0 - mu) * t;
      Mat w = base;
      w.row(i) = (a * u + std::sqrt(std::max(0.0, 1.0 - a * a)) * e).transpose();
      return w;
    };
    path.append(Segment<Mat>{SegmentKind::SphereGeodesic, Contract::LossNonIncreasing,
                             "geodesic " + std::to_string(i), geodesic});
    state = geodesic(1.0);
  }
  return path;
}

// Left polar split W = H W0 with H symmetric positive definite; the path
// H^{1-t} W0 keeps the row space fixed.
inline ParamPath<Mat> lift_path(const Mat& W_tilde, const WhitenedProblem& wp) {
  const Eigen::Index p = W_tilde.rows();
  require_shape(W_tilde.cols() == wp.r, "W must live in the whitened coordinates");
  if (p > wp.r || numerical_rank(W_tilde) < p) throw PreconditionError("lift needs full row rank and p <= rank");
  Eigen::JacobiSVD<Mat> svd(W_tilde, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Mat A = svd.matrixU();
  const Vec s = svd.singularValues();
  const Mat W0 = A * svd.matrixV().transpose();
  ParamPath<Mat> path;
  path.append(Segment<Mat>{SegmentKind::ScaledSvd, Contract::FunctionInvariant, "orthonormalize rows",
                           [A, s, W0](double t) {
                             const Vec st = s.array().pow(1.0 - t).matrix();
                             return Mat(A * st.asDiagonal() * A.transpose() * W0);
                           }});
  path.append(grassmann_ascent_path(path.end(), wp));
  return path;
}

// Per-layer paths whose product follows a given product path. The factors
// are in application order: factors[0] is applied first.
struct FactorizedPath {
  ParamPath<std::vector<Mat>> path;
  std::size_t prefix = 0;  // function-invariant segments before the aligned ones

  std::vector<ParamPath<Mat>> per_layer() const {
    std::vector<ParamPath<Mat>> out;
    const std::size_t L = path.empty() ? 0 : path.start().size();
    for (std::size_t k = 0; k < L; ++k) out.push_back(path.map([k](const std::vector<Mat>& f) { return f[k]; }));
    return out;
  }
};

inline Mat chain_product(const std::vector<Mat>& f) {
  Mat p = f.front();
  for (std::size_t i = 1; i < f.size(); ++i) p = f[i] * p;
  return p;
}

namespace detail {

inline std::vector<Mat> reverse_transpose(const std::vector<Mat>& f) {
  std::vector<Mat> out;
  for (auto it = f.rbegin(); it != f.rend(); ++it) out.push_back(it->transpose());
  return out;
}

// Requires the input width to be the smallest of the chain apart from the
// output. Each partial product A_j ... A_0 is made injective through the
// rank repair, then only the last factor moves.
inline FactorizedPath factorize_from_input(const ParamPath<Mat>& product, std::vector<Mat> A, Rng& rng) {
  const std::size_t L = A.size();
  const Eigen::Index c0 = A.front().cols();
  FactorizedPath out;
  Mat partial = Mat::Identity(c0, c0);
  for (std::size_t j = 0; j + 1 < L; ++j) {
    const Mat pj = partial;
    const FeatureMap feats = [pj](const Mat& w) { return Mat(w * pj); };
    const RankRepair rep = plan_rank_repair(A[j + 1], A[j], feats, c0, rng);
    if (rep.needed) {
      std::vector<Mat> a0 = A, a1 = A, a2 = A;
      a1[j + 1] = rep.U1;
      a2[j + 1] = rep.U1;
      a2[j] = rep.W1;
      const std::string tag = " (layer " + std::to_string(j + 1) + ")";
      out.path.append(Segment<std::vector<Mat>>{SegmentKind::LinearInterpolation, Contract::FunctionInvariant,
                                                "transfer output weights" + tag,
                                                [a0, a1, j](double t) {
                                                  std::vector<Mat> f = a0;
                                                  f[j + 1] = lerp(a0[j + 1], a1[j + 1], t);
                                                  return f;
                                                }});
      out.path.append(Segment<std::vector<Mat>>{SegmentKind::LinearInterpolation, Contract::FunctionInvariant,
                                                "replace dependent rows" + tag,
                                                [a1, a2, j](double t) {
                                                  std::vector<Mat> f = a1;
                                                  f[j] = lerp(a1[j], a2[j], t);
                                                  return f;
                                                }});
      A = a2;
    }
    partial = A[j] * partial;
  }
  const Mat right_inv = pinv(partial);
  if (L > 1) {
    const std::vector<Mat> from = A;
    std::vector<Mat> to = A;
    to.back() = product.segment(0).eval(0.0) * right_inv;
    out.path.append(Segment<std::vector<Mat>>{SegmentKind::LinearInterpolation, Contract::FunctionInvariant,
                                              "align leading factor",
                                              [from, to](double t) {
                                                std::vector<Mat> f = from;
                                                f.back() = lerp(from.back(), to.back(), t);
                                                return f;
                                              }});
  }
  out.prefix = out.path.size();
  for (const auto& seg : product.segments()) {
    out.path.append(Segment<std::vector<Mat>>{seg.kind, seg.contract, seg.label,
                                              [A, e = seg.eval, right_inv](double t) {
                                                std::vector<Mat> f = A;
                                                f.back() = e(t) * right_inv;
                                                return f;
                                              }});
  }
  return out;
}

}  // namespace detail

inline FactorizedPath deep_factorize_path(const ParamPath<Mat>& product, const std::vector<Mat>& factors,
                                          std::uint64_t seed = 0) {
  if (factors.empty()) throw DimensionMismatch("no factors");
  if (product.empty()) throw std::invalid_argument("empty product path");
  for (std::size_t i = 1; i < factors.size(); ++i)
    require_shape(factors[i].cols() == factors[i - 1].rows(), "factors do not chain");
  const Mat p0 = product.segment(0).eval(0.0);
  require_shape(p0.rows() == factors.back().rows() && p0.cols() == factors.front().cols(),
                "product path shape differs from the chain");
  if ((chain_product(factors) - p0).norm() > 1e-9 * (1.0 + p0.norm()))
    throw PreconditionError("product path does not start at the product of the factors");

  Eigen::Index inner = std::numeric_limits<Eigen::Index>::max();
  for (std::size_t i = 0; i + 1 < factors.size(); ++i) inner = std::min(inner, factors[i].rows());
  Rng rng = Rng(seed).split(stream::kFreshDirections);
  if (factors.front().cols() <= inner) return detail::factorize_from_input(product, factors, rng);
  if (factors.back().rows() <= inner) {
    auto t = [](const Mat& m) { return Mat(m.transpose()); };
    FactorizedPath ft = detail::factorize_from_input(product.map(t), detail::reverse_transpose(factors), rng);
    FactorizedPath out;
    out.prefix = ft.prefix;
    out.path = ft.path.map([](const std::vector<Mat>& f) { return detail::reverse_transpose(f); });
    return out;
  }
  throw PreconditionError("one end of the chain must be no wider than every inner width");
}

inline FactorizedPath deep_factorize_path(const ParamPath<Mat>& product, const DeepLinearParams& initial,
                                          std::uint64_t seed = 0) {
  initial.check();
  return deep_factorize_path(product, initial.layers, seed);
}

// Two-layer linear path in original coordinates; U follows q(W) once the
// second layer has been optimised.
struct TwoFactorPath {
  ParamPath<TwoLayerParams> path;
  WhitenedProblem problem;
  RankRepair repair;
};

inline TwoFactorPath two_factor_path(const TwoLayerParams& initial, const Moments& mo, std::uint64_t seed = 0) {
  initial.check();
  require_shape(initial.W.cols() == mo.n() && initial.U.rows() == mo.m(), "network does not match the moments");
  TwoFactorPath tf;
  tf.problem = whiten(mo);
  const WhitenedProblem& wp = tf.problem;
  const Eigen::Index p = initial.p();
  auto q = [mo](const Mat& W) { return optimal_second_layer(W, mo, Activation::linear()); };

  TwoLayerParams cur = initial;
  if (wp.reduced()) {
    const Mat O = *wp.projector;
    TwoLayerParams next{cur.U, cur.W * O * O.transpose(), std::nullopt};
    tf.path.append(linear_segment(cur, next, Contract::FunctionInvariant, "project onto the support"));
    cur = next;
  }

  Rng rng = Rng(seed).split(stream::kFreshDirections);
  const Mat Wt = wp.to_whitened(cur.W);
  tf.repair = plan_rank_repair(cur.U, Wt, linear_features(), std::min(p, wp.r), rng);
  const TwoLayerParams a1{tf.repair.U1, cur.W, std::nullopt};
  const TwoLayerParams a2{tf.repair.U1, tf.repair.needed ? wp.to_original(tf.repair.W1) : cur.W, std::nullopt};
  tf.path.append(linear_segment(cur, a1, Contract::FunctionInvariant, "transfer output weights"));
  tf.path.append(linear_segment(a1, a2, Contract::FunctionInvariant, "replace dependent rows"));
  const TwoLayerParams a3{q(a2.W), a2.W, std::nullopt};
  tf.path.append(linear_segment(a2, a3, Contract::LossNonIncreasing, "second layer to optimum"));

  if (p < wp.r) {
    const ParamPath<Mat> lifted = lift_path(wp.to_whitened(a2.W), wp);
    // Loss along these segments is governed by the row space of W alone.
    const WhitenedProblem wcopy = wp;
    tf.path.append(lifted.map([wcopy, q](const Mat& w) {
      const Mat W = wcopy.to_original(w);
      return TwoLayerParams{q(W), W, std::nullopt};
    }));
  }
  return tf;
}

inline Mat linear_product(const TwoLayerParams& th) { return th.U * th.W; }

// Relative L2(X) change of the linear map P against ref; `root` is O K, so
// root root^T = Sigma_X exactly on the support.
inline double linear_drift(const Mat& P, const Mat& ref, const Mat& root) {
  return ((P - ref) * root).norm() / (1.0 + (ref * root).norm());
}

struct LinearDescent {
  ParamPath<DeepLinearParams> path;
  PathReport report;
  std::size_t bottleneck = 0;  // 1-based index of the narrowest hidden layer
  Eigen::Index p_s = 0;
  bool reduced = false;
  double oracle = 0;
};

inline LinearDescent linear_descent_path(const DeepLinearParams& initial, const Moments& mo, int grid = 200,
                                         Tolerances tol = {}, std::uint64_t seed = 0) {
  initial.check();
  mo.check();
  require_shape(initial.n() == mo.n() && initial.m() == mo.m(), "network does not match the moments");
  const auto widths = initial.hidden_widths();
  const std::size_t s = static_cast<std::size_t>(std::min_element(widths.begin(), widths.end()) - widths.begin()) + 1;
  const std::vector<Mat> lower(initial.layers.begin(), initial.layers.begin() + static_cast<long>(s));
  const std::vector<Mat> upper(initial.layers.begin() + static_cast<long>(s), initial.layers.end());

  LinearDescent out;
  out.bottleneck = s;
  out.p_s = widths[s - 1];
  const TwoLayerParams collapsed{chain_product(upper), chain_product(lower), std::nullopt};
  const TwoFactorPath tf = two_factor_path(collapsed, mo, seed);
  out.reduced = tf.problem.reduced();
  out.oracle = whitened_min(tf.problem, mo, out.p_s);

  const FactorizedPath fu =
      deep_factorize_path(tf.path.map([](const TwoLayerParams& th) { return th.U; }), upper, seed + 1);
  const FactorizedPath fw =
      deep_factorize_path(tf.path.map([](const TwoLayerParams& th) { return th.W; }), lower, seed + 2);

  auto join = [](const std::vector<Mat>& lo, const std::vector<Mat>& up) {
    DeepLinearParams d;
    d.layers = lo;
    d.layers.insert(d.layers.end(), up.begin(), up.end());
    return d;
  };
  for (std::size_t k = 0; k < fu.prefix; ++k) {
    const auto& seg = fu.path.segment(k);
    out.path.append(Segment<DeepLinearParams>{seg.kind, seg.contract, seg.label,
                                              [lower, e = seg.eval, join](double t) { return join(lower, e(t)); }});
  }
  const std::vector<Mat> upper_ready = fu.prefix ? fu.path.segment(fu.prefix - 1).eval(1.0) : upper;
  for (std::size_t k = 0; k < fw.prefix; ++k) {
    const auto& seg = fw.path.segment(k);
    out.path.append(Segment<DeepLinearParams>{seg.kind, seg.contract, seg.label, [upper_ready, e = seg.eval, join](
                                                                                     double t) {
      return join(e(t), upper_ready);
    }});
  }
  for (std::size_t k = 0; k < tf.path.size(); ++k) {
    const auto& su = fu.path.segment(fu.prefix + k);
    const auto& sw = fw.path.segment(fw.prefix + k);
    out.path.append(Segment<DeepLinearParams>{su.kind, su.contract, su.label,
                                              [eu = su.eval, ew = sw.eval, join](double t) {
                                                return join(ew(t), eu(t));
                                              }});
  }

  auto loss = [&mo](const DeepLinearParams& d) { return risk_moments(d.product(), mo); };
  const Mat root = tf.problem.basis() * tf.problem.K;
  auto drift = [&root](const DeepLinearParams& d, const DeepLinearParams& ref) {
    return linear_drift(d.product(), ref.product(), root);
  };
  out.report = sample_path(out.path, loss, drift, grid, out.oracle, tol);
  return out;
}

}  // namespace spurious
