#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "spurious/linalg.hpp"
#include "spurious/model.hpp"
#include "spurious/path.hpp"
#include "spurious/risk.hpp"

namespace spurious {

// Single-output quadratic network x -> sum_i u_i <w_i, x>^2 = x^T A x.
struct QuadState {
  Vec u;
  Mat W;

  Eigen::Index p() const { return W.rows(); }
  Eigen::Index n() const { return W.cols(); }
  Mat A() const { return symmetrize(W.transpose() * u.asDiagonal() * W); }

  static QuadState from(const TwoLayerParams& th) {
    th.check();
    require_shape(th.U.rows() == 1, "quadratic paths need a single output");
    require_shape(!th.b, "quadratic paths have no bias");
    return {th.U.row(0).transpose(), th.W};
  }
  TwoLayerParams params() const { return {u.transpose(), W, std::nullopt}; }
};

inline QuadState lerp(const QuadState& a, const QuadState& b, double t) {
  return {(1.0 - t) * a.u + t * b.u, (1.0 - t) * a.W + t * b.W};
}
inline double param_norm(const QuadState& a) { return std::sqrt(a.u.squaredNorm() + a.W.squaredNorm()); }
inline double param_distance(const QuadState& a, const QuadState& b) {
  if (a.u.size() != b.u.size() || a.W.rows() != b.W.rows() || a.W.cols() != b.W.cols())
    return std::numeric_limits<double>::infinity();
  return std::sqrt((a.u - b.u).squaredNorm() + (a.W - b.W).squaredNorm());
}

struct ConvexOptimum {
  Mat A;
  double risk = 0;
};

// Coordinates (A_11, sqrt2 A_12, ..., A_22, ...) so that <A, x x^T>_F is a
// dot product and the Frobenius norm is the Euclidean one.
inline Mat sym_embedding_design(const Mat& X) {
  const Eigen::Index n = X.cols(), N = X.rows();
  Mat phi(N, n * (n + 1) / 2);
  const double r2 = std::sqrt(2.0);
  for (Eigen::Index s = 0; s < N; ++s) {
    Eigen::Index c = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i; j < n; ++j) phi(s, c++) = (i == j ? 1.0 : r2) * X(s, i) * X(s, j);
  }
  return phi;
}

inline ConvexOptimum convex_A_optimum(const Discrete& d) {
  d.check();
  require_shape(d.Y.cols() == 1, "quadratic paths need a single output");
  const Eigen::Index n = d.X.cols();
  const Vec sw = d.weights.cwiseSqrt();
  const Mat phi = sym_embedding_design(d.X);
  const Vec a = lstsq(sw.asDiagonal() * phi, sw.asDiagonal() * d.Y).col(0);
  ConvexOptimum out{Mat::Zero(n, n), 0.0};
  const double r2 = std::sqrt(2.0);
  Eigen::Index c = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) {
      const double v = i == j ? a(c) : a(c) / r2;
      out.A(i, j) = out.A(j, i) = v;
      ++c;
    }
  const Vec resid = phi * a - d.Y.col(0);
  out.risk = d.weights.dot(resid.cwiseAbs2());
  return out;
}

// u -> sign(u) with rows rescaled by sqrt|u|; rows with u = 0 go to zero and
// then take u = 1. A is unchanged throughout.
inline ParamPath<QuadState> normalize_signs_path(const TwoLayerParams& initial) {
  const QuadState s0 = QuadState::from(initial);
  QuadState s1 = s0, s2 = s0, s3 = s0;
  for (Eigen::Index i = 0; i < s0.p(); ++i) {
    if (s0.u(i) != 0.0) {
      s1.u(i) = s0.u(i) > 0 ? 1.0 : -1.0;
      s1.W.row(i) *= std::sqrt(std::abs(s0.u(i)));
    }
  }
  s2 = s1;
  for (Eigen::Index i = 0; i < s0.p(); ++i)
    if (s0.u(i) == 0.0) s2.W.row(i).setZero();
  s3 = s2;
  for (Eigen::Index i = 0; i < s0.p(); ++i)
    if (s0.u(i) == 0.0) s3.u(i) = 1.0;

  ParamPath<QuadState> path;
  path.append(Segment<QuadState>{SegmentKind::RowRescale, Contract::FunctionInvariant, "normalize output weights",
                                 [s0, s1](double t) {
                                   if (t == 1.0) return s1;
                                   QuadState s = s0;
                                   for (Eigen::Index i = 0; i < s.p(); ++i) {
                                     if (s0.u(i) == 0.0) continue;
                                     const double sc = 1.0 + t * (std::sqrt(std::abs(s0.u(i))) - 1.0);
                                     s.u(i) = s0.u(i) / (sc * sc);
                                     s.W.row(i) *= sc;
                                   }
                                   return s;
                                 }});
  path.append(linear_segment(s1, s2, Contract::FunctionInvariant, "shrink silent rows"));
  path.append(linear_segment(s2, s3, Contract::FunctionInvariant, "unit weight on silent rows"));
  return path;
}

struct QuadStep {
  ParamPath<QuadState> path;
  QuadState end;
  Eigen::Index row = -1;
  std::optional<RotationLog> rotation;  // set when a sign group was rotated
  std::vector<Eigen::Index> group;
};

inline bool row_is_zero(const QuadState& s, Eigen::Index i) {
  return s.W.row(i).norm() <= 1e-12 * (1.0 + s.W.norm());
}

// Produces a zero row among `free_rows` (by rotating the larger sign group
// when none exists), zeroes its output weight and moves it onto v.
inline QuadStep null_row_rotation_path(const QuadState& s, const Vec& v, const std::vector<Eigen::Index>& free_rows,
                                       bool enforce_width = true) {
  const Eigen::Index n = s.n();
  if (enforce_width && s.p() <= 2 * n)
    throw PreconditionError("null-row rotation needs p >= 2n+1, got p=" + std::to_string(s.p()) +
                            " n=" + std::to_string(n));
  require_shape(v.size() == n, "eigenvector length");
  QuadStep st;
  QuadState cur = s;
  for (auto i : free_rows)
    if (row_is_zero(cur, i)) {
      st.row = i;
      break;
    }
  if (st.row >= 0) {
    st.path.append(constant_segment(cur, Contract::FunctionInvariant, "null a row (already zero)"));
  } else {
    std::vector<Eigen::Index> pos, neg;
    for (auto i : free_rows) {
      if (cur.u(i) == 1.0) pos.push_back(i);
      if (cur.u(i) == -1.0) neg.push_back(i);
    }
    const std::vector<Eigen::Index>& g = pos.size() >= neg.size() ? pos : neg;
    const Eigen::Index k = static_cast<Eigen::Index>(g.size());
    if (k < 2) throw NumericalError("no sign group large enough to null a row");
    Mat wg(k, n);
    for (Eigen::Index a = 0; a < k; ++a) wg.row(a) = cur.W.row(g[a]);
    Eigen::JacobiSVD<Mat> svd(wg, Eigen::ComputeFullU);
    const Vec h = svd.matrixU().col(k - 1);
    if ((h.transpose() * wg).norm() > 1e-9 * (1.0 + wg.norm()))
      throw NumericalError("sign group has no left kernel: cannot null a row");
    const RotationLog rot(rotation_with_first_row(h));
    st.path.append(Segment<QuadState>{SegmentKind::RotationExponential, Contract::FunctionInvariant,
                                      "null a row by rotation", [cur, g, wg, rot](double t) {
                                        QuadState q = cur;
                                        const Mat r = rot.exp(t) * wg;
                                        for (std::size_t a = 0; a < g.size(); ++a)
                                          q.W.row(g[a]) = r.row(static_cast<Eigen::Index>(a));
                                        return q;
                                      }});
    cur = st.path.end();
    st.row = g[0];
    st.rotation = rot;
    st.group = g;
  }
  QuadState silent = cur;
  silent.u(st.row) = 0.0;
  st.path.append(linear_segment(cur, silent, Contract::FunctionInvariant, "silence the null row"));
  QuadState placed = silent;
  placed.W.row(st.row) = v.transpose();
  st.path.append(linear_segment(silent, placed, Contract::FunctionInvariant, "move the null row to the eigenvector"));
  st.end = placed;
  return st;
}

// Rows w_k -> w_k - t <v, w_k> v with the pivot weight compensated so that A
// does not change; the pivot ends with weight lambda.
inline QuadStep orthogonalize_path(const QuadState& s, Eigen::Index pivot, double lambda) {
  require_shape(pivot >= 0 && pivot < s.p(), "pivot index out of range");
  const Vec v = s.W.row(pivot).transpose();
  if (std::abs(v.norm() - 1.0) > 1e-10) throw PreconditionError("pivot row must have unit norm");
  const Mat A = s.A();
  if ((A * v - lambda * v).norm() > 1e-8 * (1.0 + A.norm()))
    throw PreconditionError("pivot row is not an eigenvector of A for the given eigenvalue");
  const Vec c = s.W * v;
  double S = 0.0;
  for (Eigen::Index k = 0; k < s.p(); ++k)
    if (k != pivot) S += s.u(k) * c(k) * c(k);
  QuadStep st;
  st.row = pivot;
  st.path.append(Segment<QuadState>{SegmentKind::CompensatedOrthogonalization, Contract::FunctionInvariant,
                                    "orthogonalize against the eigenvector", [s, v, c, S, lambda, pivot](double t) {
                                      QuadState q = s;
                                      q.W -= t * c * v.transpose();
                                      q.W.row(pivot) = v.transpose();
                                      q.u(pivot) = lambda - (1.0 - t) * (1.0 - t) * S;
                                      return q;
                                    }});
  st.end = st.path.end();
  return st;
}

struct QuadraticOptions {
  int grid = 200;
  Tolerances tol{1e-8, false, 1e-9, 1e-7, 1e-10};
  bool enforce_width = true;  // false only for the narrow-width experiment
};

struct QuadDescent {
  ParamPath<QuadState> path;
  PathReport report;
  ConvexOptimum optimum;
  std::vector<Eigen::Index> pivots;
};

// Risk from A alone: sum_i w_i (x_i^T A x_i - y_i)^2.
inline double quadratic_risk(const Mat& A, const Discrete& d) {
  const Vec pred = ((d.X * A).cwiseProduct(d.X)).rowwise().sum();
  return d.weights.dot((pred - d.Y.col(0)).cwiseAbs2());
}

inline QuadDescent quadratic_descent_path(const TwoLayerParams& initial, const Discrete& data,
                                          const QuadraticOptions& opt = {}) {
  data.check();
  const QuadState s0 = QuadState::from(initial);
  const Eigen::Index p = s0.p(), n = s0.n();
  require_shape(data.X.cols() == n && data.Y.cols() == 1, "data does not match the network");
  if (opt.enforce_width && p <= 2 * n)
    throw PreconditionError("quadratic construction needs p >= 2n+1, got p=" + std::to_string(p) +
                            " n=" + std::to_string(n));
  QuadDescent out;
  out.path = normalize_signs_path(initial);
  QuadState cur = out.path.end();

  const SortedEigen eig = eigen_desc(cur.A());
  std::vector<Eigen::Index> free_rows(static_cast<std::size_t>(p));
  for (Eigen::Index i = 0; i < p; ++i) free_rows[static_cast<std::size_t>(i)] = i;
  for (Eigen::Index k = 0; k < n; ++k) {
    const Vec v = eig.vectors.col(k);
    QuadStep a = null_row_rotation_path(cur, v, free_rows, opt.enforce_width);
    out.path.append(a.path);
    QuadStep b = orthogonalize_path(a.end, a.row, eig.values(k));
    out.path.append(b.path);
    cur = b.end;
    out.pivots.push_back(a.row);
    free_rows.erase(std::find(free_rows.begin(), free_rows.end(), a.row));
  }

  // Leftover rows are orthogonal to every eigenvector, hence zero up to roundoff.
  QuadState cleared = cur;
  for (auto i : free_rows) cleared.W.row(i).setZero();
  QuadState silent = cleared;
  for (auto i : free_rows) silent.u(i) = 0.0;
  out.path.append(linear_segment(cur, cleared, Contract::FunctionInvariant, "clear leftover rows"));
  out.path.append(linear_segment(cleared, silent, Contract::FunctionInvariant, "silence leftover rows"));

  if (static_cast<Eigen::Index>(free_rows.size()) < n) throw NumericalError("not enough spare rows for the target");
  out.optimum = convex_A_optimum(data);
  const SortedEigen target = eigen_desc(out.optimum.A);
  QuadState placed = silent;
  QuadState final_state = silent;
  final_state.u.setZero();
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index row = free_rows[static_cast<std::size_t>(k)];
    placed.W.row(row) = target.vectors.col(k).transpose();
    final_state.W.row(row) = placed.W.row(row);
    final_state.u(row) = target.values(k);
  }
  out.path.append(linear_segment(silent, placed, Contract::FunctionInvariant, "place optimal eigenvectors"));
  out.path.append(linear_segment(placed, final_state, Contract::LossNonIncreasing, "interpolate output weights"));

  auto loss = [&data](const QuadState& q) { return risk_discrete(q.params(), Activation::quadratic(), data).value; };
  auto drift = [](const QuadState& q, const QuadState& ref) { return (q.A() - ref.A()).norm(); };
  out.report = sample_path(out.path, loss, drift, opt.grid, out.optimum.risk, opt.tol);
  return out;
}

// Runs the construction below the proven width; records where it breaks.
struct NarrowAttempt {
  bool completed = false;
  std::string failure;
  double endpoint_gap = 0;
  double max_uptick = 0;
};

inline NarrowAttempt try_narrow_quadratic(const TwoLayerParams& initial, const Discrete& data) {
  NarrowAttempt r;
  QuadraticOptions opt;
  opt.enforce_width = false;
  try {
    const QuadDescent d = quadratic_descent_path(initial, data, opt);
    r.completed = true;
    r.endpoint_gap = d.report.endpoint_gap;
    r.max_uptick = d.report.max_uptick;
  } catch (const std::exception& e) {
    r.failure = e.what();
  }
  return r;
}

}  // namespace spurious
