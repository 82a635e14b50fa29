#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "spurious/errors.hpp"

namespace spurious {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Singular values below max(rows, cols) * sigma_max * 2^-40 count as zero.
inline double rank_tolerance(Eigen::Index rows, Eigen::Index cols, double sigma_max) {
  return static_cast<double>(std::max(rows, cols)) * sigma_max * 0x1.0p-40;
}

inline Eigen::Index numerical_rank(const Mat& a) {
  if (a.size() == 0) return 0;
  Eigen::BDCSVD<Mat> svd(a);
  const Vec& s = svd.singularValues();
  const double tol = rank_tolerance(a.rows(), a.cols(), s.size() ? s(0) : 0.0);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > tol) ++r;
  return r;
}

inline Mat pinv(const Mat& a) {
  if (a.size() == 0) return Mat::Zero(a.cols(), a.rows());
  Eigen::BDCSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  const double tol = rank_tolerance(a.rows(), a.cols(), s.size() ? s(0) : 0.0);
  Vec inv = Vec::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > tol) inv(i) = 1.0 / s(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

// Minimum-norm least squares solution of a x = b.
inline Mat lstsq(const Mat& a, const Mat& b) {
  if (a.size() == 0) return Mat::Zero(a.cols(), b.cols());
  Eigen::BDCSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  const double tol = rank_tolerance(a.rows(), a.cols(), s.size() ? s(0) : 0.0);
  Vec inv = Vec::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > tol) inv(i) = 1.0 / s(i);
  return svd.matrixV() * (inv.asDiagonal() * (svd.matrixU().transpose() * b));
}

inline Mat symmetrize(const Mat& a) { return 0.5 * (a + a.transpose()); }

// Eigenpairs of a symmetric matrix sorted by decreasing eigenvalue.
struct SortedEigen {
  Vec values;
  Mat vectors;  // columns
};

inline SortedEigen eigen_desc(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a));
  const Eigen::Index n = a.rows();
  SortedEigen out{Vec(n), Mat(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values(i) = es.eigenvalues()(n - 1 - i);
    out.vectors.col(i) = es.eigenvectors().col(n - 1 - i);
  }
  return out;
}

inline Mat psd_sqrt(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a));
  Vec s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
}

inline bool is_psd(const Mat& a, double tol) {
  if (a.rows() != a.cols()) return false;
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > tol * (1.0 + a.cwiseAbs().maxCoeff())) return false;
  if (a.size() == 0) return true;
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol * (1.0 + es.eigenvalues().cwiseAbs().maxCoeff());
}

// Rotation R in SO(k) stored through its principal logarithm in the canonical
// block form R = Q blockdiag(rot(theta_j), 1, ...) Q^T.
class RotationLog {
 public:
  RotationLog() = default;

  explicit RotationLog(const Mat& r) {
    const Eigen::Index k = r.rows();
    if (r.cols() != k) throw DimensionMismatch("rotation must be square");
    if ((r.transpose() * r - Mat::Identity(k, k)).norm() > 1e-8 * std::max<double>(1, k))
      throw NumericalError("skew logarithm requested for a non-orthogonal matrix");
    dim_ = k;
    if (k == 0) return;
    Eigen::RealSchur<Mat> schur(r);
    q_ = schur.matrixU();
    const Mat& t = schur.matrixT();
    std::vector<Eigen::Index> minus_one;
    for (Eigen::Index i = 0; i < k;) {
      if (i + 1 < k && std::abs(t(i + 1, i)) > 1e-14) {
        const double c = 0.5 * (t(i, i) + t(i + 1, i + 1));
        const double s = 0.5 * (t(i + 1, i) - t(i, i + 1));
        blocks_.push_back({i, i + 1, std::atan2(s, c)});
        i += 2;
      } else {
        if (t(i, i) < 0.0) minus_one.push_back(i);
        i += 1;
      }
    }
    if (minus_one.size() % 2 != 0) throw NumericalError("rotation has determinant -1");
    for (std::size_t j = 0; j < minus_one.size(); j += 2)
      blocks_.push_back({minus_one[j], minus_one[j + 1], std::numbers::pi});
    if ((exp(1.0) - r).norm() > 1e-8 * std::max<double>(1, k))
      throw NumericalError("skew logarithm failed to reproduce the rotation");
  }

  Eigen::Index dim() const { return dim_; }

  Mat exp(double t) const {
    if (dim_ == 0) return Mat(0, 0);
    Mat e = Mat::Identity(dim_, dim_);
    for (const auto& b : blocks_) {
      const double c = std::cos(t * b.angle), s = std::sin(t * b.angle);
      e(b.a, b.a) = c;
      e(b.a, b.b) = -s;
      e(b.b, b.a) = s;
      e(b.b, b.b) = c;
    }
    return q_ * e * q_.transpose();
  }

  // The skew-symmetric generator A with exp(A) = R.
  Mat generator() const {
    Mat l = Mat::Zero(dim_, dim_);
    for (const auto& b : blocks_) {
      l(b.b, b.a) = b.angle;
      l(b.a, b.b) = -b.angle;
    }
    return q_ * l * q_.transpose();
  }

  bool is_identity() const {
    for (const auto& b : blocks_)
      if (std::abs(b.angle) > 0.0) return false;
    return true;
  }

 private:
  struct Block {
    Eigen::Index a, b;
    double angle;
  };
  Eigen::Index dim_ = 0;
  Mat q_;
  std::vector<Block> blocks_;
};

// Orthogonal matrix with first row h (unit vector) and determinant +1.
inline Mat rotation_with_first_row(const Vec& h) {
  const Eigen::Index k = h.size();
  if (k == 0) return Mat(0, 0);
  if (std::abs(h.norm() - 1.0) > 1e-10) throw PreconditionError("first row must be a unit vector");
  if (k == 1) {
    if (h(0) < 0) throw PreconditionError("no rotation of R^1 maps e_1 to -e_1");
    return Mat::Identity(1, 1);
  }
  Vec e1 = Vec::Zero(k);
  e1(0) = 1.0;
  Vec w = e1 - h;
  Mat r;
  if (w.norm() < 1e-15) {
    r = Mat::Identity(k, k);
  } else {
    w.normalize();
    // Householder reflector: symmetric, maps e_1 to h, so its first row is h.
    r = Mat::Identity(k, k) - 2.0 * w * w.transpose();
    r.row(k - 1) *= -1.0;
  }
  return r;
}

// Largest principal angle between the row spaces of a and b.
inline double max_principal_angle(const Mat& a, const Mat& b) {
  Eigen::BDCSVD<Mat> sa(a.transpose(), Eigen::ComputeThinU);
  Eigen::BDCSVD<Mat> sb(b.transpose(), Eigen::ComputeThinU);
  const Eigen::Index ra = numerical_rank(a), rb = numerical_rank(b);
  if (ra != rb) return std::numbers::pi / 2;
  if (ra == 0) return 0.0;
  Mat qa = sa.matrixU().leftCols(ra), qb = sb.matrixU().leftCols(rb);
  // sin of the largest angle is the spectral norm of the residual projection.
  Mat resid = qa - qb * (qb.transpose() * qa);
  Eigen::BDCSVD<Mat> c(resid);
  return std::asin(std::clamp(c.singularValues()(0), 0.0, 1.0));
}

}  // namespace spurious
