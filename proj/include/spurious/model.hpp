#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "spurious/activation.hpp"
#include "spurious/errors.hpp"
#include "spurious/linalg.hpp"

namespace spurious {

// Phi(x) = U rho(W x + b).
struct TwoLayerParams {
  Mat U;                 // m x p
  Mat W;                 // p x n
  std::optional<Vec> b;  // p

  Eigen::Index m() const { return U.rows(); }
  Eigen::Index p() const { return W.rows(); }
  Eigen::Index n() const { return W.cols(); }

  void check() const {
    require_shape(U.cols() == W.rows(), "U has " + std::to_string(U.cols()) + " columns but W has " +
                                            std::to_string(W.rows()) + " rows");
    require_shape(!b || b->size() == W.rows(), "bias length must equal the hidden width");
    require_shape(U.allFinite() && W.allFinite() && (!b || b->allFinite()), "parameters must be finite");
  }
};

// Pre-activations W x_i + b for the rows x_i of X, as an N x p matrix.
inline Mat preactivations(const TwoLayerParams& th, const Mat& X) {
  require_shape(X.cols() == th.n(), "input dimension mismatch");
  Mat z = X * th.W.transpose();
  if (th.b) z.rowwise() += th.b->transpose();
  return z;
}

// Network outputs for the rows of X, as an N x m matrix.
inline Mat eval_network_batch(const TwoLayerParams& th, const Activation& rho, const Mat& X) {
  th.check();
  return rho.apply(preactivations(th, X)) * th.U.transpose();
}

inline Vec eval_network(const TwoLayerParams& th, const Activation& rho, const Vec& x) {
  th.check();
  require_shape(x.size() == th.n(), "input dimension mismatch");
  Vec z = th.W * x;
  if (th.b) z += *th.b;
  return th.U * rho.apply(z);
}

// Phi(x) = W_{K+1} ... W_1 x, layers stored from W_1 to W_{K+1}.
struct DeepLinearParams {
  std::vector<Mat> layers;

  Eigen::Index n() const { return layers.front().cols(); }
  Eigen::Index m() const { return layers.back().rows(); }
  std::size_t depth() const { return layers.size() - 1; }

  void check() const {
    require_shape(layers.size() >= 2, "a deep linear network needs at least two layers");
    for (std::size_t i = 1; i < layers.size(); ++i)
      require_shape(layers[i].cols() == layers[i - 1].rows(),
                    "layer " + std::to_string(i + 1) + " does not chain with layer " + std::to_string(i));
  }

  Mat product() const {
    Mat p = layers.front();
    for (std::size_t i = 1; i < layers.size(); ++i) p = layers[i] * p;
    return p;
  }

  // Hidden widths p_1 .. p_K.
  std::vector<Eigen::Index> hidden_widths() const {
    std::vector<Eigen::Index> w;
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) w.push_back(layers[i].rows());
    return w;
  }
};

inline Mat lerp(const Mat& a, const Mat& b, double t) { return (1.0 - t) * a + t * b; }

inline TwoLayerParams lerp(const TwoLayerParams& a, const TwoLayerParams& b, double t) {
  TwoLayerParams r{lerp(a.U, b.U, t), lerp(a.W, b.W, t), std::nullopt};
  if (a.b && b.b) r.b = (1.0 - t) * *a.b + t * *b.b;
  return r;
}

inline double param_norm(const Mat& a) { return a.norm(); }
inline double param_distance(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return std::numeric_limits<double>::infinity();
  return (a - b).norm();
}

inline double param_norm(const TwoLayerParams& a) {
  double s = a.U.squaredNorm() + a.W.squaredNorm();
  if (a.b) s += a.b->squaredNorm();
  return std::sqrt(s);
}
inline double param_distance(const TwoLayerParams& a, const TwoLayerParams& b) {
  double s = std::pow(param_distance(a.U, b.U), 2) + std::pow(param_distance(a.W, b.W), 2);
  if (a.b && b.b) s += (*a.b - *b.b).squaredNorm();
  return std::sqrt(s);
}

inline double param_norm(const DeepLinearParams& a) {
  double s = 0;
  for (const auto& l : a.layers) s += l.squaredNorm();
  return std::sqrt(s);
}
inline double param_distance(const DeepLinearParams& a, const DeepLinearParams& b) {
  if (a.layers.size() != b.layers.size()) return std::numeric_limits<double>::infinity();
  double s = 0;
  for (std::size_t i = 0; i < a.layers.size(); ++i) s += std::pow(param_distance(a.layers[i], b.layers[i]), 2);
  return std::sqrt(s);
}

inline double param_norm(const std::vector<Mat>& a) {
  double s = 0;
  for (const auto& l : a) s += l.squaredNorm();
  return std::sqrt(s);
}
inline double param_distance(const std::vector<Mat>& a, const std::vector<Mat>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::pow(param_distance(a[i], b[i]), 2);
  return std::sqrt(s);
}

}  // namespace spurious
