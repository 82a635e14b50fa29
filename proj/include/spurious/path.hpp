#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "spurious/model.hpp"

namespace spurious {

enum class SegmentKind {
  LinearInterpolation,
  RotationExponential,
  SphereGeodesic,
  ScaledSvd,
  CompensatedOrthogonalization,
  RowRescale,
};

enum class Contract { FunctionInvariant, LossNonIncreasing };

inline std::string to_string(SegmentKind k) {
  switch (k) {
    case SegmentKind::LinearInterpolation: return "linear-interpolation";
    case SegmentKind::RotationExponential: return "rotation-exponential";
    case SegmentKind::SphereGeodesic: return "sphere-geodesic";
    case SegmentKind::ScaledSvd: return "scaled-svd";
    case SegmentKind::CompensatedOrthogonalization: return "compensated-orthogonalization";
    case SegmentKind::RowRescale: return "row-rescale";
  }
  return "unknown";
}

inline std::string to_string(Contract c) {
  return c == Contract::FunctionInvariant ? "function-invariant" : "loss-non-increasing";
}

template <class T>
struct Segment {
  SegmentKind kind = SegmentKind::LinearInterpolation;
  Contract contract = Contract::LossNonIncreasing;
  std::string label;
  std::function<T(double)> eval;

  T start() const { return eval(0.0); }
  T end() const { return eval(1.0); }
};

template <class T>
Segment<T> constant_segment(T value, Contract c = Contract::FunctionInvariant, std::string label = "constant") {
  return {SegmentKind::LinearInterpolation, c, std::move(label), [v = std::move(value)](double) { return v; }};
}

template <class T>
Segment<T> linear_segment(T a, T b, Contract c, std::string label) {
  return {SegmentKind::LinearInterpolation, c, std::move(label),
          [a = std::move(a), b = std::move(b)](double t) { return lerp(a, b, t); }};
}

// Piecewise closed-form curve on [0, 1]; every segment receives an equal
// share of the time interval.
template <class T>
class ParamPath {
 public:
  ParamPath() = default;
  explicit ParamPath(std::vector<Segment<T>> segs) : segs_(std::move(segs)) {}

  void append(Segment<T> s) { segs_.push_back(std::move(s)); }
  void append(const ParamPath& other) {
    for (const auto& s : other.segs_) segs_.push_back(s);
  }

  std::size_t size() const { return segs_.size(); }
  bool empty() const { return segs_.empty(); }
  const Segment<T>& segment(std::size_t i) const { return segs_.at(i); }
  const std::vector<Segment<T>>& segments() const { return segs_; }

  // Segment index and local time for a global t. A joint belongs to the
  // segment that ends there.
  std::pair<std::size_t, double> locate(double t) const {
    if (segs_.empty()) throw std::logic_error("evaluating an empty path");
    if (!(t >= 0.0 && t <= 1.0)) throw std::out_of_range("path time must lie in [0, 1]");
    const double s = t * static_cast<double>(segs_.size());
    std::size_t idx = std::min(static_cast<std::size_t>(std::floor(s)), segs_.size() - 1);
    double local = s - static_cast<double>(idx);
    if (idx > 0 && local == 0.0) {
      --idx;
      local = 1.0;
    }
    return {idx, local};
  }

  T operator()(double t) const {
    auto [i, local] = locate(t);
    return segs_[i].eval(local);
  }
  T eval(double t) const { return (*this)(t); }

  T start() const { return segs_.front().eval(0.0); }
  T end() const { return segs_.back().eval(1.0); }

  // Largest joint discontinuity, scaled by 1 + |start of next segment|.
  double max_joint_gap() const {
    double g = 0.0;
    for (std::size_t i = 0; i + 1 < segs_.size(); ++i) {
      T a = segs_[i].eval(1.0), b = segs_[i + 1].eval(0.0);
      g = std::max(g, param_distance(a, b) / (1.0 + param_norm(b)));
    }
    return g;
  }

  template <class F>
  auto map(F f) const {
    using U = std::decay_t<decltype(f(std::declval<T>()))>;
    ParamPath<U> out;
    for (const auto& s : segs_)
      out.append(Segment<U>{s.kind, s.contract, s.label, [e = s.eval, f](double t) { return f(e(t)); }});
    return out;
  }

 private:
  std::vector<Segment<T>> segs_;
};

template <class T>
T eval_path(const ParamPath<T>& p, double t) {
  return p(t);
}

struct PathSample {
  double t = 0;
  double loss = 0;
  int segment_id = 0;
  double function_drift = 0;
};

struct Tolerances {
  double mono_tol = 1e-7;      // allowed loss increment between grid points
  bool relative_uptick = true;  // measure upticks relative to 1 + |L(start)|
  double joint_tol = 1e-9;
  double endpoint_tol = 1e-6;
  double drift_tol = 1e-8;  // on function-invariant segments
};

struct PathReport {
  std::vector<PathSample> samples;
  std::vector<std::string> segment_kinds;
  std::vector<std::string> segment_contracts;
  std::vector<std::string> segment_labels;
  double max_uptick = 0;
  double relative_uptick = 0;
  double start_loss = 0;
  double endpoint_loss = 0;
  double oracle = 0;
  double endpoint_gap = 0;
  double max_joint_gap = 0;
  double max_invariant_drift = 0;
  Tolerances tol;
  bool uptick_ok = false;
  bool endpoint_ok = false;
  bool joints_ok = false;
  bool drift_ok = false;
  bool verdict = false;
};

// Samples every segment on `grid` equally spaced local times (both ends
// included) and fills a report. `drift(theta, segment_start)` measures the
// change of the represented function since the start of the segment.
template <class T, class Loss, class Drift>
PathReport sample_path(const ParamPath<T>& path, Loss&& loss, Drift&& drift, int grid, double oracle,
                       const Tolerances& tol) {
  if (grid < 2) throw std::invalid_argument("grid needs at least two points per segment");
  PathReport r;
  r.tol = tol;
  r.oracle = oracle;
  const double nseg = static_cast<double>(path.size());
  for (std::size_t s = 0; s < path.size(); ++s) {
    const auto& seg = path.segment(s);
    r.segment_kinds.push_back(to_string(seg.kind));
    r.segment_contracts.push_back(to_string(seg.contract));
    r.segment_labels.push_back(seg.label);
    const T first = seg.eval(0.0);
    for (int j = 0; j < grid; ++j) {
      const double local = static_cast<double>(j) / (grid - 1);
      const T th = j == 0 ? first : seg.eval(local);
      PathSample ps;
      ps.t = (static_cast<double>(s) + local) / nseg;
      ps.loss = loss(th);
      ps.segment_id = static_cast<int>(s);
      ps.function_drift = drift(th, first);
      if (seg.contract == Contract::FunctionInvariant)
        r.max_invariant_drift = std::max(r.max_invariant_drift, ps.function_drift);
      r.samples.push_back(ps);
    }
  }
  for (std::size_t k = 1; k < r.samples.size(); ++k)
    r.max_uptick = std::max(r.max_uptick, r.samples[k].loss - r.samples[k - 1].loss);
  r.start_loss = r.samples.front().loss;
  r.endpoint_loss = r.samples.back().loss;
  r.relative_uptick = r.max_uptick / (1.0 + std::abs(r.start_loss));
  r.endpoint_gap = r.endpoint_loss - oracle;
  r.max_joint_gap = path.max_joint_gap();
  r.uptick_ok = (tol.relative_uptick ? r.relative_uptick : r.max_uptick) <= tol.mono_tol;
  r.endpoint_ok = r.endpoint_gap <= tol.endpoint_tol;
  r.joints_ok = r.max_joint_gap <= tol.joint_tol;
  r.drift_ok = r.max_invariant_drift <= tol.drift_tol;
  r.verdict = r.uptick_ok && r.endpoint_ok && r.joints_ok && r.drift_ok;
  return r;
}

}  // namespace spurious
