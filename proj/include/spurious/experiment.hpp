#pragma once

// Config-driven runs behind the command-line tool. Needs json.hpp (nlohmann) on the include path.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "spurious/adversarial.hpp"
#include "spurious/dimension.hpp"
#include "spurious/path.hpp"
#include "spurious/paths_generic.hpp"
#include "spurious/paths_linear.hpp"
#include "spurious/paths_quadratic.hpp"
#include "spurious/quadrature.hpp"

namespace spurious {

using json = nlohmann::ordered_json;

inline const std::vector<std::string>& experiment_commands() {
  static const std::vector<std::string> c{"path-linear", "path-quadratic", "path-generic",
                                          "dim",         "adversarial",    "quadrature"};
  return c;
}

struct ExperimentConfig {
  std::string command;
  std::uint64_t seed = 0;
  int grid_points = 200;
  int trials = 1;
  std::optional<double> mono_tol, joint_tol, endpoint_tol;
  json params = json::object();
};

// "relu", "sigmoid", "erf", "linear", "quadratic", {"softplus": beta},
// {"monomial": k}, {"polynomial": [a0, a1, ...]}.
inline std::optional<Activation> parse_activation(const json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "relu") return Activation::relu();
    if (s == "sigmoid") return Activation::sigmoid();
    if (s == "erf") return Activation::erf();
    if (s == "linear") return Activation::linear();
    if (s == "quadratic") return Activation::quadratic();
    if (s == "softplus") return Activation::softplus();
    return std::nullopt;
  }
  if (j.is_object() && j.size() == 1) {
    if (j.contains("softplus") && j["softplus"].is_number() && j["softplus"].get<double>() > 0)
      return Activation::softplus(j["softplus"].get<double>());
    if (j.contains("monomial") && j["monomial"].is_number_integer() && j["monomial"].get<int>() >= 1)
      return Activation::monomial(j["monomial"].get<int>());
    if (j.contains("polynomial") && j["polynomial"].is_array() && !j["polynomial"].empty()) {
      std::vector<double> c;
      for (const auto& v : j["polynomial"]) {
        if (!v.is_number()) return std::nullopt;
        c.push_back(v.get<double>());
      }
      return Activation::polynomial(c);
    }
  }
  return std::nullopt;
}

inline std::optional<Mat> parse_matrix(const json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty()) return std::nullopt;
  const auto r = static_cast<Eigen::Index>(j.size()), c = static_cast<Eigen::Index>(j[0].size());
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    if (!j[i].is_array() || static_cast<Eigen::Index>(j[i].size()) != c) return std::nullopt;
    for (Eigen::Index k = 0; k < c; ++k) {
      if (!j[i][k].is_number()) return std::nullopt;
      m(i, k) = j[i][k].get<double>();
    }
  }
  return m;
}

inline json matrix_json(const Mat& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    a.push_back(row);
  }
  return a;
}

// Parse errors become diagnostics naming the key.
inline ExperimentConfig config_from_json(const json& j, std::vector<std::string>& diags) {
  ExperimentConfig c;
  if (!j.is_object()) {
    diags.push_back("config: must be an object");
    return c;
  }
  auto read_int = [&](const char* key, auto& dst) {
    if (!j.contains(key)) return;
    if (j[key].is_number_integer())
      dst = j[key].get<std::remove_reference_t<decltype(dst)>>();
    else
      diags.push_back(std::string(key) + ": must be an integer");
  };
  if (j.contains("command")) {
    if (j["command"].is_string())
      c.command = j["command"].get<std::string>();
    else
      diags.push_back("command: must be a string");
  }
  if (j.contains("seed") && j["seed"].is_number_integer() && j["seed"].get<long long>() < 0)
    diags.push_back("seed: must be non-negative");
  else
    read_int("seed", c.seed);
  read_int("grid_points", c.grid_points);
  read_int("trials", c.trials);
  if (j.contains("tolerances")) {
    const json& t = j["tolerances"];
    if (!t.is_object()) {
      diags.push_back("tolerances: must be an object");
    } else {
      for (auto it = t.begin(); it != t.end(); ++it) {
        const std::string key = "tolerances." + it.key();
        std::optional<double>* dst = it.key() == "mono_tol"       ? &c.mono_tol
                                     : it.key() == "joint_tol"    ? &c.joint_tol
                                     : it.key() == "endpoint_tol" ? &c.endpoint_tol
                                                                  : nullptr;
        if (!dst)
          diags.push_back(key + ": unknown tolerance");
        else if (!it->is_number())
          diags.push_back(key + ": must be a number");
        else
          *dst = it->get<double>();
      }
    }
  }
  if (j.contains("params")) {
    if (j["params"].is_object())
      c.params = j["params"];
    else
      diags.push_back("params: must be an object");
  }
  static const std::set<std::string> known{"command", "seed", "grid_points", "trials", "tolerances", "params"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) diags.push_back(it.key() + ": unknown key");
  return c;
}

namespace detail {

inline std::optional<long> int_param(const json& p, const std::string& key, std::vector<std::string>& diags,
                                     std::optional<long> fallback = std::nullopt) {
  if (!p.contains(key)) {
    if (!fallback) diags.push_back("params." + key + ": required");
    return fallback;
  }
  if (!p[key].is_number_integer()) {
    diags.push_back("params." + key + ": must be an integer");
    return std::nullopt;
  }
  return p[key].get<long>();
}

inline std::optional<double> num_param(const json& p, const std::string& key, std::vector<std::string>& diags,
                                       std::optional<double> fallback = std::nullopt) {
  if (!p.contains(key)) {
    if (!fallback) diags.push_back("params." + key + ": required");
    return fallback;
  }
  if (!p[key].is_number()) {
    diags.push_back("params." + key + ": must be a number");
    return std::nullopt;
  }
  return p[key].get<double>();
}

inline std::optional<Activation> act_param(const json& p, std::vector<std::string>& diags, const char* fallback) {
  const json a = p.contains("activation") ? p["activation"] : json(fallback);
  auto act = parse_activation(a);
  if (!act) diags.push_back("params.activation: unknown activation " + a.dump());
  return act;
}

inline void at_least(std::optional<long> v, long lo, const std::string& key, std::vector<std::string>& diags) {
  if (v && *v < lo) diags.push_back("params." + key + ": must be >= " + std::to_string(lo));
}

inline void validate_linear(const json& p, std::vector<std::string>& diags) {
  const bool explicit_moments = p.contains("sigma_x") || p.contains("sigma_xy") || p.contains("sigma_y");
  long n = 0, m = 0;
  if (explicit_moments) {
    const auto sx = p.contains("sigma_x") ? parse_matrix(p["sigma_x"]) : std::nullopt;
    const auto sxy = p.contains("sigma_xy") ? parse_matrix(p["sigma_xy"]) : std::nullopt;
    const auto sy = p.contains("sigma_y") ? parse_matrix(p["sigma_y"]) : std::nullopt;
    if (!sx) diags.push_back("params.sigma_x: required numeric matrix");
    if (!sxy) diags.push_back("params.sigma_xy: required numeric matrix");
    if (!sy) diags.push_back("params.sigma_y: required numeric matrix");
    if (sx && sxy && sy) {
      n = sx->rows();
      m = sy->rows();
      if (sx->cols() != n || sy->cols() != m || sxy->rows() != n || sxy->cols() != m)
        diags.push_back("params.sigma_xy: shapes of the moment matrices disagree");
      else if (!is_psd(*sx, 1e-10))
        diags.push_back("params.sigma_x: must be symmetric PSD");
      else if (!is_psd(*sy, 1e-10))
        diags.push_back("params.sigma_y: must be symmetric PSD");
    }
  } else {
    const auto nn = int_param(p, "n", diags), mm = int_param(p, "m", diags);
    at_least(nn, 1, "n", diags);
    at_least(mm, 1, "m", diags);
    n = nn.value_or(0);
    m = mm.value_or(0);
    const auto r = int_param(p, "rank_x", diags, n);
    if (r && n > 0 && (*r < 1 || *r > n)) diags.push_back("params.rank_x: must lie in [1, n]");
  }
  if (!p.contains("widths") || !p["widths"].is_array() || p["widths"].empty()) {
    diags.push_back("params.widths: required non-empty list of hidden widths");
    return;
  }
  std::vector<long> widths;
  for (const auto& w : p["widths"]) {
    if (!w.is_number_integer() || w.get<long>() < 1) {
      diags.push_back("params.widths: entries must be positive integers");
      return;
    }
    widths.push_back(w.get<long>());
  }
  if (p.contains("layers")) {
    if (!p["layers"].is_array() || p["layers"].size() != widths.size() + 1) {
      diags.push_back("params.layers: must list K+1 matrices for K hidden widths");
      return;
    }
    for (std::size_t k = 0; k < p["layers"].size(); ++k) {
      const auto L = parse_matrix(p["layers"][k]);
      const long rows = k < widths.size() ? widths[k] : m;
      const long cols = k == 0 ? n : widths[k - 1];
      if (!L || L->rows() != rows || L->cols() != cols)
        diags.push_back("params.layers[" + std::to_string(k) + "]: expected a " + std::to_string(rows) + "x" +
                        std::to_string(cols) + " matrix");
    }
  }
}

}  // namespace detail

inline std::vector<std::string> validate(const ExperimentConfig& c) {
  std::vector<std::string> d;
  const auto& cmds = experiment_commands();
  if (std::find(cmds.begin(), cmds.end(), c.command) == cmds.end()) {
    d.push_back("command: unknown command '" + c.command + "'");
    return d;
  }
  if (c.grid_points < 50) d.push_back("grid_points: must be >= 50");
  if (c.trials < 1) d.push_back("trials: must be >= 1");
  for (auto [name, v] : {std::pair{"mono_tol", c.mono_tol}, {"joint_tol", c.joint_tol}, {"endpoint_tol", c.endpoint_tol}})
    if (v && !(*v > 0)) d.push_back(std::string("tolerances.") + name + ": must be positive");
  const json& p = c.params;
  using namespace detail;
  if (c.command == "path-linear") {
    validate_linear(p, d);
  } else if (c.command == "path-quadratic") {
    const auto n = int_param(p, "n", d), pp = int_param(p, "p", d), N = int_param(p, "N", d, 50);
    at_least(n, 1, "n", d);
    at_least(N, 1, "N", d);
    if (n && pp && *pp < 2 * *n + 1)
      d.push_back("params.p: the quadratic construction needs p >= 2n+1 (got p=" + std::to_string(*pp) +
                  ", n=" + std::to_string(*n) + ")");
  } else if (c.command == "path-generic") {
    act_param(p, d, "relu");
    const auto n = int_param(p, "n", d), N = int_param(p, "N", d), pp = int_param(p, "p", d);
    at_least(n, 1, "n", d);
    at_least(N, 1, "N", d);
    at_least(pp, 1, "p", d);
  } else if (c.command == "dim") {
    act_param(p, d, "relu");
    const auto n = int_param(p, "n", d);
    at_least(n, 1, "n", d);
    if (p.contains("hermite")) {
      const json& h = p["hermite"];
      if (!h.is_object()) {
        d.push_back("params.hermite: must be an object");
      } else {
        const auto K = int_param(h, "K", d, 12), pp = int_param(h, "p", d, 4), mc = int_param(h, "mc_samples", d, 100000);
        if (K && *K < 0) d.push_back("params.hermite.K: must be >= 0");
        if (pp && *pp < 1) d.push_back("params.hermite.p: must be >= 1");
        if (mc && *mc < 2) d.push_back("params.hermite.mc_samples: must be >= 2");
      }
    }
  } else if (c.command == "adversarial") {
    const auto act = act_param(p, d, "relu");
    const auto n = int_param(p, "n", d), pp = int_param(p, "p", d);
    const auto M = num_param(p, "M", d);
    if (pp && *pp < 2) d.push_back("params.p: region degenerate: the construction needs p >= 2");
    if (n && *n < 3) d.push_back("params.n: the construction needs n >= 3");
    if (M && !(*M > 0)) d.push_back("params.M: must be positive");
    if (act && !act->is_nonnegative()) d.push_back("params.activation: must be non-negative");
    if (act && act->is_polynomial() && !(act->is_quadratic() && n && pp && *pp <= *n - 1))
      d.push_back("params.activation: polynomial activations need quadratic with p <= n-1");
    at_least(int_param(p, "n_support", d, 2000), 1, "n_support", d);
    at_least(int_param(p, "starts", d, 200), 1, "starts", d);
    at_least(int_param(p, "trap_starts", d, 20), 1, "trap_starts", d);
  } else if (c.command == "quadrature") {
    const auto act = act_param(p, d, "relu");
    if (!p.contains("p_list") || !p["p_list"].is_array() || p["p_list"].empty()) {
      d.push_back("params.p_list: must be a non-empty list of widths");
    } else {
      for (const auto& v : p["p_list"])
        if (!v.is_number_integer() || v.get<long>() < 1) {
          d.push_back("params.p_list: entries must be positive integers");
          break;
        }
      if (p["p_list"].size() < 2) d.push_back("params.p_list: a slope needs at least two widths");
    }
    at_least(int_param(p, "n", d, 5), 1, "n", d);
    at_least(int_param(p, "Q", d, 100000), 1, "Q", d);
    at_least(int_param(p, "n_design", d, 4096), 1, "n_design", d);
    const auto lo = num_param(p, "slope_min", d, -1.35), hi = num_param(p, "slope_max", d, -0.65);
    if (lo && hi && *lo >= *hi) d.push_back("params.slope_max: must exceed slope_min");
    (void)act;
  }
  return d;
}

struct RunOutput {
  bool pass = false;
  json report;
  std::vector<PathSample> trace;
};

namespace detail {

inline Tolerances tolerances_for(const ExperimentConfig& c, Tolerances base) {
  if (c.mono_tol) base.mono_tol = *c.mono_tol;
  if (c.joint_tol) base.joint_tol = *c.joint_tol;
  if (c.endpoint_tol) base.endpoint_tol = *c.endpoint_tol;
  return base;
}

inline json tolerances_json(const Tolerances& t) {
  return {{"mono_tol", t.mono_tol},
          {"relative_uptick", t.relative_uptick},
          {"joint_tol", t.joint_tol},
          {"endpoint_tol", t.endpoint_tol},
          {"drift_tol", t.drift_tol}};
}

inline json path_summary(const PathReport& r) {
  return {{"verdict", r.verdict ? "pass" : "fail"},
          {"start_loss", r.start_loss},
          {"endpoint_loss", r.endpoint_loss},
          {"oracle", r.oracle},
          {"endpoint_gap", r.endpoint_gap},
          {"max_uptick", r.max_uptick},
          {"relative_uptick", r.relative_uptick},
          {"max_joint_gap", r.max_joint_gap},
          {"max_invariant_drift", r.max_invariant_drift},
          {"segments", r.segment_kinds.size()},
          {"checks",
           {{"uptick", r.uptick_ok}, {"endpoint", r.endpoint_ok}, {"joints", r.joints_ok}, {"drift", r.drift_ok}}}};
}

inline Mat gaussian_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Mat a(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) a(i, j) = rng.normal();
  return a;
}

// Moments of a Gaussian (X, Y) with X supported on an r-dimensional subspace.
inline Moments random_moments(Rng& rng, Eigen::Index n, Eigen::Index m, Eigen::Index r) {
  const Eigen::Index latent = r + m + 1;
  Mat g = Mat::Zero(n + m, latent);
  g.topLeftCorner(n, r) = gaussian_matrix(rng, n, r);
  g.bottomRows(m) = gaussian_matrix(rng, m, latent);
  const Mat c = g * g.transpose();
  return {c.topLeftCorner(n, n), c.topRightCorner(n, m), c.bottomRightCorner(m, m)};
}

// Trials other than the first use seed + trial.
inline std::uint64_t trial_seed(const ExperimentConfig& c, int t) { return c.seed + static_cast<std::uint64_t>(t); }

inline RunOutput run_path_linear(const ExperimentConfig& c) {
  const json& p = c.params;
  const Tolerances tol = tolerances_for(c, {});
  std::vector<Eigen::Index> widths;
  for (const auto& w : p["widths"]) widths.push_back(w.get<long>());
  RunOutput out;
  out.pass = true;
  json inst = json::array();
  for (int t = 0; t < c.trials; ++t) {
    Rng rng = Rng(trial_seed(c, t)).split(stream::kInstance);
    Moments mo;
    if (p.contains("sigma_x")) {
      mo = {*parse_matrix(p["sigma_x"]), *parse_matrix(p["sigma_xy"]), *parse_matrix(p["sigma_y"])};
    } else {
      const long n = p["n"].get<long>();
      mo = random_moments(rng, n, p["m"].get<long>(), p.value("rank_x", n));
    }
    DeepLinearParams init;
    if (p.contains("layers")) {
      for (const auto& L : p["layers"]) init.layers.push_back(*parse_matrix(L));
    } else {
      Eigen::Index prev = mo.n();
      for (Eigen::Index w : widths) {
        init.layers.push_back(gaussian_matrix(rng, w, prev));
        prev = w;
      }
      init.layers.push_back(gaussian_matrix(rng, mo.m(), prev));
    }
    const LinearDescent ld = linear_descent_path(init, mo, c.grid_points, tol, trial_seed(c, t));
    json s = path_summary(ld.report);
    s["seed"] = trial_seed(c, t);
    s["bottleneck"] = ld.bottleneck;
    s["reduced"] = ld.reduced;
    inst.push_back(s);
    out.pass = out.pass && ld.report.verdict;
    if (t == 0) out.trace = ld.report.samples;
  }
  out.report = {{"tolerances", tolerances_json(tol)}, {"instances", inst}};
  return out;
}

inline RunOutput run_path_quadratic(const ExperimentConfig& c) {
  const json& p = c.params;
  const long n = p["n"].get<long>(), pp = p["p"].get<long>(), N = p.value("N", 50L);
  QuadraticOptions opt;
  opt.grid = c.grid_points;
  opt.tol = tolerances_for(c, opt.tol);
  RunOutput out;
  out.pass = true;
  json inst = json::array();
  for (int t = 0; t < c.trials; ++t) {
    Rng rng = Rng(trial_seed(c, t)).split(stream::kInstance);
    const Discrete d = Discrete::uniform(gaussian_matrix(rng, N, n), gaussian_matrix(rng, N, 1));
    const TwoLayerParams init{gaussian_matrix(rng, 1, pp), gaussian_matrix(rng, pp, n), std::nullopt};
    const QuadDescent q = quadratic_descent_path(init, d, opt);
    json s = path_summary(q.report);
    s["seed"] = trial_seed(c, t);
    s["convex_optimum_risk"] = q.optimum.risk;
    inst.push_back(s);
    out.pass = out.pass && q.report.verdict;
    if (t == 0) out.trace = q.report.samples;
  }
  out.report = {{"tolerances", tolerances_json(opt.tol)}, {"instances", inst}};
  return out;
}

// Least squares residual of Y on the span of all filters, estimated with
// many Gaussian probe directions (or exactly through monomials).
inline double generic_oracle(const Discrete& d, const Activation& rho, const FeatureBasis& basis, Rng rng) {
  Mat phi;
  if (basis.kind == FeatureBasis::Kind::Monomials) {
    phi = monomial_design(d.X, basis);
  } else {
    const Mat w = gaussian_matrix(rng, std::max<Eigen::Index>(4 * d.X.rows(), 32), d.X.cols());
    phi = rho.apply(d.X * w.transpose());
  }
  const Vec sw = d.weights.cwiseSqrt();
  const Mat a = sw.asDiagonal() * phi, b = sw.asDiagonal() * d.Y;
  return (a * lstsq(a, b) - b).squaredNorm();
}

inline RunOutput run_path_generic(const ExperimentConfig& c) {
  const json& p = c.params;
  const Activation act = *parse_activation(p.value("activation", json("relu")));
  const long n = p["n"].get<long>(), N = p["N"].get<long>(), pp = p["p"].get<long>();
  Tolerances tol;
  tol.relative_uptick = false;
  tol = tolerances_for(c, tol);
  RunOutput out;
  out.pass = true;
  json inst = json::array();
  for (int t = 0; t < c.trials; ++t) {
    const std::uint64_t seed = trial_seed(c, t);
    Rng rng = Rng(seed).split(stream::kInstance);
    const Discrete d = Discrete::uniform(gaussian_matrix(rng, N, n), gaussian_matrix(rng, N, 1));
    const TwoLayerParams init{gaussian_matrix(rng, 1, pp), gaussian_matrix(rng, pp, n), std::nullopt};
    const FeatureBasis basis = act.is_polynomial() ? FeatureBasis::for_polynomial(act, static_cast<int>(n))
                                                   : FeatureBasis::discrete(d.X, act, seed);
    const GenericPath g = rank_completion_path(init, act, basis, d, seed);
    const double oracle = generic_oracle(d, act, basis, rng.split(1));
    const PathReport r = generic_path_report(g, act, d, c.grid_points, oracle, tol);
    json s = path_summary(r);
    s["seed"] = seed;
    s["q"] = basis.q;
    inst.push_back(s);
    out.pass = out.pass && r.verdict;
    if (t == 0) out.trace = r.samples;
  }
  out.report = {{"tolerances", tolerances_json(tol)}, {"activation", act.name()}, {"instances", inst}};
  return out;
}

inline json dim_json(const DimValue& v) {
  json j = {{"kind", v.is_finite() ? "finite" : v.is_infinite() ? "infinite" : "unknown-bounded"}, {"text", v.str()}};
  if (v.is_finite()) j["value"] = v.value;
  if (v.kind == DimKind::UnknownBounded) {
    j["lo"] = v.lo;
    j["hi"] = v.hi ? json(*v.hi) : json(nullptr);
  }
  return j;
}

inline RunOutput run_dim(const ExperimentConfig& c) {
  const json& p = c.params;
  const Activation act = *parse_activation(p.value("activation", json("relu")));
  const int n = p["n"].get<int>();
  const IntrinsicDimReport r = intrinsic_dims(act, n);
  RunOutput out;
  out.pass = r.consistent();
  out.report = {{"activation", act.name()},
                {"n", n},
                {"upper", dim_json(r.upper)},
                {"lower", dim_json(r.lower)},
                {"rationale", to_string(r.rationale)},
                {"constant_term", r.constant_term},
                {"note", r.note},
                {"consistent", r.consistent()}};
  if (p.contains("hermite")) {
    const json& h = p["hermite"];
    const int K = h.value("K", 12), pp = h.value("p", 4);
    const long mc = h.value("mc_samples", 100000L);
    Rng rng = Rng(c.seed).split(stream::kInstance);
    const Mat W = gaussian_matrix(rng, pp, n).rowwise().normalized();
    Vec u(pp);
    for (int i = 0; i < pp; ++i) u(i) = rng.normal();
    const HermiteCoeffs hc = hermite_coeffs(act, K);
    const NormIdentityReport nr = gaussian_norm_identity_check(u, W, act, K, mc, c.seed);
    json coeffs = json::array();
    for (int k = 0; k <= K; ++k) coeffs.push_back(hc.coeffs(k));
    out.report["hermite"] = {{"K", K},
                             {"coefficients", coeffs},
                             {"method", hc.method},
                             {"second_moment", hc.second_moment},
                             {"tail_bound", hc.tail_bound},
                             {"converged", hc.converged},
                             {"mc_value", nr.mc_value},
                             {"series_value", nr.series_value},
                             {"stderr", nr.stderr_},
                             {"tail_allowance", nr.tail_allowance},
                             {"identity_pass", nr.pass}};
    out.pass = out.pass && nr.pass && hc.converged;
  }
  return out;
}

inline RunOutput run_adversarial(const ExperimentConfig& c) {
  const json& p = c.params;
  const Activation act = *parse_activation(p.value("activation", json("relu")));
  const int n = p["n"].get<int>(), pp = p["p"].get<int>();
  const double M = p["M"].get<double>();
  const AdversarialBuild b =
      build_adversarial(act, n, pp, M, c.seed, p.value("n_support", 2000L), p.value("margin", 1.1));
  AdversarialBudget budget;
  budget.starts = p.value("starts", 200);
  budget.trap_starts = p.value("trap_starts", 20);
  budget.barrier_grid = c.grid_points;
  const AdversarialReport v = verify_gap(b.spec, b.data, budget, c.seed);
  const TrapReport trap = trap_descents(b.spec, b.data, v, budget, c.seed);
  RunOutput out;
  out.pass = v.pass && trap.pass;
  json trap_final = json::array();
  for (const auto& r : trap.runs) trap_final.push_back(r.final_loss);
  const AdversarialSpec& s = b.spec;
  out.report = {{"activation", act.name()},
                {"n", n},
                {"p", pp},
                {"M", M},
                {"margin", s.margin},
                {"alpha", matrix_json(s.g1.alpha.transpose())[0]},
                {"v", matrix_json(s.g1.V)},
                {"beta", s.beta},
                {"epsilon", s.epsilon},
                {"C_rho0", s.C * s.rho0},
                {"epsilon_slack", s.epsilon_slack()},
                {"beta_slack", s.beta_slack()},
                {"min_omega1", v.min_omega1},
                {"min_omega2", v.min_omega2},
                {"gap", v.gap},
                {"barrier_estimate", v.barrier_estimate},
                {"gap_pass", v.pass},
                {"trap_threshold", trap.threshold},
                {"trap_final_losses", trap_final},
                {"trap_pass", trap.pass},
                {"evidence", v.evidence}};
  // Trace: loss along the straight line from the valley incumbent to the low region incumbent.
  for (int g = 0; g <= c.grid_points; ++g) {
    const double t = static_cast<double>(g) / c.grid_points;
    out.trace.push_back({t, risk_discrete(lerp(v.incumbent2, v.incumbent1, t), act, b.data).value, 0, 0.0});
  }
  return out;
}

inline RunOutput run_quadrature(const ExperimentConfig& c) {
  const json& p = c.params;
  QuadratureRun run;
  run.p_list.clear();
  for (const auto& v : p["p_list"]) run.p_list.push_back(v.get<long>());
  run.trials = c.trials;
  run.n = p.value("n", 5L);
  run.Q = p.value("Q", 100000L);
  run.n_design = p.value("n_design", 4096L);
  run.gstar_scale = p.value("gstar_scale", 1.0);
  run.act = *parse_activation(p.value("activation", json("relu")));
  run.seed = c.seed;
  const double lo = p.value("slope_min", -1.35), hi = p.value("slope_max", -0.65);
  const QuadratureCurve q = excess_risk_curve(run);
  RunOutput out;
  const bool slope_ok = q.slope >= lo && q.slope <= hi;
  out.pass = slope_ok && q.nested_monotone && q.median_violations <= 1;
  json rows = json::array();
  for (const auto& r : q.rows)
    rows.push_back({{"p", r.p}, {"median_excess_risk", r.median}, {"mc_quadrature_median", r.mc_median}});
  out.report = {{"activation", run.act.name()},
                {"homogeneous", q.homogeneous},
                {"n", run.n},
                {"Q", run.Q},
                {"n_design", run.n_design},
                {"curve", rows},
                {"slope", q.slope},
                {"mc_quadrature_slope", q.mc_slope},
                {"slope_window", {lo, hi}},
                {"slope_pass", slope_ok},
                {"median_violations", q.median_violations},
                {"nested_monotone", q.nested_monotone}};
  return out;
}

}  // namespace detail

// Dispatch; throws on precondition failures inside the modules.
inline RunOutput run_experiment(const ExperimentConfig& c) {
  RunOutput out;
  if (c.command == "path-linear") out = detail::run_path_linear(c);
  else if (c.command == "path-quadratic") out = detail::run_path_quadratic(c);
  else if (c.command == "path-generic") out = detail::run_path_generic(c);
  else if (c.command == "dim") out = detail::run_dim(c);
  else if (c.command == "adversarial") out = detail::run_adversarial(c);
  else if (c.command == "quadrature") out = detail::run_quadrature(c);
  else throw std::invalid_argument("command: unknown command '" + c.command + "'");
  json head = {{"command", c.command},
               {"verdict", out.pass ? "pass" : "fail"},
               {"seed", c.seed},
               {"trials", c.trials},
               {"grid_points", c.grid_points},
               {"rng", "splitmix64 counter-based, substreams by split(id)"}};
  head.update(out.report);
  out.report = std::move(head);
  return out;
}

inline void write_trace(const std::vector<PathSample>& samples, const std::filesystem::path& file) {
  std::FILE* f = std::fopen(file.string().c_str(), "w");
  if (!f) throw std::runtime_error("cannot write " + file.string());
  std::fputs("t,loss,segment_id,function_drift\n", f);
  for (const auto& s : samples) std::fprintf(f, "%.17g,%.17g,%d,%.17g\n", s.t, s.loss, s.segment_id, s.function_drift);
  std::fclose(f);
}

inline void write_outputs(const RunOutput& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_trace(r.trace, dir / "trace.csv");
  std::ofstream rep(dir / "report.json");
  if (!rep) throw std::runtime_error("cannot write " + (dir / "report.json").string());
  rep << r.report.dump(2) << '\n';
}

}  // namespace spurious
