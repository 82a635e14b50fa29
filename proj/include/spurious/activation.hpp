#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "spurious/errors.hpp"
#include "spurious/linalg.hpp"

namespace spurious {

namespace act {
struct Linear {};
struct Quadratic {};
struct Monomial {
  int k = 1;
};
struct Polynomial {
  std::vector<double> coeffs;  // a_0 .. a_d
};
struct ReLU {};
struct Softplus {
  double beta = 1.0;
};
struct Sigmoid {};
struct Erf {};
}  // namespace act

class Activation {
 public:
  using Variant = std::variant<act::Linear, act::Quadratic, act::Monomial, act::Polynomial, act::ReLU,
                               act::Softplus, act::Sigmoid, act::Erf>;

  Activation() : v_(act::ReLU{}) {}
  Activation(act::Linear a) : v_(a) {}
  Activation(act::Quadratic a) : v_(a) {}
  Activation(act::ReLU a) : v_(a) {}
  Activation(act::Sigmoid a) : v_(a) {}
  Activation(act::Erf a) : v_(a) {}
  Activation(act::Monomial a) : v_(a) {
    if (a.k < 1) throw std::invalid_argument("monomial degree must be >= 1");
  }
  Activation(act::Polynomial a) : v_(a) {
    if (a.coeffs.empty() || a.coeffs.back() == 0.0)
      throw std::invalid_argument("polynomial needs a nonzero leading coefficient");
  }
  Activation(act::Softplus a) : v_(a) {
    if (!(a.beta > 0.0)) throw std::invalid_argument("softplus beta must be positive");
  }

  static Activation linear() { return act::Linear{}; }
  static Activation quadratic() { return act::Quadratic{}; }
  static Activation monomial(int k) { return act::Monomial{k}; }
  static Activation polynomial(std::vector<double> c) { return act::Polynomial{std::move(c)}; }
  static Activation relu() { return act::ReLU{}; }
  static Activation softplus(double beta = 1.0) { return act::Softplus{beta}; }
  static Activation sigmoid() { return act::Sigmoid{}; }
  static Activation erf() { return act::Erf{}; }

  const Variant& variant() const { return v_; }

  double operator()(double z) const {
    return std::visit(
        [z](const auto& a) -> double {
          using T = std::decay_t<decltype(a)>;
          if constexpr (std::is_same_v<T, act::Linear>) return z;
          else if constexpr (std::is_same_v<T, act::Quadratic>) return z * z;
          else if constexpr (std::is_same_v<T, act::Monomial>) return std::pow(z, a.k);
          else if constexpr (std::is_same_v<T, act::Polynomial>) {
            double r = 0.0;
            for (auto it = a.coeffs.rbegin(); it != a.coeffs.rend(); ++it) r = r * z + *it;
            return r;
          } else if constexpr (std::is_same_v<T, act::ReLU>) return z > 0.0 ? z : 0.0;
          else if constexpr (std::is_same_v<T, act::Softplus>) {
            const double bz = a.beta * z;
            return (std::max(bz, 0.0) + std::log1p(std::exp(-std::abs(bz)))) / a.beta;
          } else if constexpr (std::is_same_v<T, act::Sigmoid>) {
            return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
          } else return std::erf(z);
        },
        v_);
  }

  // Derivative; the ReLU subgradient is taken as 0 at the kink.
  double derivative(double z) const {
    return std::visit(
        [z](const auto& a) -> double {
          using T = std::decay_t<decltype(a)>;
          if constexpr (std::is_same_v<T, act::Linear>) return 1.0;
          else if constexpr (std::is_same_v<T, act::Quadratic>) return 2.0 * z;
          else if constexpr (std::is_same_v<T, act::Monomial>) return a.k * std::pow(z, a.k - 1);
          else if constexpr (std::is_same_v<T, act::Polynomial>) {
            double r = 0.0;
            for (std::size_t i = a.coeffs.size(); i-- > 1;) r = r * z + static_cast<double>(i) * a.coeffs[i];
            return r;
          } else if constexpr (std::is_same_v<T, act::ReLU>) return z > 0.0 ? 1.0 : 0.0;
          else if constexpr (std::is_same_v<T, act::Softplus>) {
            const double bz = a.beta * z;
            return bz >= 0 ? 1.0 / (1.0 + std::exp(-bz)) : std::exp(bz) / (1.0 + std::exp(bz));
          } else if constexpr (std::is_same_v<T, act::Sigmoid>) {
            const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
            return s * (1.0 - s);
          } else return 2.0 / std::sqrt(std::numbers::pi) * std::exp(-z * z);
        },
        v_);
  }

  Mat apply(const Mat& z) const {
    return z.unaryExpr([this](double v) { return (*this)(v); });
  }
  Mat apply_derivative(const Mat& z) const {
    return z.unaryExpr([this](double v) { return derivative(v); });
  }

  // Coefficients a_0..a_d when the activation is a polynomial.
  std::optional<std::vector<double>> polynomial_coeffs() const {
    return std::visit(
        [](const auto& a) -> std::optional<std::vector<double>> {
          using T = std::decay_t<decltype(a)>;
          if constexpr (std::is_same_v<T, act::Linear>) return std::vector<double>{0.0, 1.0};
          else if constexpr (std::is_same_v<T, act::Quadratic>) return std::vector<double>{0.0, 0.0, 1.0};
          else if constexpr (std::is_same_v<T, act::Monomial>) {
            std::vector<double> c(a.k + 1, 0.0);
            c[a.k] = 1.0;
            return c;
          } else if constexpr (std::is_same_v<T, act::Polynomial>) return a.coeffs;
          else return std::nullopt;
        },
        v_);
  }

  bool is_polynomial() const { return polynomial_coeffs().has_value(); }
  bool is_relu() const { return std::holds_alternative<act::ReLU>(v_); }
  bool is_linear() const { return std::holds_alternative<act::Linear>(v_); }
  bool is_quadratic() const { return std::holds_alternative<act::Quadratic>(v_); }

  // Smooth everywhere; ReLU has a kink at 0.
  bool is_smooth() const { return !is_relu(); }

  bool is_nonnegative() const {
    return is_relu() || is_quadratic() || std::holds_alternative<act::Softplus>(v_) ||
           std::holds_alternative<act::Sigmoid>(v_) ||
           (std::holds_alternative<act::Monomial>(v_) && std::get<act::Monomial>(v_).k % 2 == 0);
  }

  bool is_positively_homogeneous() const { return is_relu() || is_linear(); }

  std::string name() const {
    return std::visit(
        [](const auto& a) -> std::string {
          using T = std::decay_t<decltype(a)>;
          if constexpr (std::is_same_v<T, act::Linear>) return "linear";
          else if constexpr (std::is_same_v<T, act::Quadratic>) return "quadratic";
          else if constexpr (std::is_same_v<T, act::Monomial>) return "monomial" + std::to_string(a.k);
          else if constexpr (std::is_same_v<T, act::Polynomial>) return "polynomial";
          else if constexpr (std::is_same_v<T, act::ReLU>) return "relu";
          else if constexpr (std::is_same_v<T, act::Softplus>) return "softplus";
          else if constexpr (std::is_same_v<T, act::Sigmoid>) return "sigmoid";
          else return "erf";
        },
        v_);
  }

 private:
  Variant v_;
};

inline double eval_activation(const Activation& a, double z) { return a(z); }

}  // namespace spurious
