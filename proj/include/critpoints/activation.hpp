#ifndef CRITPOINTS_ACTIVATION_HPP
#define CRITPOINTS_ACTIVATION_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include "critpoints/errors.hpp"

namespace critpoints {

/// sigma(x) = exp(-a^2 x^2 / 2).
struct GaussianRBF {
  double a = 1.0;
};

/// sigma(x) = max(0, x).
struct ReLU {};

/// sigma(x) = tanh(x).
struct Tanh {};

/// Piecewise-linear interpolant through (x_k, y_k), extended linearly beyond
/// the first and last samples.
struct NumericTable {
  std::vector<double> x;
  std::vector<double> y;
};

using ActivationKind = std::variant<GaussianRBF, ReLU, Tanh, NumericTable>;

class Activation {
 public:
  Activation(ActivationKind kind, double lambda_b = 0.0) : kind_(std::move(kind)), lambda_b_(lambda_b) {
    if (!(lambda_b_ >= 0.0 && lambda_b_ < 1.0))
      throw ArgumentError("Activation: lambda_b must lie in [0, 1)");
    if (const auto* g = std::get_if<GaussianRBF>(&kind_)) {
      if (!(g->a > 0.0) || !std::isfinite(g->a)) throw ArgumentError("GaussianRBF: a must be positive");
    }
    if (const auto* t = std::get_if<NumericTable>(&kind_)) {
      if (t->x.size() < 2 || t->x.size() != t->y.size())
        throw ArgumentError("NumericTable: need at least two (x, y) samples of equal length");
      if (!std::is_sorted(t->x.begin(), t->x.end()) ||
          std::adjacent_find(t->x.begin(), t->x.end()) != t->x.end())
        throw ArgumentError("NumericTable: x must be strictly increasing");
      for (std::size_t k = 0; k < t->x.size(); ++k)
        if (!std::isfinite(t->x[k]) || !std::isfinite(t->y[k]))
          throw ArgumentError("NumericTable: samples must be finite");
    }
  }

  static Activation gaussian(double a, double lambda_b = 0.0) { return {GaussianRBF{a}, lambda_b}; }
  static Activation gaussian_a2(double a2, double lambda_b = 0.0) { return {GaussianRBF{std::sqrt(a2)}, lambda_b}; }
  static Activation relu(double lambda_b = 0.0) { return {ReLU{}, lambda_b}; }
  static Activation tanh(double lambda_b = 0.0) { return {Tanh{}, lambda_b}; }
  static Activation table(std::vector<double> x, std::vector<double> y, double lambda_b = 0.0) {
    return {NumericTable{std::move(x), std::move(y)}, lambda_b};
  }

  const ActivationKind& kind() const noexcept { return kind_; }
  double lambda_b() const noexcept { return lambda_b_; }

  template <class T>
  bool is() const noexcept {
    return std::holds_alternative<T>(kind_);
  }

  double operator()(double x) const {
    return std::visit(
        [x](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, GaussianRBF>) {
            return std::exp(-0.5 * k.a * k.a * x * x);
          } else if constexpr (std::is_same_v<K, ReLU>) {
            return x > 0.0 ? x : 0.0;
          } else if constexpr (std::is_same_v<K, Tanh>) {
            return std::tanh(x);
          } else {
            return interpolate(k, x);
          }
        },
        kind_);
  }

  /// Points where sigma is not smooth; quadrature panels are split there.
  std::vector<double> kinks() const {
    if (is<ReLU>()) return {0.0};
    if (const auto* t = std::get_if<NumericTable>(&kind_)) return t->x;
    return {};
  }

  std::string name() const {
    return std::visit(
        [](const auto& k) -> std::string {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, GaussianRBF>) return "gaussian_rbf";
          else if constexpr (std::is_same_v<K, ReLU>) return "relu";
          else if constexpr (std::is_same_v<K, Tanh>) return "tanh";
          else return "numeric_table";
        },
        kind_);
  }

  static double interpolate(const NumericTable& t, double x) {
    const auto& xs = t.x;
    std::size_t hi;
    if (x <= xs.front()) {
      hi = 1;
    } else if (x >= xs.back()) {
      hi = xs.size() - 1;
    } else {
      hi = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin());
    }
    const std::size_t lo = hi - 1;
    const double s = (x - xs[lo]) / (xs[hi] - xs[lo]);
    return t.y[lo] + s * (t.y[hi] - t.y[lo]);
  }

 private:
  ActivationKind kind_;
  double lambda_b_;
};

}  // namespace critpoints

#endif  // CRITPOINTS_ACTIVATION_HPP
