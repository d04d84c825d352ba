#ifndef CRITPOINTS_QUADRATURE_HPP
#define CRITPOINTS_QUADRATURE_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "critpoints/errors.hpp"

namespace critpoints::quad {

struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const noexcept { return nodes.size(); }

  template <class F>
  double integrate(F&& f) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < nodes.size(); ++k) acc += weights[k] * f(nodes[k]);
    return acc;
  }
};

/// Gauss-Legendre nodes and weights on [-1, 1], ascending.
/// Newton iteration on the three-term recurrence from the Tricomi initial guess.
inline Rule gauss_legendre(int n) {
  if (n < 1) throw ArgumentError("gauss_legendre: n must be >= 1");
  Rule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const int half = (n + 1) / 2;
  for (int k = 0; k < half; ++k) {
    double x = std::cos(std::numbers::pi * (k + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= n; ++j) {
        const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0, p1 = x;
      // p1 = P_n(x), p0 = P_{n-1}(x)
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= n; ++j) {
        const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[n - 1 - k] = x;
    rule.nodes[k] = -x;
    rule.weights[n - 1 - k] = w;
    rule.weights[k] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

/// Composite Gauss-Legendre rule over the panels delimited by `breaks`
/// (sorted, at least two entries), `per_panel` nodes per panel.
inline Rule composite(std::span<const double> breaks, const Rule& base) {
  Rule out;
  if (breaks.size() < 2) return out;
  out.nodes.reserve((breaks.size() - 1) * base.size());
  out.weights.reserve(out.nodes.capacity());
  for (std::size_t p = 0; p + 1 < breaks.size(); ++p) {
    const double a = breaks[p], b = breaks[p + 1];
    if (!(b > a)) continue;
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (std::size_t k = 0; k < base.size(); ++k) {
      out.nodes.push_back(mid + half * base.nodes[k]);
      out.weights.push_back(half * base.weights[k]);
    }
  }
  return out;
}

/// Standard normal density.
inline double normal_pdf(double x) noexcept {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

/// Upper tail 1 - Phi(u), accurate for large u.
inline double normal_sf(double u) noexcept { return 0.5 * std::erfc(u / std::numbers::sqrt2); }

/// Quadrature for E[f(Z)], Z ~ N(0,1): composite Gauss-Legendre on [-X, X] with
/// the standard normal density folded into the weights. Level k uses
/// X = 8 * sqrt(2)^k and 32 * 2^k panels of 16 nodes, so the node count doubles
/// per level. Interior kinks of the integrand (`kinks`) become panel edges.
inline Rule gaussian_weight_rule(int level, std::span<const double> kinks = {}) {
  static const Rule base = gauss_legendre(16);
  const double X = 8.0 * std::pow(std::numbers::sqrt2, level);
  const int panels = 32 << level;
  std::vector<double> breaks;
  breaks.reserve(panels + 1 + kinks.size());
  for (int p = 0; p <= panels; ++p) breaks.push_back(-X + 2.0 * X * p / panels);
  for (double k : kinks)
    if (k > -X && k < X) breaks.push_back(k);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  Rule rule = composite(breaks, base);
  for (std::size_t k = 0; k < rule.size(); ++k) rule.weights[k] *= normal_pdf(rule.nodes[k]);
  return rule;
}

}  // namespace critpoints::quad

#endif  // CRITPOINTS_QUADRATURE_HPP
