#ifndef CRITPOINTS_KERNEL_HPP
#define CRITPOINTS_KERNEL_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "critpoints/activation.hpp"
#include "critpoints/errors.hpp"
#include "critpoints/quadrature.hpp"

namespace critpoints::kernel {

// ---------------------------------------------------------------------------
// Hermite projections

/// c_q = E[f(Z) h_q(Z)] for the orthonormal probabilists' Hermite functions
/// h_q = He_q / sqrt(q!), together with E[f(Z)^2].
struct HermiteProjection {
  std::vector<double> c;
  double second_moment = 0.0;
  int level = 0;  // quadrature level that met the tolerance
};

namespace detail {

template <class F>
HermiteProjection project_at_level(const F& f, std::span<const double> kinks, int Q, int level) {
  const quad::Rule rule = quad::gaussian_weight_rule(level, kinks);
  HermiteProjection out;
  out.c.assign(Q + 1, 0.0);
  out.level = level;
  std::vector<double> sqrt_int(Q + 2);
  for (int q = 0; q <= Q + 1; ++q) sqrt_int[q] = std::sqrt(static_cast<double>(q));
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const double x = rule.nodes[k];
    const double w = rule.weights[k];
    if (w == 0.0) continue;
    const double fx = f(x);
    if (!std::isfinite(fx)) throw DiagnosticError("Hermite projection: activation is not finite on the quadrature grid");
    const double wf = w * fx;
    if (wf == 0.0) continue;
    out.second_moment += wf * fx;
    double h_prev = 1.0, h = x;
    out.c[0] += wf;
    if (Q >= 1) out.c[1] += wf * x;
    for (int q = 1; q < Q; ++q) {
      const double h_next = (x * h - sqrt_int[q] * h_prev) / sqrt_int[q + 1];
      h_prev = h;
      h = h_next;
      out.c[q + 1] += wf * h;
    }
  }
  return out;
}

}  // namespace detail

/// Projects f onto h_0..h_Q, refining the quadrature until the coefficients
/// change by less than `tol` (relative to ||f||) and E[f^2] by less than 1e-8
/// (relative) between consecutive levels. Throws DiagnosticError when f is not
/// square-integrable against the Gaussian weight.
template <class F>
HermiteProjection project_hermite(const F& f, std::span<const double> kinks, int Q, double tol = 1e-10,
                                  int max_level = 6) {
  HermiteProjection prev = detail::project_at_level(f, kinks, Q, 0);
  for (int level = 1; level <= max_level; ++level) {
    HermiteProjection cur = detail::project_at_level(f, kinks, Q, level);
    const double norm = std::sqrt(std::max(cur.second_moment, 0.0));
    if (!std::isfinite(cur.second_moment))
      throw DiagnosticError("Hermite projection: E[sigma(Z)^2] is not finite");
    const double moment_change =
        std::abs(cur.second_moment - prev.second_moment) / std::max(std::abs(cur.second_moment), 1e-300);
    double coeff_change = 0.0;
    for (int q = 0; q <= Q; ++q) coeff_change = std::max(coeff_change, std::abs(cur.c[q] - prev.c[q]));
    if (moment_change < 1e-8 && coeff_change <= tol * std::max(norm, 1e-300)) return cur;
    prev = std::move(cur);
  }
  throw DiagnosticError(
      "Hermite projection did not converge: the activation is not square-integrable against the "
      "Gaussian weight (or is too irregular for the quadrature)");
}

inline HermiteProjection project_activation(const Activation& act, int Q, double tol = 1e-10) {
  const std::vector<double> kinks = act.kinks();
  return project_hermite([&act](double x) { return act(x); }, kinks, Q, tol);
}

/// E[sigma(Z)^2], closed form where available.
inline double activation_second_moment(const Activation& act) {
  if (const auto* g = std::get_if<GaussianRBF>(&act.kind())) return 1.0 / std::sqrt(1.0 + 2.0 * g->a * g->a);
  if (act.is<ReLU>()) return 0.5;
  return project_activation(act, 2).second_moment;
}

/// Lambda_W = (1 - Lambda_b) / E[sigma(Z)^2].
inline double weight_variance(const Activation& act) {
  const double m2 = activation_second_moment(act);
  if (!(m2 > 0.0)) throw ArgumentError("weight_variance: E[sigma(Z)^2] must be positive");
  return (1.0 - act.lambda_b()) / m2;
}

/// b_0..b_Q with b_q = Lambda_W J_q(sigma)^2 / q! (q >= 1) and
/// b_0 = Lambda_W J_0(sigma)^2 + Lambda_b.
inline std::vector<double> hermite_coefficients(const Activation& act, int Q) {
  if (Q < 2) throw ArgumentError("hermite_coefficients: Q must be >= 2");
  const HermiteProjection proj = project_activation(act, Q);
  if (!(proj.second_moment > 0.0)) throw ArgumentError("hermite_coefficients: sigma vanishes almost everywhere");
  const double lambda_w = (1.0 - act.lambda_b()) / proj.second_moment;
  std::vector<double> b(Q + 1);
  for (int q = 0; q <= Q; ++q) b[q] = lambda_w * proj.c[q] * proj.c[q];
  b[0] += act.lambda_b();
  return b;
}

// ---------------------------------------------------------------------------
// Kernel

struct Cri {
  enum class Kind { GreaterThanTwo, Known, Unknown };
  Kind kind = Kind::Unknown;
  double value = 0.0;  // meaningful for Known

  static Cri greater_than_two() { return {Kind::GreaterThanTwo, 0.0}; }
  static Cri known(double v) { return {Kind::Known, v}; }
  static Cri unknown() { return {Kind::Unknown, 0.0}; }
};

/// How the stored kappa'(1), kappa''(1) were obtained.
enum class DerivativeSource {
  ClosedForm,   // analytic expression
  Series,       // converged Hermite series sums
  Divergent,    // kappa''(1) = +infinity (ReLU)
  NotConverged  // series tail above tolerance at the maximum truncation
};

struct KernelOptions {
  int initial_terms = 200;
  int max_terms = 3200;
  double tail_tolerance = 1e-10;
};

class Kernel {
 public:
  Kernel(Activation activation, double lambda_w, std::vector<double> coeffs, double dkappa1, double ddkappa1,
         Cri cri, DerivativeSource source)
      : activation_(std::move(activation)),
        lambda_w_(lambda_w),
        coeffs_(std::move(coeffs)),
        dkappa1_(dkappa1),
        ddkappa1_(ddkappa1),
        cri_(cri),
        source_(source) {
    if (!(lambda_w_ > 0.0)) throw ArgumentError("Kernel: lambda_w must be positive");
    if (coeffs_.size() < 3) throw ArgumentError("Kernel: need at least three series coefficients");
  }

  const Activation& activation() const noexcept { return activation_; }
  double lambda_b() const noexcept { return activation_.lambda_b(); }
  double lambda_w() const noexcept { return lambda_w_; }
  const std::vector<double>& coeffs() const noexcept { return coeffs_; }
  int terms() const noexcept { return static_cast<int>(coeffs_.size()) - 1; }
  double dkappa1() const noexcept { return dkappa1_; }
  double ddkappa1() const noexcept { return ddkappa1_; }
  bool ddkappa1_finite() const noexcept { return std::isfinite(ddkappa1_); }
  const Cri& cri() const noexcept { return cri_; }
  DerivativeSource derivative_source() const noexcept { return source_; }

 private:
  Activation activation_;
  double lambda_w_;
  std::vector<double> coeffs_;
  double dkappa1_;
  double ddkappa1_;
  Cri cri_;
  DerivativeSource source_;
};

namespace detail {

inline double series_sum(std::span<const double> b, int power_weight, std::size_t from = 0) {
  // sum_q w(q) b_q with w = 1, q, q(q-1)
  double s = 0.0;
  for (std::size_t q = b.size(); q-- > from;) {
    const double qd = static_cast<double>(q);
    const double w = power_weight == 0 ? 1.0 : power_weight == 1 ? qd : qd * (qd - 1.0);
    s += w * b[q];
  }
  return s;
}

inline double upper_half_tail(std::span<const double> b, int power_weight) {
  return series_sum(b, power_weight, b.size() / 2);
}

}  // namespace detail

/// Builds the covariance kernel of a single layer with activation `act`.
/// The Hermite series is extended (Q doubled) until the upper half of
/// sum q(q-1) b_q is below the tail tolerance; for ReLU, whose kappa''(1)
/// diverges, the default truncation is kept.
inline Kernel make_kernel(const Activation& act, const KernelOptions& opts = {}) {
  const double lb = act.lambda_b();
  int Q = std::max(opts.initial_terms, 2);
  std::vector<double> b = hermite_coefficients(act, Q);
  const bool relu = act.is<ReLU>();
  bool converged = relu;
  while (!relu) {
    const double tail = std::max(detail::upper_half_tail(b, 2), detail::upper_half_tail(b, 1));
    if (tail < opts.tail_tolerance) {
      converged = true;
      break;
    }
    if (2 * Q > opts.max_terms) break;
    Q *= 2;
    b = hermite_coefficients(act, Q);
  }

  double lambda_w = 0.0, d1 = 0.0, d2 = 0.0;
  Cri cri = Cri::unknown();
  DerivativeSource source = DerivativeSource::Series;
  if (const auto* g = std::get_if<GaussianRBF>(&act.kind())) {
    const double a2 = g->a * g->a, a4 = a2 * a2, s = 1.0 + 2.0 * a2;
    lambda_w = (1.0 - lb) * std::sqrt(s);
    d1 = (1.0 - lb) * a4 / s;
    d2 = (1.0 - lb) * (a4 / s + 3.0 * a4 * a4 / (s * s));
    cri = Cri::greater_than_two();
    source = DerivativeSource::ClosedForm;
  } else if (relu) {
    lambda_w = 2.0 * (1.0 - lb);
    d1 = 1.0 - lb;
    d2 = std::numeric_limits<double>::infinity();
    cri = Cri::known(1.5);
    source = DerivativeSource::Divergent;
  } else {
    lambda_w = weight_variance(act);
    d1 = detail::series_sum(b, 1);
    d2 = detail::series_sum(b, 2);
    cri = act.is<Tanh>() ? Cri::greater_than_two() : Cri::unknown();
    source = converged ? DerivativeSource::Series : DerivativeSource::NotConverged;
  }
  return Kernel(act, lambda_w, std::move(b), d1, d2, cri, source);
}

/// kappa(u) for a single layer.
inline double kappa_eval(const Kernel& k, double u) {
  if (!(std::abs(u) <= 1.0)) throw ArgumentError("kappa_eval: |u| must not exceed 1");
  const double lb = k.lambda_b();
  if (const auto* g = std::get_if<GaussianRBF>(&k.activation().kind())) {
    const double a2 = g->a * g->a;
    const double base = (1.0 + a2) * (1.0 + a2) - a2 * a2 * u * u;
    return k.lambda_w() / std::sqrt(base) + lb;
  }
  if (k.activation().is<ReLU>()) {
    const double s = std::sqrt(std::max(0.0, 1.0 - u * u));
    return (1.0 - lb) * (s + u * (std::numbers::pi - std::acos(u))) / std::numbers::pi + lb;
  }
  const auto& b = k.coeffs();
  double acc = 0.0;
  for (std::size_t q = b.size(); q-- > 0;) acc = acc * u + b[q];
  return acc;
}

/// kappa_L = kappa o ... o kappa (L times).
inline double kappa_L_eval(const Kernel& k, int L, double u) {
  if (L < 1) throw ArgumentError("kappa_L_eval: L must be >= 1");
  if (!(std::abs(u) <= 1.0)) throw ArgumentError("kappa_L_eval: |u| must not exceed 1");
  for (int l = 0; l < L; ++l) u = std::clamp(kappa_eval(k, u), -1.0, 1.0);
  return u;
}

struct Derivatives {
  double first = 0.0;
  double second = 0.0;
  bool second_finite = true;
};

/// (kappa'(1), kappa''(1)); kappa''(1) = +inf with second_finite = false for ReLU.
inline Derivatives kappa_derivs_at_one(const Kernel& k) {
  if (k.derivative_source() == DerivativeSource::NotConverged)
    throw DiagnosticError("kappa_derivs_at_one: Hermite series tail did not converge at the maximum truncation");
  return {k.dkappa1(), k.ddkappa1(), k.ddkappa1_finite()};
}

inline constexpr double kSparseTolerance = 1e-9;

/// (kappa_L'(1), kappa_L''(1)) from the single-layer derivatives.
inline std::pair<double, double> depth_derivs(const Kernel& k, int L, double sparse_tol = kSparseTolerance) {
  if (L < 1) throw ArgumentError("depth_derivs: L must be >= 1");
  const Derivatives d = kappa_derivs_at_one(k);
  if (!d.second_finite)
    throw UnsupportedKernelError("depth_derivs: kappa''(1) is infinite (CRI < 2, e.g. ReLU); use simulation instead");
  const double first = std::pow(d.first, L);
  if (std::abs(d.first - 1.0) <= sparse_tol) return {first, L * d.second};
  // (k'^L - 1)/(k' - 1), evaluated stably near k' = 1
  const double delta = d.first - 1.0;
  const double geometric = d.first > 0.0 ? std::expm1(L * std::log1p(delta)) / delta : -1.0 / delta;
  return {first, d.second * std::pow(d.first, L - 1) * geometric};
}

enum class RegimeTag { LowDisorder, Sparse, HighDisorder };

struct Regime {
  RegimeTag tag;
  double dkappa1;
  double tolerance;
};

inline std::string to_string(RegimeTag t) {
  switch (t) {
    case RegimeTag::LowDisorder: return "low-disorder";
    case RegimeTag::Sparse: return "sparse";
    case RegimeTag::HighDisorder: return "high-disorder";
  }
  return "unknown";
}

inline Regime classify_regime(const Kernel& k, double tolerance = kSparseTolerance) {
  const double d1 = k.dkappa1();
  RegimeTag tag = RegimeTag::Sparse;
  if (d1 < 1.0 - tolerance) tag = RegimeTag::LowDisorder;
  else if (d1 > 1.0 + tolerance) tag = RegimeTag::HighDisorder;
  return {tag, d1, tolerance};
}

// ---------------------------------------------------------------------------
// Angular power spectrum on S^2

/// kappa_L(t) = sum_l chat_l P_l(t); chat absorbs (2l+1)/(4 pi) so that
/// sum_l chat_l equals the variance.
struct AngularSpectrum {
  int lmax = 0;
  int depth = 1;
  std::vector<double> chat;
};

namespace detail {

/// Composite Gauss-Legendre in theta on [0, pi], about `nodes` nodes on a
/// uniform panel grid, with the two end panels refined geometrically so that
/// kernels sharply peaked at t = +-1 are integrated correctly.
inline quad::Rule spectrum_rule(int nodes) {
  static const quad::Rule base = quad::gauss_legendre(16);
  const int panels = std::max(2, (nodes + 15) / 16);
  const double width = std::numbers::pi / panels;
  constexpr int kGrading = 60;
  std::vector<double> breaks;
  breaks.push_back(0.0);
  for (int k = kGrading; k >= 1; --k) breaks.push_back(width * std::ldexp(1.0, -k));
  for (int p = 1; p < panels; ++p) breaks.push_back(width * p);
  for (int k = 1; k <= kGrading; ++k) breaks.push_back(std::numbers::pi - width * std::ldexp(1.0, -k));
  breaks.push_back(std::numbers::pi);
  std::sort(breaks.begin(), breaks.end());
  quad::Rule theta = quad::composite(breaks, base);
  quad::Rule t;
  t.nodes.resize(theta.size());
  t.weights.resize(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    t.nodes[k] = std::cos(theta.nodes[k]);
    t.weights[k] = theta.weights[k] * std::sin(theta.nodes[k]);
  }
  return t;
}

inline std::vector<double> legendre_project(const quad::Rule& rule, std::span<const double> values, int lmax) {
  std::vector<double> c(lmax + 1, 0.0);
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const double t = rule.nodes[k];
    const double wf = rule.weights[k] * values[k];
    double p0 = 1.0, p1 = t;
    c[0] += wf;
    if (lmax >= 1) c[1] += wf * t;
    for (int l = 1; l < lmax; ++l) {
      const double p2 = ((2.0 * l + 1.0) * t * p1 - l * p0) / (l + 1.0);
      p0 = p1;
      p1 = p2;
      c[l + 1] += wf * p2;
    }
  }
  for (int l = 0; l <= lmax; ++l) c[l] *= 0.5 * (2.0 * l + 1.0);
  return c;
}

template <class F>
std::vector<double> legendre_coefficients(const F& f, int lmax, int nodes) {
  const quad::Rule rule = spectrum_rule(nodes);
  std::vector<double> vals(rule.size());
  for (std::size_t k = 0; k < rule.size(); ++k) vals[k] = f(rule.nodes[k]);
  return legendre_project(rule, vals, lmax);
}

}  // namespace detail

inline constexpr double kSpectrumTolerance = 1e-7;

/// chat_l = (2l+1)/2 * int_{-1}^{1} kappa_L(t) P_l(t) dt. The result is
/// checked against a run with twice the nodes.
inline AngularSpectrum angular_spectrum(const Kernel& k, int L, int lmax, int quad_nodes) {
  if (L < 1) throw ArgumentError("angular_spectrum: L must be >= 1");
  if (lmax < 0) throw ArgumentError("angular_spectrum: lmax must be nonnegative");
  if (quad_nodes < 2 * lmax || quad_nodes < 2) throw ArgumentError("angular_spectrum: quad_nodes must be >= 2*lmax");
  auto f = [&](double t) { return kappa_L_eval(k, L, std::clamp(t, -1.0, 1.0)); };
  AngularSpectrum spec{lmax, L, detail::legendre_coefficients(f, lmax, quad_nodes)};
  const std::vector<double> fine = detail::legendre_coefficients(f, lmax, 2 * quad_nodes);
  for (int l = 0; l <= lmax; ++l)
    if (std::abs(fine[l] - spec.chat[l]) > kSpectrumTolerance)
      throw DiagnosticError("angular_spectrum: quadrature did not converge (coefficient " + std::to_string(l) +
                            " moved when the node count doubled)");
  return spec;
}

/// Fraction of the (unit) variance carried by multipoles l <= lcut.
inline double variance_explained(const AngularSpectrum& spec, int lcut) {
  if (lcut < 0 || lcut > spec.lmax) throw ArgumentError("variance_explained: lcut must lie in [0, lmax]");
  double s = 0.0;
  for (int l = 0; l <= lcut; ++l) s += spec.chat[l];
  return std::clamp(s, 0.0, 1.0);
}

}  // namespace critpoints::kernel

#endif  // CRITPOINTS_KERNEL_HPP
