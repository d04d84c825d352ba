#ifndef CRITPOINTS_KACRICE_HPP
#define CRITPOINTS_KACRICE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "critpoints/errors.hpp"
#include "critpoints/goi.hpp"
#include "critpoints/kernel.hpp"
#include "critpoints/quadrature.hpp"
#include "critpoints/rng.hpp"

namespace critpoints::kacrice {

using goi::GOIEstimate;
using kernel::Kernel;

/// Thresholds at or below this value are treated as -infinity.
inline constexpr double kMinusInfinityThreshold = -12.0;

struct DepthSpectralParams {
  int L = 1;
  int d = 2;
  double eta = 0.0;    // kappa_L'(1) / kappa_L''(1)
  double xi = 0.0;     // kappa_L'(1)^2 / kappa_L''(1)
  double gamma = 0.0;  // (kappa_L'(1)^2 - kappa_L'(1)) / kappa_L''(1)
};

struct CritCountPrediction {
  double value = 0.0;
  double std_error = 0.0;
  int index = 0;
  int depth = 1;
  int d = 2;
  std::optional<double> threshold;
};

/// omega_d = 2 pi^{(d+1)/2} / Gamma((d+1)/2).
inline double sphere_volume(int d) {
  if (d < 1) throw ArgumentError("sphere_volume: d must be >= 1");
  return 2.0 * std::pow(std::numbers::pi, 0.5 * (d + 1)) / std::tgamma(0.5 * (d + 1));
}

/// 2 sqrt(pi) / Gamma((d+1)/2).
inline double base_prefactor(int d) { return 2.0 * std::sqrt(std::numbers::pi) / std::tgamma(0.5 * (d + 1)); }

/// gamma_L; throws DegeneracyError unless gamma_L < (d+2)/2.
inline double check_degeneracy(const Kernel& k, int L, int d) {
  if (d < 1) throw ArgumentError("check_degeneracy: d must be >= 1");
  const auto [d1, d2] = kernel::depth_derivs(k, L);
  if (!(d2 > 0.0)) throw UnsupportedKernelError("check_degeneracy: kappa''(1) must be positive");
  const double gamma = (d1 * d1 - d1) / d2;
  if (!(gamma < 0.5 * (d + 2)))
    throw DegeneracyError("Kac-Rice nondegeneracy fails: gamma_L = " + std::to_string(gamma) +
                          " >= (d+2)/2");
  return gamma;
}

inline DepthSpectralParams spectral_params(const Kernel& k, int L, int d) {
  if (d < 1) throw ArgumentError("spectral_params: d must be >= 1");
  if (!k.ddkappa1_finite())
    throw UnsupportedKernelError(
        "spectral_params: kappa''(1) is infinite (CRI <= 2, e.g. ReLU); the Kac-Rice formulas do not apply");
  const auto [d1, d2] = kernel::depth_derivs(k, L);
  if (!(d2 > 0.0)) throw UnsupportedKernelError("spectral_params: kappa''(1) must be positive");
  DepthSpectralParams p;
  p.L = L;
  p.d = d;
  p.eta = d1 / d2;
  p.xi = d1 * d1 / d2;
  p.gamma = check_degeneracy(k, L, d);
  return p;
}

namespace detail {

inline void check_index(int d, int i) {
  if (i < 0 || i > d) throw ArgumentError("critical point index must lie in [0, d]");
}

inline void check_samples(long long n) {
  if (n < 1000) throw ArgumentError("mc_samples must be >= 1000");
}

/// Count from the GOI expectation: 2 sqrt(pi)/(Gamma((d+1)/2) eta^{d/2}) E.
inline CritCountPrediction scale(const GOIEstimate& e, double eta, int d, int i, int L) {
  const double pref = base_prefactor(d) / std::pow(eta, 0.5 * d);
  return {pref * e.mean, pref * e.std_error, i, L, d, std::nullopt};
}

/// Standard normal quantile of the upper tail: x with 1 - Phi(x) = p.
inline double upper_quantile(double p) { return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p); }

}  // namespace detail

/// Expected number of index-i critical points for i = 0..d, one GOI pass.
inline std::vector<CritCountPrediction> expected_crit_counts(const Kernel& k, int L, int d, long long mc_samples,
                                                             std::uint64_t seed) {
  detail::check_samples(mc_samples);
  const DepthSpectralParams sp = spectral_params(k, L, d);
  const auto est = goi::goi_expectation_mc_all({d, 0.5 * (1.0 + sp.eta)}, 0.0, mc_samples, seed);
  std::vector<CritCountPrediction> out;
  for (int i = 0; i <= d; ++i) out.push_back(detail::scale(est[i], sp.eta, d, i, L));
  return out;
}

inline CritCountPrediction expected_crit_count(const Kernel& k, int L, int d, int i, long long mc_samples,
                                               std::uint64_t seed) {
  detail::check_index(d, i);
  return expected_crit_counts(k, L, d, mc_samples, seed)[i];
}

/// Expected number of index-i critical points above u, for i = 0..d. The
/// threshold integral is sampled jointly with the GOI vector: x from the
/// standard normal truncated to [u, inf), weighted by 1 - Phi(u).
inline std::vector<CritCountPrediction> expected_crit_counts_above(const Kernel& k, int L, int d, double u,
                                                                   long long mc_samples, std::uint64_t seed) {
  detail::check_samples(mc_samples);
  if (std::isnan(u)) throw ArgumentError("threshold must not be NaN");
  const DepthSpectralParams sp = spectral_params(k, L, d);
  std::vector<CritCountPrediction> out;
  if (u == std::numeric_limits<double>::infinity()) {
    for (int i = 0; i <= d; ++i) out.push_back({0.0, 0.0, i, L, d, u});
    return out;
  }
  const double lower = std::max(u, kMinusInfinityThreshold);
  const double tail = quad::normal_sf(lower);
  const double k_scale = std::sqrt(sp.xi) / std::numbers::sqrt2;
  const goi::GOIParams gp{d, 0.5 * (1.0 + sp.eta - sp.xi)};
  gp.validate();
  if (d > 16) throw ArgumentError("expected_crit_count_above: d above 16 is not supported");
  const double factor = goi::change_of_variables_factor(d);
  const auto stats = monte_carlo(d + 1, mc_samples, seed, [&](Rng& rng, std::span<double> res) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double p = unif(rng);
    while (p == 0.0) p = unif(rng);
    const double x = detail::upper_quantile(p * tail);
    double z[16];
    std::span<double> zs(z, d);
    goi::draw_theta_vector(gp, rng, zs);
    std::sort(zs.begin(), zs.end());
    std::fill(res.begin(), res.end(), 0.0);
    double prod;
    const int idx = goi::shifted_index(zs, k_scale * x, prod);
    if (idx >= 0) res[idx] = tail * factor * prod * goi::vandermonde(zs);
  });
  for (int i = 0; i <= d; ++i) {
    CritCountPrediction pred = detail::scale(GOIEstimate::from(stats[i]), sp.eta, d, i, L);
    pred.threshold = u;
    out.push_back(pred);
  }
  return out;
}

inline CritCountPrediction expected_crit_count_above(const Kernel& k, int L, int d, int i, double u,
                                                     long long mc_samples, std::uint64_t seed) {
  detail::check_index(d, i);
  return expected_crit_counts_above(k, L, d, u, mc_samples, seed)[i];
}

/// A_i = 2 sqrt(pi)/Gamma((d+1)/2) E_GOI(1/2)[Pi 1_{O_i}], all i.
inline std::vector<GOIEstimate> constants_A(int d, long long mc_samples, std::uint64_t seed) {
  detail::check_samples(mc_samples);
  const double pref = base_prefactor(d);
  std::vector<GOIEstimate> out;
  for (const auto& e : goi::goi_expectation_mc_all({d, 0.5}, 0.0, mc_samples, seed))
    out.push_back({pref * e.mean, pref * e.std_error, e.n});
  return out;
}

inline GOIEstimate constant_Ai(int d, int i, long long mc_samples, std::uint64_t seed) {
  detail::check_index(d, i);
  return constants_A(d, mc_samples, seed)[i];
}

/// Limit of eta_L in the low-disorder regime: kappa'(1)(1 - kappa'(1))/kappa''(1).
inline double low_disorder_eta_limit(const Kernel& k) {
  return k.dkappa1() * (1.0 - k.dkappa1()) / k.ddkappa1();
}

/// B_i: the large-depth limit of the low-disorder count, i.e. the finite-depth
/// formula with eta_L replaced by its limit.
inline std::vector<GOIEstimate> constants_B(const Kernel& k, int d, long long mc_samples, std::uint64_t seed) {
  detail::check_samples(mc_samples);
  if (!k.ddkappa1_finite()) throw UnsupportedKernelError("constant_Bi: kappa''(1) is infinite");
  if (kernel::classify_regime(k).tag != kernel::RegimeTag::LowDisorder)
    throw RegimeError("constant_Bi requires kappa'(1) < 1 (low-disorder regime)");
  const double eta = low_disorder_eta_limit(k);
  const double pref = base_prefactor(d) / std::pow(eta, 0.5 * d);
  std::vector<GOIEstimate> out;
  for (const auto& e : goi::goi_expectation_mc_all({d, 0.5 * (1.0 + eta)}, 0.0, mc_samples, seed))
    out.push_back({pref * e.mean, pref * e.std_error, e.n});
  return out;
}

inline GOIEstimate constant_Bi(const Kernel& k, int d, int i, long long mc_samples, std::uint64_t seed) {
  detail::check_index(d, i);
  return constants_B(k, d, mc_samples, seed)[i];
}

struct DiOptions {
  int L1 = 40;
  int L2 = 60;
  double rel_tolerance = 1e-3;
};

/// D_i(u) = lim_L E[C_i(T_L, u)] / kappa'(1)^{L d / 2}, estimated at two
/// depths with common random numbers; the pair must agree to rel_tolerance.
inline GOIEstimate constant_Di(const Kernel& k, int d, int i, double u, long long mc_samples, std::uint64_t seed,
                               const DiOptions& opt = {}) {
  detail::check_index(d, i);
  if (!k.ddkappa1_finite()) throw UnsupportedKernelError("constant_Di: kappa''(1) is infinite");
  if (kernel::classify_regime(k).tag != kernel::RegimeTag::HighDisorder)
    throw RegimeError("constant_Di requires kappa'(1) > 1 (high-disorder regime)");
  if (opt.L1 < 1 || opt.L2 <= opt.L1) throw ArgumentError("constant_Di: need 1 <= L1 < L2");
  auto at = [&](int L) {
    const CritCountPrediction p = expected_crit_count_above(k, L, d, i, u, mc_samples, seed);
    const double growth = std::exp(0.5 * L * d * std::log(k.dkappa1()));
    return GOIEstimate{p.value / growth, p.std_error / growth, mc_samples};
  };
  const GOIEstimate a = at(opt.L1), b = at(opt.L2);
  const double scale = std::max(std::abs(b.mean), 1e-300);
  if (std::abs(a.mean - b.mean) > opt.rel_tolerance * scale && std::abs(a.mean - b.mean) > 1e-12)
    throw DiagnosticError("constant_Di: estimates at the two depths disagree; the limit has not been reached");
  return b;
}

/// Leading-order count from the depth trichotomy.
inline std::vector<CritCountPrediction> asymptotic_crit_counts(const Kernel& k, int L, int d, long long mc_samples,
                                                               std::uint64_t seed,
                                                               double sparse_tol = kernel::kSparseTolerance) {
  if (L < 1) throw ArgumentError("asymptotic_crit_count: L must be >= 1");
  if (k.cri().kind != kernel::Cri::Kind::GreaterThanTwo)
    throw UnsupportedKernelError("asymptotic_crit_count: requires a kernel with CRI greater than 2");
  if (!k.ddkappa1_finite() || !(k.ddkappa1() > 0.0))
    throw UnsupportedKernelError("asymptotic_crit_count: kappa''(1) must be finite and positive");
  const kernel::Regime regime = kernel::classify_regime(k, sparse_tol);
  std::vector<CritCountPrediction> out;
  if (regime.tag == kernel::RegimeTag::LowDisorder) {
    for (int i = 0; const auto& b : constants_B(k, d, mc_samples, seed))
      out.push_back({b.mean, b.std_error, i++, L, d, std::nullopt});
    return out;
  }
  const double eta = k.dkappa1() / k.ddkappa1();
  double mult;
  if (regime.tag == kernel::RegimeTag::Sparse) {
    mult = std::pow(L / eta, 0.5 * d);
  } else {
    mult = std::exp(0.5 * L * d * std::log(k.dkappa1())) / std::pow(eta * (k.dkappa1() - 1.0), 0.5 * d);
  }
  for (int i = 0; const auto& a : constants_A(d, mc_samples, seed))
    out.push_back({mult * a.mean, mult * a.std_error, i++, L, d, std::nullopt});
  return out;
}

inline CritCountPrediction asymptotic_crit_count(const Kernel& k, int L, int d, int i, long long mc_samples,
                                                 std::uint64_t seed) {
  detail::check_index(d, i);
  return asymptotic_crit_counts(k, L, d, mc_samples, seed)[i];
}

// ---------------------------------------------------------------------------
// CSV

inline std::string prediction_csv_header() { return "kernel_id,L,d,i,u,value,stderr,regime"; }

inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::string prediction_csv_row(const std::string& kernel_id, const CritCountPrediction& p,
                                      kernel::RegimeTag regime) {
  std::ostringstream os;
  os << kernel_id << ',' << p.depth << ',' << p.d << ',' << p.index << ','
     << (p.threshold ? format_double(*p.threshold) : std::string("-inf")) << ',' << format_double(p.value) << ','
     << format_double(p.std_error) << ',' << kernel::to_string(regime);
  return os.str();
}

}  // namespace critpoints::kacrice

#endif  // CRITPOINTS_KACRICE_HPP
