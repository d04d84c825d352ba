#ifndef CRITPOINTS_GOI_HPP
#define CRITPOINTS_GOI_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "critpoints/errors.hpp"
#include "critpoints/rng.hpp"

namespace critpoints::goi {

/// GOI(c) on d x d symmetric matrices: E[M_ij M_hk] = (d_ih d_jk + d_ik d_jh)/2 + c d_ij d_hk.
struct GOIParams {
  int d = 2;
  double c = 0.5;

  void validate() const {
    if (d < 1) throw ArgumentError("GOI: dimension d must be >= 1");
    if (!std::isfinite(c)) throw ParameterError("GOI: c must be finite");
    if (!(1.0 + d * c > 0.0)) throw ParameterError("GOI: 1 + d c must be positive (nondegeneracy)");
  }
};

struct GOIEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long long n = 0;

  static GOIEstimate from(const RunningStats& s) { return {s.mean, s.std_error(), s.n}; }
};

/// Event lambda_i < shift < lambda_{i+1} on sorted eigenvalues (lambda_0 = -inf,
/// lambda_{d+1} = +inf), i.e. exactly i eigenvalues below the shift.
struct IndexSelector {
  int i = 0;
  double shift = 0.0;
};

/// sqrt(a^2 + b^2) for joint standard errors.
inline double joint_stderr(const GOIEstimate& a, const GOIEstimate& b) { return std::hypot(a.std_error, b.std_error); }

/// K_d = 2^{d/2} prod_{j=1}^{d} Gamma(j/2).
inline double goi_normalization(int d) {
  if (d < 1) throw ArgumentError("goi_normalization: d must be >= 1");
  double k = std::pow(2.0, 0.5 * d);
  for (int j = 1; j <= d; ++j) k *= std::tgamma(0.5 * j);
  return k;
}

/// Product of |lambda_k - lambda_h| over h < k.
inline double vandermonde(std::span<const double> v) {
  double p = 1.0;
  for (std::size_t k = 1; k < v.size(); ++k)
    for (std::size_t h = 0; h < k; ++h) p *= std::abs(v[k] - v[h]);
  return p;
}

/// Joint density of the ordered eigenvalues; zero off the ordered region.
inline double goi_density(std::span<const double> lambda, const GOIParams& p) {
  p.validate();
  if (static_cast<int>(lambda.size()) != p.d) throw ArgumentError("goi_density: eigenvalue vector has wrong length");
  if (!std::is_sorted(lambda.begin(), lambda.end())) return 0.0;
  double sum = 0.0, sum_sq = 0.0;
  for (double x : lambda) {
    sum += x;
    sum_sq += x * x;
  }
  const double one_dc = 1.0 + p.d * p.c;
  const double expo = -0.5 * sum_sq + p.c / (2.0 * one_dc) * sum * sum;
  return vandermonde(lambda) * std::exp(expo) / (goi_normalization(p.d) * std::sqrt(one_dc));
}

/// M = A + sqrt(c) xi I with A having diagonal variance 1 and off-diagonal variance 1/2.
inline Eigen::MatrixXd sample_goi_matrix(const GOIParams& p, Rng& rng) {
  p.validate();
  if (p.c < 0.0) throw ParameterError("sample_goi_matrix: construction requires c >= 0");
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(p.d, p.d);
  for (int r = 0; r < p.d; ++r) {
    m(r, r) = normal(rng);
    for (int s = r + 1; s < p.d; ++s) m(r, s) = m(s, r) = std::numbers::sqrt2 / 2.0 * normal(rng);
  }
  const double shift = std::sqrt(p.c) * normal(rng);
  for (int r = 0; r < p.d; ++r) m(r, r) += shift;
  return m;
}

/// Draws Z ~ N(0, I + c 1 1^T) as X + beta (1^T X) 1 with (1 + beta d)^2 = 1 + c d.
inline void draw_theta_vector(const GOIParams& p, Rng& rng, std::span<double> z) {
  std::normal_distribution<double> normal;
  const double beta = (std::sqrt(1.0 + p.d * p.c) - 1.0) / p.d;
  double sum = 0.0;
  for (double& v : z) {
    v = normal(rng);
    sum += v;
  }
  for (double& v : z) v += beta * sum;
}

/// (2 pi)^{d/2} / (K_d d!), the change-of-variables factor with ordered-region
/// indicator replaced by sorting.
inline double change_of_variables_factor(int d) {
  return std::pow(2.0 * std::numbers::pi, 0.5 * d) / (goi_normalization(d) * std::tgamma(d + 1.0));
}

/// Number of sorted entries strictly below `shift` and prod |v_j - shift|;
/// returns index -1 on an exact tie.
inline int shifted_index(std::span<const double> sorted, double shift, double& abs_product) {
  int below = 0;
  abs_product = 1.0;
  for (double v : sorted) {
    if (v == shift) return -1;
    if (v < shift) ++below;
    abs_product *= std::abs(v - shift);
  }
  return below;
}

/// E_GOI(c)[prod |lambda_j - s| 1{lambda_i < s < lambda_{i+1}}] for all i in
/// [0, d] from one pass of the Gaussian change-of-variables estimator.
inline std::vector<GOIEstimate> goi_expectation_mc_all(const GOIParams& p, double shift, long long n,
                                                       std::uint64_t seed) {
  p.validate();
  if (n < 2) throw ArgumentError("goi_expectation_mc: need at least two samples");
  if (p.d > 16) throw ArgumentError("goi_expectation_mc: d above 16 is not supported");
  const double factor = change_of_variables_factor(p.d);
  const auto stats = monte_carlo(p.d + 1, n, seed, [&](Rng& rng, std::span<double> out) {
    double z[16];
    std::span<double> zs(z, p.d);
    draw_theta_vector(p, rng, zs);
    std::sort(zs.begin(), zs.end());
    std::fill(out.begin(), out.end(), 0.0);
    double prod;
    const int idx = shifted_index(zs, shift, prod);
    if (idx >= 0) out[idx] = factor * prod * vandermonde(zs);
  });
  std::vector<GOIEstimate> est;
  for (const auto& s : stats) est.push_back(GOIEstimate::from(s));
  return est;
}

inline GOIEstimate goi_expectation_mc(const GOIParams& p, const IndexSelector& sel, long long n, std::uint64_t seed) {
  if (sel.i < 0 || sel.i > p.d) throw ArgumentError("goi_expectation_mc: index must lie in [0, d]");
  if (n < 1000) throw ArgumentError("goi_expectation_mc: need at least 1000 samples");
  return goi_expectation_mc_all(p, sel.shift, n, seed)[sel.i];
}

/// Same expectations from sampled matrices and their exact eigenvalues.
inline std::vector<GOIEstimate> goi_expectation_oracle_all(const GOIParams& p, double shift, long long n,
                                                           std::uint64_t seed) {
  p.validate();
  if (p.c < 0.0) throw ParameterError("goi_expectation_oracle: requires c >= 0");
  if (n < 2) throw ArgumentError("goi_expectation_oracle: need at least two samples");
  const auto stats = monte_carlo(p.d + 1, n, seed, [&](Rng& rng, std::span<double> out) {
    const Eigen::MatrixXd m = sample_goi_matrix(p, rng);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw DiagnosticError("goi_expectation_oracle: eigensolver failed");
    const Eigen::VectorXd& ev = solver.eigenvalues();  // ascending
    std::fill(out.begin(), out.end(), 0.0);
    double prod;
    const int idx = shifted_index(std::span<const double>(ev.data(), p.d), shift, prod);
    if (idx >= 0) out[idx] = prod;
  });
  std::vector<GOIEstimate> est;
  for (const auto& s : stats) est.push_back(GOIEstimate::from(s));
  return est;
}

inline GOIEstimate goi_expectation_oracle(const GOIParams& p, const IndexSelector& sel, long long n,
                                          std::uint64_t seed) {
  if (sel.i < 0 || sel.i > p.d) throw ArgumentError("goi_expectation_oracle: index must lie in [0, d]");
  if (n < 1000) throw ArgumentError("goi_expectation_oracle: need at least 1000 samples");
  return goi_expectation_oracle_all(p, sel.shift, n, seed)[sel.i];
}

}  // namespace critpoints::goi

#endif  // CRITPOINTS_GOI_HPP
