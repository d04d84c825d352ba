#ifndef CRITPOINTS_SPHERE_HPP
#define CRITPOINTS_SPHERE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "critpoints/activation.hpp"
#include "critpoints/errors.hpp"
#include "critpoints/grid.hpp"
#include "critpoints/kernel.hpp"
#include "critpoints/rng.hpp"

namespace critpoints::sphere {

// ---------------------------------------------------------------------------
// Finite-width random networks

/// Fully connected net on S^d: T_0 = W0 x + b, T_s = W_s sigma(T_{s-1}) + b,
/// scalar output T_L. `widths` holds n_1..n_L.
struct NetworkConfig {
  int depth = 1;
  std::vector<int> widths{1000};
  Activation activation = Activation::gaussian(1.0);
  int d = 2;

  static NetworkConfig uniform(int depth, int width, Activation act, int d = 2) {
    return {depth, std::vector<int>(std::max(depth, 0), width), std::move(act), d};
  }

  void validate() const {
    if (depth < 1) throw ArgumentError("NetworkConfig: depth must be >= 1");
    if (static_cast<int>(widths.size()) != depth) throw ArgumentError("NetworkConfig: need one width per layer");
    for (int n : widths)
      if (n < 1) throw ArgumentError("NetworkConfig: widths must be positive");
    if (d < 1) throw ArgumentError("NetworkConfig: d must be >= 1");
  }
};

namespace detail {

template <class Dense>
void apply_activation(const Activation& act, Dense& t) {
  if (const auto* g = std::get_if<GaussianRBF>(&act.kind())) {
    const float s = static_cast<float>(-0.5 * g->a * g->a);
    t = (t.array().square() * s).exp();
  } else if (act.is<ReLU>()) {
    t = t.array().max(0.0f);
  } else if (act.is<Tanh>()) {
    t = t.array().tanh();
  } else {
    const auto& table = std::get<NumericTable>(act.kind());
    for (Eigen::Index k = 0; k < t.size(); ++k)
      t.data()[k] = static_cast<float>(Activation::interpolate(table, t.data()[k]));
  }
}

/// Replaces each offset e (column j) by sigma(a_j + e) - sigma(a_j), without
/// cancellation when e is small.
inline void activation_delta(const Activation& act, const Eigen::RowVectorXd& a, Eigen::MatrixXf& e) {
  if (const auto* g = std::get_if<GaussianRBF>(&act.kind())) {
    const double s = 0.5 * g->a * g->a;
    for (Eigen::Index j = 0; j < e.cols(); ++j) {
      const float aj = static_cast<float>(a(j)), sj = static_cast<float>(std::exp(-s * a(j) * a(j)));
      auto c = e.col(j).array();
      c = sj * (c * (c + 2.0f * aj) * static_cast<float>(-s)).expm1();
    }
  } else if (act.is<ReLU>()) {
    for (Eigen::Index j = 0; j < e.cols(); ++j) {
      const float aj = static_cast<float>(a(j));
      auto c = e.col(j).array();
      if (aj >= 0.0f) c = c.max(-aj);
      else c = (c + aj).max(0.0f);
    }
  } else if (act.is<Tanh>()) {
    for (Eigen::Index j = 0; j < e.cols(); ++j) {
      const float aj = static_cast<float>(a(j)), tj = static_cast<float>(std::tanh(a(j)));
      auto c = e.col(j).array();
      c = c.tanh() * (1.0f - tj * (c + aj).tanh());
    }
  } else {
    const auto& table = std::get<NumericTable>(act.kind());
    auto segment = [&](double x) {
      if (x <= table.x.front()) return std::size_t{1};
      if (x >= table.x.back()) return table.x.size() - 1;
      return static_cast<std::size_t>(std::upper_bound(table.x.begin(), table.x.end(), x) - table.x.begin());
    };
    for (Eigen::Index j = 0; j < e.cols(); ++j) {
      const std::size_t k = segment(a(j));
      const double slope = (table.y[k] - table.y[k - 1]) / (table.x[k] - table.x[k - 1]);
      const double base = Activation::interpolate(table, a(j));
      for (Eigen::Index r = 0; r < e.rows(); ++r) {
        const double x = a(j) + e(r, j);
        e(r, j) = static_cast<float>(segment(x) == k ? slope * e(r, j) : Activation::interpolate(table, x) - base);
      }
    }
  }
}

inline constexpr Eigen::Index kPixelBlock = 256;

}  // namespace detail

/// One weight realization. Layer s maps n_s inputs to n_{s+1} outputs, with
/// n_0 = d + 1 and n_{L+1} = `outputs`.
class RandomNetwork {
 public:
  RandomNetwork(const NetworkConfig& cfg, std::uint64_t seed, int outputs = 1) : cfg_(cfg) {
    cfg_.validate();
    if (outputs < 1) throw ArgumentError("RandomNetwork: need at least one output");
    const double lambda_b = cfg_.activation.lambda_b();
    const double lambda_w = kernel::weight_variance(cfg_.activation);
    Rng rng = substream(seed, 0);
    std::normal_distribution<double> normal;
    std::vector<int> dims{cfg_.d + 1};
    dims.insert(dims.end(), cfg_.widths.begin(), cfg_.widths.end());
    dims.push_back(outputs);
    for (int s = 0; s <= cfg_.depth; ++s) {
      const int n_in = dims[s], n_out = dims[s + 1];
      const double sd = s == 0 ? std::sqrt(1.0 - lambda_b) : std::sqrt(lambda_w / n_in);
      Eigen::MatrixXf w(n_in, n_out);  // stored transposed: T = H * w
      for (int o = 0; o < n_out; ++o)
        for (int i = 0; i < n_in; ++i) w(i, o) = static_cast<float>(sd * normal(rng));
      Eigen::RowVectorXf b(n_out);
      const double sb = std::sqrt(lambda_b);
      for (int o = 0; o < n_out; ++o) b(o) = static_cast<float>(sb * normal(rng));
      weights_.push_back(std::move(w));
      biases_.push_back(std::move(b));
    }
  }

  const NetworkConfig& config() const noexcept { return cfg_; }
  int outputs() const noexcept { return static_cast<int>(biases_.back().size()); }
  /// Layer s weights, stored transposed (n_s x n_{s+1}), and biases.
  const Eigen::MatrixXf& weights(int s) const { return weights_.at(s); }
  const Eigen::RowVectorXf& biases(int s) const { return biases_.at(s); }

  /// Outputs at each point: rows are points, columns output components.
  Eigen::MatrixXd evaluate(std::span<const Vec3> points) const {
    if (cfg_.depth == 1 && outputs() == 1) return evaluate_shallow(points);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(points.size()), outputs());
    run(points, [&](int layer, Eigen::Index row0, const Eigen::MatrixXf& t, const Eigen::RowVectorXd& ref) {
      if (layer == cfg_.depth) out.middleRows(row0, t.rows()) = t.cast<double>().rowwise() + ref;
    });
    return out;
  }

  /// Component 0 of T_l for each l in `depths` (1 <= l <= L). T_l has the law
  /// of a depth-l network output with widths n_1..n_l.
  std::vector<std::vector<double>> evaluate_depths(std::span<const Vec3> points, std::span<const int> depths) const {
    for (int l : depths)
      if (l < 1 || l > cfg_.depth) throw ArgumentError("evaluate_depths: depth outside [1, L]");
    std::vector<std::vector<double>> out(depths.size(), std::vector<double>(points.size()));
    run(points, [&](int layer, Eigen::Index row0, const Eigen::MatrixXf& t, const Eigen::RowVectorXd& ref) {
      for (std::size_t k = 0; k < depths.size(); ++k)
        if (depths[k] == layer)
          for (Eigen::Index r = 0; r < t.rows(); ++r) out[k][row0 + r] = ref(0) + t(r, 0);
    });
    return out;
  }

 private:
  /// One hidden layer and one output, fused per point over the hidden units.
  Eigen::MatrixXd evaluate_shallow(std::span<const Vec3> points) const {
    if (cfg_.d != 2) throw ArgumentError("RandomNetwork: pixel inputs require d = 2");
    const Eigen::ArrayXf a0 = weights_[0].row(0).transpose(), a1 = weights_[0].row(1).transpose(),
                         a2 = weights_[0].row(2).transpose(), b = biases_[0].transpose();
    const Eigen::ArrayXf w = weights_[1].col(0);
    const float bias_out = biases_[1](0);
    Eigen::ArrayXf h(a0.size());
    Eigen::MatrixXd out(static_cast<Eigen::Index>(points.size()), 1);
    for (std::size_t p = 0; p < points.size(); ++p) {
      const float x = static_cast<float>(points[p][0]), y = static_cast<float>(points[p][1]),
                  z = static_cast<float>(points[p][2]);
      h = a0 * x + a1 * y + a2 * z + b;
      detail::apply_activation(cfg_.activation, h);
      out(static_cast<Eigen::Index>(p), 0) = static_cast<double>((h * w).sum() + bias_out);
    }
    return out;
  }

  /// Calls sink(l, first_row, offsets, reference) for l = 0..L on blocks of
  /// points, where T_l = reference + offsets. The reference is T_l at the
  /// north pole in double precision; offsets are propagated in single
  /// precision, so small variations of deep fields survive rounding.
  template <class Sink>
  void run(std::span<const Vec3> points, Sink&& sink) const {
    if (cfg_.d != 2) throw ArgumentError("RandomNetwork: pixel inputs require d = 2");
    const Vec3 pole{0.0, 0.0, 1.0};
    std::vector<Eigen::RowVectorXd> ref(cfg_.depth + 1);
    ref[0] = Eigen::RowVector3d(pole[0], pole[1], pole[2]) * weights_[0].cast<double>() + biases_[0].cast<double>();
    for (int s = 1; s <= cfg_.depth; ++s) {
      const Eigen::RowVectorXd h = ref[s - 1].unaryExpr([&](double v) { return cfg_.activation(v); });
      ref[s] = h * weights_[s].cast<double>() + biases_[s].cast<double>();
    }
    const auto n = static_cast<Eigen::Index>(points.size());
    for (Eigen::Index row0 = 0; row0 < n; row0 += detail::kPixelBlock) {
      const Eigen::Index rows = std::min(detail::kPixelBlock, n - row0);
      Eigen::MatrixXf x(rows, 3);
      for (Eigen::Index r = 0; r < rows; ++r)
        for (int c = 0; c < 3; ++c) x(r, c) = static_cast<float>(points[row0 + r][c] - pole[c]);
      Eigen::MatrixXf t = x * weights_[0];
      sink(0, row0, t, ref[0]);
      for (int s = 1; s <= cfg_.depth; ++s) {
        detail::activation_delta(cfg_.activation, ref[s - 1], t);
        Eigen::MatrixXf next = t * weights_[s];
        t.swap(next);
        sink(s, row0, t, ref[s]);
      }
    }
  }

  NetworkConfig cfg_;
  std::vector<Eigen::MatrixXf> weights_;
  std::vector<Eigen::RowVectorXf> biases_;
};

// ---------------------------------------------------------------------------
// Field samples

struct FiniteWidth {
  NetworkConfig config;
};
struct Spectral {
  std::shared_ptr<const kernel::AngularSpectrum> spectrum;
};
using FieldSource = std::variant<FiniteWidth, Spectral>;

struct FieldSample {
  std::vector<double> values;
  FieldSource source;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

inline FieldSample simulate_network_field(const NetworkConfig& cfg, const SphereGrid& grid, std::uint64_t seed) {
  const RandomNetwork net(cfg, seed);
  const Eigen::MatrixXd out = net.evaluate(grid.centers());
  FieldSample f{std::vector<double>(out.col(0).data(), out.col(0).data() + out.rows()), FiniteWidth{cfg}, seed, {}};
  return f;
}

/// Samples at several depths of one depth-max(depths) network, sharing weights.
inline std::vector<FieldSample> simulate_network_fields(const NetworkConfig& cfg, const SphereGrid& grid,
                                                        std::uint64_t seed, std::span<const int> depths) {
  const RandomNetwork net(cfg, seed);
  auto values = net.evaluate_depths(grid.centers(), depths);
  std::vector<FieldSample> out;
  for (std::size_t k = 0; k < depths.size(); ++k) {
    NetworkConfig sub = cfg;
    sub.depth = depths[k];
    sub.widths.resize(depths[k]);
    out.push_back({std::move(values[k]), FiniteWidth{std::move(sub)}, seed, {}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spectral synthesis of the limit field

/// Real spherical harmonics with sum_m Y_lm(x) Y_lm(y) = (2l+1)/(4 pi) P_l(<x,y>):
/// Y_l0 = N P_l, Y_lm = sqrt2 N_lm P_l^m cos(m phi), Y_l-m = sqrt2 N_lm P_l^m sin(m phi).
class SpectralSynthesizer {
 public:
  SpectralSynthesizer(std::shared_ptr<const kernel::AngularSpectrum> spec, std::vector<Vec3> points)
      : spec_(std::move(spec)), points_(std::move(points)) {
    if (!spec_) throw ArgumentError("SpectralSynthesizer: missing spectrum");
    lmax_ = spec_->lmax;
    sd_.resize(lmax_ + 1);
    for (int l = 0; l <= lmax_; ++l)
      sd_[l] = std::sqrt(std::max(0.0, spec_->chat[l]) * 4.0 * std::numbers::pi / (2.0 * l + 1.0));
    double total = 0.0;
    for (double c : spec_->chat) total += c;
    if (total < 0.99)
      warnings_.push_back("spectral synthesis: lmax = " + std::to_string(lmax_) + " explains only " +
                          std::to_string(total) + " of the variance");
    // group points sharing a z coordinate (HEALPix rings)
    std::map<double, std::size_t> ring_of;
    ring_.resize(points_.size());
    for (std::size_t p = 0; p < points_.size(); ++p) {
      auto [it, inserted] = ring_of.try_emplace(points_[p][2], ring_z_.size());
      if (inserted) ring_z_.push_back(points_[p][2]);
      ring_[p] = it->second;
    }
    phi_.resize(points_.size());
    for (std::size_t p = 0; p < points_.size(); ++p) phi_[p] = std::atan2(points_[p][1], points_[p][0]);
    a_.resize(lmax_ + 1);
    b_.resize(lmax_ + 1);
    for (int m = 0; m <= lmax_; ++m) {
      a_[m].assign(lmax_ + 1, 0.0);
      b_[m].assign(lmax_ + 1, 0.0);
      for (int l = m + 2; l <= lmax_; ++l) {
        const double l2 = static_cast<double>(l) * l, m2 = static_cast<double>(m) * m;
        a_[m][l] = std::sqrt((4.0 * l2 - 1.0) / (l2 - m2));
        b_[m][l] = std::sqrt(((l - 1.0) * (l - 1.0) - m2) / (4.0 * (l - 1.0) * (l - 1.0) - 1.0));
      }
    }
    const std::size_t table = ring_z_.size() * static_cast<std::size_t>(lmax_ + 1) * (lmax_ + 2) / 2;
    if (table <= kMaxTable) {
      plm_.resize(table);
      for (std::size_t r = 0; r < ring_z_.size(); ++r)
        fill_legendre(ring_z_[r], std::span<double>(plm_.data() + r * tri(), tri()));
    }
  }

  const std::vector<std::string>& warnings() const noexcept { return warnings_; }
  int lmax() const noexcept { return lmax_; }

  /// Field values at the points for the coefficient draw determined by `seed`.
  std::vector<double> sample(std::uint64_t seed) const {
    const std::vector<double> coef = draw_coefficients(seed);
    std::vector<double> fc((lmax_ + 1) * ring_z_.size()), fs(fc.size());
    std::vector<double> scratch(plm_.empty() ? tri() : 0);
    for (std::size_t r = 0; r < ring_z_.size(); ++r) {
      const double* p;
      if (plm_.empty()) {
        fill_legendre(ring_z_[r], scratch);
        p = scratch.data();
      } else {
        p = plm_.data() + r * tri();
      }
      for (int m = 0; m <= lmax_; ++m) {
        double sc = 0.0, ss = 0.0;
        const double* pm = p + offset(m);
        for (int l = m; l <= lmax_; ++l) {
          const std::size_t k = coef_index(l, m);
          sc += coef[k] * pm[l - m];
          if (m > 0) ss += coef[k + 1] * pm[l - m];
        }
        fc[r * (lmax_ + 1) + m] = sc;
        fs[r * (lmax_ + 1) + m] = ss;
      }
    }
    std::vector<double> out(points_.size());
    for (std::size_t q = 0; q < points_.size(); ++q) {
      const double* c = fc.data() + ring_[q] * (lmax_ + 1);
      const double* s = fs.data() + ring_[q] * (lmax_ + 1);
      const double cp = std::cos(phi_[q]), sp = std::sin(phi_[q]);
      double cm = 1.0, sm = 0.0, acc = 0.0;
      for (int m = 1; m <= lmax_; ++m) {
        const double cn = cm * cp - sm * sp;
        sm = sm * cp + cm * sp;
        cm = cn;
        acc += c[m] * cm + s[m] * sm;
      }
      out[q] = c[0] + std::numbers::sqrt2 * acc;
    }
    return out;
  }

 private:
  static constexpr std::size_t kMaxTable = std::size_t{1} << 23;

  std::size_t tri() const { return static_cast<std::size_t>(lmax_ + 1) * (lmax_ + 2) / 2; }
  /// Start of the m-block in the packed (m, l >= m) table.
  std::size_t offset(int m) const {
    return static_cast<std::size_t>(m) * (lmax_ + 1) - static_cast<std::size_t>(m) * (m - 1) / 2;
  }
  /// Coefficient layout: for l, the cos part of m at l^2 + 2m - (m > 0), sin part right after.
  static std::size_t coef_index(int l, int m) {
    return static_cast<std::size_t>(l) * l + (m == 0 ? 0 : 2 * m - 1);
  }

  std::vector<double> draw_coefficients(std::uint64_t seed) const {
    Rng rng = substream(seed, 0);
    std::normal_distribution<double> normal;
    std::vector<double> coef(static_cast<std::size_t>(lmax_ + 1) * (lmax_ + 1));
    for (int l = 0; l <= lmax_; ++l)
      for (int k = 0; k <= 2 * l; ++k) coef[static_cast<std::size_t>(l) * l + k] = sd_[l] * normal(rng);
    return coef;
  }

  /// Normalized associated Legendre values N_lm P_l^m(z), packed by m.
  void fill_legendre(double z, std::span<double> out) const {
    const double s = std::sqrt(std::max(0.0, (1.0 - z) * (1.0 + z)));
    double pmm = std::sqrt(1.0 / (4.0 * std::numbers::pi));
    for (int m = 0; m <= lmax_; ++m) {
      if (m > 0) pmm *= std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * s;
      double* pm = out.data() + offset(m);
      pm[0] = pmm;
      if (m + 1 <= lmax_) pm[1] = std::sqrt(2.0 * m + 3.0) * z * pmm;
      for (int l = m + 2; l <= lmax_; ++l) pm[l - m] = a_[m][l] * (z * pm[l - m - 1] - b_[m][l] * pm[l - m - 2]);
    }
  }

  std::shared_ptr<const kernel::AngularSpectrum> spec_;
  std::vector<Vec3> points_;
  int lmax_ = 0;
  std::vector<double> sd_;
  std::vector<std::string> warnings_;
  std::vector<double> ring_z_;
  std::vector<std::size_t> ring_;
  std::vector<double> phi_;
  std::vector<std::vector<double>> a_, b_;
  std::vector<double> plm_;
};

/// Spherical-harmonic cutoff used for a grid: 2 nside for HEALPix, the
/// equal-pixel-count analogue for the icosphere.
inline int default_lmax(const SphereGrid& grid) {
  if (grid.scheme() == Scheme::Healpix) return 2 << grid.resolution();
  return std::max(1, static_cast<int>(2.0 * std::sqrt(static_cast<double>(grid.size()) / 12.0)));
}

inline FieldSample synthesize_gaussian_field(const SpectralSynthesizer& synth, std::shared_ptr<const kernel::AngularSpectrum> spec,
                                             std::uint64_t seed) {
  return {synth.sample(seed), Spectral{std::move(spec)}, seed, synth.warnings()};
}

inline FieldSample synthesize_gaussian_field(const kernel::AngularSpectrum& spec, const SphereGrid& grid,
                                             std::uint64_t seed) {
  auto shared = std::make_shared<const kernel::AngularSpectrum>(spec);
  const SpectralSynthesizer synth(shared, grid.centers());
  return synthesize_gaussian_field(synth, shared, seed);
}

// ---------------------------------------------------------------------------
// Extrema on the pixel graph

struct ExtremaCount {
  long long n_min = 0;
  long long n_max = 0;
  long long n_ties = 0;
};

/// Strict local extrema against all neighbors, counted only where the value
/// is at least `u`; pixels tied with a neighbor count as neither.
inline ExtremaCount count_extrema_above(std::span<const double> values, const SphereGrid& grid, double u) {
  if (values.size() != grid.size()) throw ArgumentError("count_extrema: field length does not match the grid");
  ExtremaCount c;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    bool above_all = true, below_all = true, tie = false;
    for (std::int32_t j : grid.neighbors(i)) {
      const double w = values[j];
      if (w == v) {
        tie = true;
        break;
      }
      if (w > v) above_all = false;
      else below_all = false;
    }
    if (tie) {
      ++c.n_ties;
      continue;
    }
    if (v < u) continue;
    if (above_all) ++c.n_max;
    if (below_all) ++c.n_min;
  }
  return c;
}

inline ExtremaCount count_extrema_above(const FieldSample& field, const SphereGrid& grid, double u) {
  return count_extrema_above(field.values, grid, u);
}

inline ExtremaCount count_extrema(const FieldSample& field, const SphereGrid& grid) {
  return count_extrema_above(field.values, grid, -std::numeric_limits<double>::infinity());
}

inline ExtremaCount count_extrema(std::span<const double> values, const SphereGrid& grid) {
  return count_extrema_above(values, grid, -std::numeric_limits<double>::infinity());
}

// ---------------------------------------------------------------------------
// Tangent-frame covariances of the limit field

struct MomentEstimate {
  double value = 0.0;
  double std_error = 0.0;
  double target = 0.0;
};

struct FrameCovarianceReport {
  long long samples = 0;
  double step = 0.0;
  MomentEstimate var_t;
  MomentEstimate cov_t_d1, cov_t_d2;
  MomentEstimate var_d1, var_d2;
  MomentEstimate cov_d1_d2;
  /// h^2 kappa_L''(1), the finite-difference allowance on Var(dT).
  double fd_bias = 0.0;
};

/// Orthonormal tangent vectors at p.
inline std::pair<Vec3, Vec3> tangent_frame(const Vec3& p) {
  const Vec3 ref = std::abs(p[2]) < 0.9 ? Vec3{0.0, 0.0, 1.0} : Vec3{1.0, 0.0, 0.0};
  const Vec3 e1 = normalized(cross(ref, p));
  return {e1, cross(p, e1)};
}

/// Moments of T and its central-difference derivatives along a tangent frame
/// at `pixel`, resynthesizing every spectral sample at offset points p +- h e_i.
inline FrameCovarianceReport empirical_frame_covariances(std::span<const FieldSample> samples, const SphereGrid& grid,
                                                         std::size_t pixel, const kernel::Kernel& k,
                                                         double h = 1e-3) {
  if (samples.size() < 1000) throw ArgumentError("empirical_frame_covariances: need at least 1000 samples");
  if (pixel >= grid.size()) throw ArgumentError("empirical_frame_covariances: pixel out of range");
  if (!(h > 0.0)) throw ArgumentError("empirical_frame_covariances: step must be positive");
  const auto* spectral = std::get_if<Spectral>(&samples.front().source);
  if (!spectral) throw ArgumentError("empirical_frame_covariances: samples must come from spectral synthesis");
  const auto spec = spectral->spectrum;
  for (const auto& s : samples) {
    const auto* sp = std::get_if<Spectral>(&s.source);
    if (!sp || sp->spectrum != spec) throw ArgumentError("empirical_frame_covariances: samples must share a spectrum");
  }
  const Vec3 p = grid.center(pixel);
  const auto [e1, e2] = tangent_frame(p);
  auto offset = [&](const Vec3& e, double sign) {
    const double c = std::cos(h), s = sign * std::sin(h);
    return Vec3{c * p[0] + s * e[0], c * p[1] + s * e[1], c * p[2] + s * e[2]};
  };
  const SpectralSynthesizer synth(spec, {p, offset(e1, 1.0), offset(e1, -1.0), offset(e2, 1.0), offset(e2, -1.0)});
  std::vector<RunningStats> stats(6);
  for (const auto& s : samples) {
    const std::vector<double> v = synth.sample(s.seed);
    const double t = v[0], d1 = (v[1] - v[2]) / (2.0 * h), d2 = (v[3] - v[4]) / (2.0 * h);
    stats[0].add(t * t);
    stats[1].add(t * d1);
    stats[2].add(t * d2);
    stats[3].add(d1 * d1);
    stats[4].add(d2 * d2);
    stats[5].add(d1 * d2);
  }
  const auto [dk, ddk] = kernel::depth_derivs(k, spec->depth);
  auto est = [&](int j, double target) { return MomentEstimate{stats[j].mean, stats[j].std_error(), target}; };
  FrameCovarianceReport r;
  r.samples = static_cast<long long>(samples.size());
  r.step = h;
  r.var_t = est(0, 1.0);
  r.cov_t_d1 = est(1, 0.0);
  r.cov_t_d2 = est(2, 0.0);
  r.var_d1 = est(3, dk);
  r.var_d2 = est(4, dk);
  r.cov_d1_d2 = est(5, 0.0);
  r.fd_bias = h * h * ddk;
  return r;
}

// ---------------------------------------------------------------------------
// Export

inline constexpr char kFieldMagic[4] = {'C', 'P', 'F', 'S'};
inline constexpr std::uint32_t kFieldFormatVersion = 1;

namespace detail {
template <class T>
void put_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof(T));
  for (std::size_t k = 0; k < sizeof(T); ++k) buf[k] = static_cast<unsigned char>(bits >> (8 * k));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}
template <class T>
T get_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) throw ArgumentError("read_field_binary: truncated input");
  std::uint64_t bits = 0;
  for (std::size_t k = 0; k < sizeof(T); ++k) bits |= static_cast<std::uint64_t>(buf[k]) << (8 * k);
  T v;
  std::memcpy(&v, &bits, sizeof(T));
  return v;
}
}  // namespace detail

/// Layout: "CPFS", u32 version, u32 scheme, u32 resolution, u64 seed,
/// u64 count, then count little-endian doubles.
inline void write_field_binary(std::ostream& os, const FieldSample& f, const SphereGrid& grid) {
  if (f.values.size() != grid.size()) throw ArgumentError("write_field_binary: field length does not match the grid");
  os.write(kFieldMagic, 4);
  detail::put_le<std::uint32_t>(os, kFieldFormatVersion);
  detail::put_le<std::uint32_t>(os, grid.scheme() == Scheme::Healpix ? 0u : 1u);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(grid.resolution()));
  detail::put_le<std::uint64_t>(os, f.seed);
  detail::put_le<std::uint64_t>(os, f.values.size());
  for (double v : f.values) detail::put_le<double>(os, v);
}

struct FieldFile {
  Scheme scheme = Scheme::Healpix;
  int resolution = 0;
  std::uint64_t seed = 0;
  std::vector<double> values;
};

inline FieldFile read_field_binary(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kFieldMagic, 4) != 0)
    throw ArgumentError("read_field_binary: not a field file");
  if (detail::get_le<std::uint32_t>(is) != kFieldFormatVersion)
    throw ArgumentError("read_field_binary: unsupported version");
  FieldFile f;
  f.scheme = detail::get_le<std::uint32_t>(is) == 0 ? Scheme::Healpix : Scheme::Icosphere;
  f.resolution = static_cast<int>(detail::get_le<std::uint32_t>(is));
  f.seed = detail::get_le<std::uint64_t>(is);
  const auto n = detail::get_le<std::uint64_t>(is);
  f.values.resize(n);
  for (auto& v : f.values) v = detail::get_le<double>(is);
  return f;
}

/// "pixel,x,y,z,value" with round-trip precision.
inline void write_field_csv(std::ostream& os, const FieldSample& f, const SphereGrid& grid) {
  if (f.values.size() != grid.size()) throw ArgumentError("write_field_csv: field length does not match the grid");
  const auto old = os.precision(17);
  os << "pixel,x,y,z,value\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vec3& c = grid.center(i);
    os << i << ',' << c[0] << ',' << c[1] << ',' << c[2] << ',' << f.values[i] << '\n';
  }
  os.precision(old);
}

}  // namespace critpoints::sphere

#endif  // CRITPOINTS_SPHERE_HPP
