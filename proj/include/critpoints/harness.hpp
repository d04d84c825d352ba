#ifndef CRITPOINTS_HARNESS_HPP
#define CRITPOINTS_HARNESS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "critpoints/errors.hpp"
#include "critpoints/goi.hpp"
#include "critpoints/kacrice.hpp"
#include "critpoints/kernel.hpp"
#include "critpoints/rng.hpp"
#include "critpoints/sphere.hpp"

#ifndef CRITPOINTS_VERSION
#define CRITPOINTS_VERSION "0.0.0"
#endif

namespace critpoints::harness {

/// Invalid experiment configuration (CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::string version() { return CRITPOINTS_VERSION; }

// ---------------------------------------------------------------------------
// Configuration

struct KernelSpec {
  std::string activation = "gaussian";
  double a2 = 1.0;
  double lambda_b = 0.0;
  std::vector<double> table_x, table_y;

  Activation make() const {
    try {
      if (activation == "gaussian") return Activation::gaussian_a2(a2, lambda_b);
      if (activation == "relu") return Activation::relu(lambda_b);
      if (activation == "tanh") return Activation::tanh(lambda_b);
      if (activation == "table") return Activation::table(table_x, table_y, lambda_b);
    } catch (const ArgumentError& e) {
      throw ConfigError(std::string("kernel: ") + e.what());
    }
    throw ConfigError("kernel: unknown activation '" + activation + "' (expected gaussian, relu, tanh or table)");
  }

  /// Short identifier used in CSV rows.
  std::string id() const {
    std::ostringstream os;
    os.precision(10);
    os << activation;
    if (activation == "gaussian") os << "_a2=" << a2;
    if (lambda_b != 0.0) os << "_lb=" << lambda_b;
    return os.str();
  }
};

struct ExperimentConfig {
  std::string name = "fig-critical";
  KernelSpec kernel;
  std::vector<int> depths{1, 5, 10, 20};
  std::vector<int> resolutions{6};
  int replicas = 200;
  long long mc_samples = 100000;
  std::uint64_t seed = 20240601;
  std::string output_dir = "out";
  /// Hidden-layer width of simulated networks.
  int width = 500;
  /// Spherical-harmonic cutoff; 0 selects the experiment default.
  int lmax = 0;
  std::vector<double> thresholds;
  /// Table columns for table-relu.
  std::vector<KernelSpec> activations;

  void validate() const {
    if (replicas < 1) throw ConfigError("replicas must be >= 1");
    if (mc_samples < 1000) throw ConfigError("mc_samples must be >= 1000");
    if (width < 1) throw ConfigError("width must be >= 1");
    if (lmax < 0) throw ConfigError("lmax must be >= 0");
    for (int L : depths)
      if (L < 1) throw ConfigError("depths must be >= 1");
    for (int r : resolutions)
      if (r < 0 || r > sphere::kMaxHealpixOrder) throw ConfigError("resolutions must lie in [0, 13]");
    kernel.make();
    for (const auto& a : activations) a.make();
  }
};

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"fig-critical", "fig-monte", "fig-variance", "table-relu",
                                              "threshold-sweep"};
  return names;
}

/// Defaults for each experiment; `paper_scale` restores the published sizes.
inline ExperimentConfig default_config(const std::string& name, bool paper_scale = false) {
  ExperimentConfig c;
  c.name = name;
  const int replicas = paper_scale ? 1000 : 200;
  const int width = paper_scale ? 1000 : 500;
  if (name == "fig-critical") {
    c.depths = paper_scale ? std::vector<int>{1, 5, 10, 20, 30, 40, 50, 60} : std::vector<int>{1, 5, 10, 20};
    c.resolutions = {6};
    c.replicas = replicas;
    c.width = width;
    c.mc_samples = paper_scale ? 1000000 : 100000;
  } else if (name == "fig-monte") {
    c.depths = {};
    c.resolutions = {};
    c.mc_samples = paper_scale ? 10000000 : 1000000;
  } else if (name == "fig-variance") {
    c.kernel.a2 = 9.0;
    c.depths = {1, 5, 10, 20, 30, 40, 50, 60};
    c.resolutions = {};
    c.lmax = 1536;
  } else if (name == "table-relu") {
    c.depths = {1};
    c.resolutions = {3, 4, 5, 6, 7, 8, 9};
    c.replicas = replicas;
    c.width = width;
    KernelSpec g;
    g.a2 = 1.0 + std::numbers::sqrt2;
    KernelSpec r;
    r.activation = "relu";
    KernelSpec t;
    t.activation = "tanh";
    c.activations = {g, r, t};
  } else if (name == "threshold-sweep") {
    c.depths = {3};
    c.resolutions = {6};
    c.replicas = replicas;
    c.thresholds = {-12.0, -2.0, -1.0, 0.0, 1.0, 2.0};
  } else {
    throw ConfigError("unknown experiment '" + name + "'");
  }
  return c;
}

inline nlohmann::json to_json(const KernelSpec& k) {
  nlohmann::json j{{"activation", k.activation}, {"lambda_b", k.lambda_b}};
  if (k.activation == "gaussian") j["a2"] = k.a2;
  if (k.activation == "table") {
    j["table_x"] = k.table_x;
    j["table_y"] = k.table_y;
  }
  return j;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json acts = nlohmann::json::array();
  for (const auto& a : c.activations) acts.push_back(to_json(a));
  return {{"name", c.name},
          {"kernel", to_json(c.kernel)},
          {"depths", c.depths},
          {"resolutions", c.resolutions},
          {"replicas", c.replicas},
          {"mc_samples", c.mc_samples},
          {"seed", c.seed},
          {"output_dir", c.output_dir},
          {"width", c.width},
          {"lmax", c.lmax},
          {"thresholds", c.thresholds},
          {"activations", acts}};
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

inline KernelSpec kernel_from_json(const nlohmann::json& j) {
  reject_unknown(j, {"activation", "a2", "lambda_b", "table_x", "table_y"}, "kernel");
  KernelSpec k;
  read(j, "activation", k.activation);
  read(j, "a2", k.a2);
  read(j, "lambda_b", k.lambda_b);
  read(j, "table_x", k.table_x);
  read(j, "table_y", k.table_y);
  return k;
}

}  // namespace detail

/// Overlays the keys present in `j` on `base`.
inline ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig base) {
  detail::reject_unknown(j,
                         {"name", "kernel", "depths", "resolutions", "replicas", "mc_samples", "seed", "output_dir",
                          "width", "lmax", "thresholds", "activations"},
                         "config");
  detail::read(j, "name", base.name);
  if (j.contains("kernel")) base.kernel = detail::kernel_from_json(j.at("kernel"));
  detail::read(j, "depths", base.depths);
  detail::read(j, "resolutions", base.resolutions);
  detail::read(j, "replicas", base.replicas);
  detail::read(j, "mc_samples", base.mc_samples);
  detail::read(j, "seed", base.seed);
  detail::read(j, "output_dir", base.output_dir);
  detail::read(j, "width", base.width);
  detail::read(j, "lmax", base.lmax);
  detail::read(j, "thresholds", base.thresholds);
  if (j.contains("activations")) {
    if (!j.at("activations").is_array()) throw ConfigError("config key 'activations' must be an array");
    base.activations.clear();
    for (const auto& a : j.at("activations")) base.activations.push_back(detail::kernel_from_json(a));
  }
  return base;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, const ExperimentConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return config_from_json(j, base);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of everything that affects results (the output directory does not).
inline std::string config_hash(const ExperimentConfig& c) {
  nlohmann::json j = to_json(c);
  j.erase("output_dir");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

// ---------------------------------------------------------------------------
// Reports

struct Report {
  std::string name;
  std::string header;
  std::vector<std::string> rows;
  std::vector<std::string> warnings;

  std::string csv() const {
    std::string out = header + "\n";
    for (const auto& r : rows) out += r + "\n";
    return out;
  }
};

namespace detail {

inline std::string fmt(double v) { return kacrice::format_double(v); }

class RowWriter {
 public:
  RowWriter(const ExperimentConfig& c, const std::string& columns)
      : prefix_(version() + "," + config_hash(c) + "," + std::to_string(c.seed)) {
    report_.name = c.name;
    report_.header = "version,config_hash,seed," + columns;
  }
  template <class... Fields>
  void row(const Fields&... f) {
    std::ostringstream os;
    os << prefix_;
    ((os << ',' << f), ...);
    report_.rows.push_back(os.str());
  }
  Report& report() { return report_; }

 private:
  std::string prefix_;
  Report report_;
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

struct CountStats {
  RunningStats min, max;
};

}  // namespace detail

/// Writes <output_dir>/<name>.csv and <output_dir>/<name>.config.json.
inline std::filesystem::path write_report(const Report& r, const ExperimentConfig& c) {
  const std::filesystem::path dir(c.output_dir);
  std::filesystem::create_directories(dir);
  const auto csv_path = dir / (r.name + ".csv");
  std::ofstream(csv_path, std::ios::binary) << r.csv();
  std::ofstream(dir / (r.name + ".config.json"), std::ios::binary) << to_json(c).dump(2) << "\n";
  return csv_path;
}

// ---------------------------------------------------------------------------
// Experiments

/// Minima and maxima of finite-width networks against the Kac-Rice and
/// asymptotic predictions, per depth.
inline Report run_fig_critical(const ExperimentConfig& c) {
  c.validate();
  detail::require(c.kernel.activation == "gaussian", "fig-critical requires a Gaussian activation");
  detail::require(!c.depths.empty(), "fig-critical requires depths");
  detail::require(!c.resolutions.empty(), "fig-critical requires a resolution");
  const Activation act = c.kernel.make();
  const kernel::Kernel k = kernel::make_kernel(act);
  const std::string regime = kernel::to_string(kernel::classify_regime(k).tag);
  std::vector<int> depths = c.depths;
  std::sort(depths.begin(), depths.end());
  depths.erase(std::unique(depths.begin(), depths.end()), depths.end());
  const int r = c.resolutions.front();
  const sphere::SphereGrid grid = sphere::build_grid(sphere::Scheme::Healpix, r);
  const auto net_cfg = sphere::NetworkConfig::uniform(depths.back(), c.width, act);

  std::vector<std::vector<sphere::ExtremaCount>> counts(c.replicas);
  const std::uint64_t sim_seed = derive_seed(c.seed, 1);
  parallel_for(c.replicas, [&](std::size_t rep) {
    const auto fields = sphere::simulate_network_fields(net_cfg, grid, derive_seed(sim_seed, rep), depths);
    for (const auto& f : fields) counts[rep].push_back(sphere::count_extrema(f, grid));
  });

  detail::RowWriter w(c, "kernel_id,regime,resolution,L,quantity,value,stderr");
  const std::uint64_t theory_seed = derive_seed(c.seed, 2);
  for (std::size_t di = 0; di < depths.size(); ++di) {
    const int L = depths[di];
    detail::CountStats s;
    for (const auto& rep : counts) {
      s.min.add(static_cast<double>(rep[di].n_min));
      s.max.add(static_cast<double>(rep[di].n_max));
    }
    const auto theory = kacrice::expected_crit_counts(k, L, 2, c.mc_samples, derive_seed(theory_seed, L));
    const auto asymptotic = kacrice::asymptotic_crit_counts(k, L, 2, c.mc_samples, derive_seed(c.seed, 3));
    const std::string id = c.kernel.id();
    w.row(id, regime, r, L, "sim_min", detail::fmt(s.min.mean), detail::fmt(s.min.std_error()));
    w.row(id, regime, r, L, "sim_max", detail::fmt(s.max.mean), detail::fmt(s.max.std_error()));
    w.row(id, regime, r, L, "theory_min", detail::fmt(theory[0].value), detail::fmt(theory[0].std_error));
    w.row(id, regime, r, L, "theory_max", detail::fmt(theory[2].value), detail::fmt(theory[2].std_error));
    w.row(id, regime, r, L, "asymptotic_min", detail::fmt(asymptotic[0].value), detail::fmt(asymptotic[0].std_error));
    w.row(id, regime, r, L, "asymptotic_max", detail::fmt(asymptotic[2].value), detail::fmt(asymptotic[2].std_error));
  }
  return w.report();
}

/// Log-spaced checkpoints from 1000 to n (at least `count` of them, n included).
inline std::vector<long long> log_checkpoints(long long n, int count = 24) {
  std::vector<long long> pts;
  const double lo = std::log(1000.0), hi = std::log(static_cast<double>(n));
  for (int k = 0; k < count; ++k) {
    const double t = count == 1 ? hi : lo + (hi - lo) * k / (count - 1);
    pts.push_back(std::clamp(static_cast<long long>(std::llround(std::exp(t))), 1LL, n));
  }
  for (long long p = 100000; p < n; p *= 10) pts.push_back(p);
  pts.push_back(n);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

/// Running estimate of the constant A_0 on S^2 as samples accumulate.
inline Report run_fig_monte(const ExperimentConfig& c) {
  c.validate();
  const int d = 2;
  const goi::GOIParams p{d, 0.5};
  const double factor = goi::change_of_variables_factor(d) * kacrice::base_prefactor(d);
  const auto checkpoints = log_checkpoints(c.mc_samples);
  Rng rng = substream(c.seed, 0);
  RunningStats s;
  detail::RowWriter w(c, "d,i,n,value,stderr");
  std::size_t next = 0;
  for (long long n = 1; n <= c.mc_samples; ++n) {
    double z[2];
    goi::draw_theta_vector(p, rng, z);
    std::sort(z, z + d);
    double prod;
    const int idx = goi::shifted_index(z, 0.0, prod);
    s.add(idx == 0 ? factor * prod * goi::vandermonde(z) : 0.0);
    if (next < checkpoints.size() && n == checkpoints[next]) {
      w.row(d, 0, n, detail::fmt(s.mean), detail::fmt(s.std_error()));
      ++next;
    }
  }
  return w.report();
}

/// Fraction of the variance carried by multipoles up to lmax, per depth.
inline Report run_fig_variance(const ExperimentConfig& c) {
  c.validate();
  detail::require(!c.depths.empty(), "fig-variance requires depths");
  const int lmax = c.lmax > 0 ? c.lmax : 1536;
  const kernel::Kernel k = kernel::make_kernel(c.kernel.make());
  std::vector<double> v(c.depths.size());
  parallel_for(c.depths.size(), [&](std::size_t i) {
    v[i] = kernel::variance_explained(kernel::angular_spectrum(k, c.depths[i], lmax, std::max(64, 4 * lmax)), lmax);
  });
  detail::RowWriter w(c, "kernel_id,L,lmax,variance_explained");
  for (std::size_t i = 0; i < c.depths.size(); ++i) w.row(c.kernel.id(), c.depths[i], lmax, detail::fmt(v[i]));
  return w.report();
}

/// Mean minima and maxima of shallow networks per activation and resolution.
/// Each replica keeps its network across resolutions.
inline Report run_table_relu(const ExperimentConfig& c) {
  c.validate();
  detail::require(!c.resolutions.empty(), "table-relu requires resolutions");
  detail::require(!c.activations.empty(), "table-relu requires activations");
  detail::RowWriter w(c, "activation,resolution,quantity,mean,stderr,replicas");
  for (std::size_t a = 0; a < c.activations.size(); ++a) {
    const auto net_cfg = sphere::NetworkConfig::uniform(1, c.width, c.activations[a].make());
    const std::uint64_t act_seed = derive_seed(c.seed, a);
    for (int r : c.resolutions) {
      const sphere::SphereGrid grid = sphere::build_grid(sphere::Scheme::Healpix, r);
      std::vector<sphere::ExtremaCount> counts(c.replicas);
      parallel_for(c.replicas, [&](std::size_t rep) {
        counts[rep] = sphere::count_extrema(sphere::simulate_network_field(net_cfg, grid, derive_seed(act_seed, rep)), grid);
      });
      detail::CountStats s;
      for (const auto& e : counts) {
        s.min.add(static_cast<double>(e.n_min));
        s.max.add(static_cast<double>(e.n_max));
      }
      const std::string id = c.activations[a].id();
      w.row(id, r, "min", detail::fmt(s.min.mean), detail::fmt(s.min.std_error()), c.replicas);
      w.row(id, r, "max", detail::fmt(s.max.mean), detail::fmt(s.max.std_error()), c.replicas);
    }
  }
  return w.report();
}

/// Thresholded minima and maxima: Kac-Rice theory against spectral limit fields.
inline Report run_threshold_sweep(const ExperimentConfig& c) {
  c.validate();
  detail::require(!c.depths.empty(), "threshold-sweep requires a depth");
  detail::require(!c.resolutions.empty(), "threshold-sweep requires a resolution");
  detail::require(!c.thresholds.empty(), "threshold-sweep requires thresholds");
  const int L = c.depths.front();
  const kernel::Kernel k = kernel::make_kernel(c.kernel.make());
  const sphere::SphereGrid grid = sphere::build_grid(sphere::Scheme::Healpix, c.resolutions.front());
  const int lmax = c.lmax > 0 ? c.lmax : sphere::default_lmax(grid);
  auto spec = std::make_shared<const kernel::AngularSpectrum>(kernel::angular_spectrum(k, L, lmax, std::max(64, 4 * lmax)));
  const sphere::SpectralSynthesizer synth(spec, grid.centers());
  std::vector<double> us = c.thresholds;
  std::sort(us.begin(), us.end());
  us.erase(std::unique(us.begin(), us.end()), us.end());

  std::vector<std::vector<sphere::ExtremaCount>> counts(c.replicas);
  const std::uint64_t sim_seed = derive_seed(c.seed, 1);
  parallel_for(c.replicas, [&](std::size_t rep) {
    const std::vector<double> v = synth.sample(derive_seed(sim_seed, rep));
    for (double u : us) counts[rep].push_back(sphere::count_extrema_above(v, grid, u));
  });

  detail::RowWriter w(c, "kernel_id,L,u,i,source,value,stderr");
  const std::string id = c.kernel.id();
  const auto plain = kacrice::expected_crit_counts(k, L, 2, c.mc_samples, derive_seed(c.seed, 2));
  w.row(id, L, "-inf", 0, "theory", detail::fmt(plain[0].value), detail::fmt(plain[0].std_error));
  w.row(id, L, "-inf", 2, "theory", detail::fmt(plain[2].value), detail::fmt(plain[2].std_error));
  for (std::size_t ui = 0; ui < us.size(); ++ui) {
    const double u = us[ui];
    const auto theory = kacrice::expected_crit_counts_above(k, L, 2, u, c.mc_samples, derive_seed(c.seed, 3 + ui));
    detail::CountStats s;
    for (const auto& rep : counts) {
      s.min.add(static_cast<double>(rep[ui].n_min));
      s.max.add(static_cast<double>(rep[ui].n_max));
    }
    w.row(id, L, detail::fmt(u), 0, "theory", detail::fmt(theory[0].value), detail::fmt(theory[0].std_error));
    w.row(id, L, detail::fmt(u), 0, "simulation", detail::fmt(s.min.mean), detail::fmt(s.min.std_error()));
    w.row(id, L, detail::fmt(u), 2, "theory", detail::fmt(theory[2].value), detail::fmt(theory[2].std_error));
    w.row(id, L, detail::fmt(u), 2, "simulation", detail::fmt(s.max.mean), detail::fmt(s.max.std_error()));
  }
  w.report().warnings = synth.warnings();
  return w.report();
}

inline Report run_experiment(const ExperimentConfig& c) {
  if (c.name == "fig-critical") return run_fig_critical(c);
  if (c.name == "fig-monte") return run_fig_monte(c);
  if (c.name == "fig-variance") return run_fig_variance(c);
  if (c.name == "table-relu") return run_table_relu(c);
  if (c.name == "threshold-sweep") return run_threshold_sweep(c);
  throw ConfigError("unknown experiment '" + c.name + "'");
}

}  // namespace critpoints::harness

#endif  // CRITPOINTS_HARNESS_HPP
