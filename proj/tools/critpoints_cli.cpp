#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "critpoints/goi.hpp"
#include "critpoints/harness.hpp"
#include "critpoints/kacrice.hpp"
#include "critpoints/kernel.hpp"

using namespace critpoints;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct Globals {
  std::uint64_t seed = 20240601;
  int threads = 0;
  std::string out = "out";
  bool paper_scale = false;
  long long mc_samples = 0;
  std::string config;
};

struct KernelArgs {
  std::string activation = "gaussian";
  double a2 = 1.0;
  double lambda_b = 0.0;

  harness::KernelSpec spec() const {
    harness::KernelSpec k;
    k.activation = activation;
    k.a2 = a2;
    k.lambda_b = lambda_b;
    return k;
  }
};

void add_kernel_options(CLI::App* cmd, KernelArgs& k) {
  cmd->add_option("--activation", k.activation, "gaussian, relu or tanh")->capture_default_str();
  cmd->add_option("--a2", k.a2, "Gaussian activation parameter a^2")->capture_default_str();
  cmd->add_option("--lambda-b", k.lambda_b, "bias variance")->capture_default_str();
}

nlohmann::json finite_or_string(double v) {
  if (std::isfinite(v)) return v;
  return kacrice::format_double(v);
}

void kernel_info(const KernelArgs& args) {
  const kernel::Kernel k = kernel::make_kernel(args.spec().make());
  const kernel::Regime regime = kernel::classify_regime(k);
  const char* cri = k.cri().kind == kernel::Cri::Kind::GreaterThanTwo ? "greater-than-2"
                    : k.cri().kind == kernel::Cri::Kind::Known     ? "known"
                                                                    : "unknown";
  const char* source = k.derivative_source() == kernel::DerivativeSource::ClosedForm ? "closed-form"
                       : k.derivative_source() == kernel::DerivativeSource::Series   ? "series"
                       : k.derivative_source() == kernel::DerivativeSource::Divergent ? "divergent"
                                                                                      : "not-converged";
  nlohmann::json coeffs = nlohmann::json::array();
  for (int q = 0; q <= std::min(k.terms(), 8); ++q) coeffs.push_back(k.coeffs()[q]);
  nlohmann::json j{{"activation", k.activation().name()},
                   {"kernel_id", args.spec().id()},
                   {"lambda_b", k.lambda_b()},
                   {"lambda_w", k.lambda_w()},
                   {"kappa_prime_1", finite_or_string(k.dkappa1())},
                   {"kappa_second_1", finite_or_string(k.ddkappa1())},
                   {"derivative_source", source},
                   {"cri", cri},
                   {"regime", kernel::to_string(regime.tag)},
                   {"series_terms", k.terms()},
                   {"leading_coefficients", coeffs}};
  if (k.cri().kind == kernel::Cri::Kind::Known) j["cri_value"] = k.cri().value;
  std::cout << j.dump(2) << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"Expected critical points of random neural networks on spheres"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "master RNG seed");
  app.add_option("--threads", g.threads, "worker threads (0 = all cores)");
  app.add_option("--out", g.out, "output directory for experiment CSVs");
  app.add_flag("--paper-scale", g.paper_scale, "use the full published experiment sizes");
  app.add_option("--mc-samples", g.mc_samples, "Monte Carlo samples for GOI expectations");
  app.add_option("--config", g.config, "JSON experiment config");
  app.set_version_flag("--version", harness::version());

  KernelArgs kargs;
  auto* info = app.add_subcommand("kernel-info", "kernel derivatives, CRI and regime as JSON");
  add_kernel_options(info, kargs);
  auto* regime = app.add_subcommand("regime", "print the depth regime of a kernel");
  add_kernel_options(regime, kargs);

  int depth = 1, dim = 2;
  std::optional<int> index;
  std::optional<double> threshold;
  bool asymptotic = false;
  auto* predict = app.add_subcommand("predict", "Kac-Rice expected critical point counts as CSV");
  add_kernel_options(predict, kargs);
  predict->add_option("--depth,-L", depth, "network depth L")->capture_default_str();
  predict->add_option("--dim,-d", dim, "sphere dimension d")->capture_default_str();
  predict->add_option("--index,-i", index, "critical point index (default: all)");
  predict->add_option("--threshold,-u", threshold, "count only points above this level");
  predict->add_flag("--asymptotic", asymptotic, "leading-order large-depth formula instead");

  double c_param = 0.5, shift = 0.0;
  bool use_oracle = false;
  auto* goi_cmd = app.add_subcommand("goi-estimate", "GOI expectation of the shifted absolute determinant");
  goi_cmd->add_option("--dim,-d", dim, "matrix dimension")->capture_default_str();
  goi_cmd->add_option("--c", c_param, "GOI covariance parameter")->capture_default_str();
  goi_cmd->add_option("--index,-i", index, "eigenvalue index event (default: all)");
  goi_cmd->add_option("--shift,-s", shift, "spectral shift")->capture_default_str();
  goi_cmd->add_flag("--oracle", use_oracle, "use sampled matrices and their eigenvalues");

  std::vector<CLI::App*> experiments;
  for (const auto& name : harness::experiment_names())
    experiments.push_back(app.add_subcommand(name, "run the " + name + " experiment"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  set_thread_count(g.threads);
  const long long mc = g.mc_samples > 0 ? g.mc_samples : 100000;

  if (info->parsed()) {
    kernel_info(kargs);
  } else if (regime->parsed()) {
    std::cout << kernel::to_string(kernel::classify_regime(kernel::make_kernel(kargs.spec().make())).tag) << "\n";
  } else if (predict->parsed()) {
    const kernel::Kernel k = kernel::make_kernel(kargs.spec().make());
    std::vector<kacrice::CritCountPrediction> preds;
    if (asymptotic) {
      if (threshold) throw harness::ConfigError("--asymptotic does not take a threshold");
      preds = kacrice::asymptotic_crit_counts(k, depth, dim, mc, g.seed);
    } else if (threshold) {
      preds = kacrice::expected_crit_counts_above(k, depth, dim, *threshold, mc, g.seed);
    } else {
      preds = kacrice::expected_crit_counts(k, depth, dim, mc, g.seed);
    }
    const kernel::RegimeTag tag = kernel::classify_regime(k).tag;
    std::cout << kacrice::prediction_csv_header() << "\n";
    for (const auto& p : preds)
      if (!index || p.index == *index) std::cout << kacrice::prediction_csv_row(kargs.spec().id(), p, tag) << "\n";
    if (index && (*index < 0 || *index > dim)) throw ArgumentError("--index must lie in [0, d]");
  } else if (goi_cmd->parsed()) {
    const goi::GOIParams p{dim, c_param};
    const auto est = use_oracle ? goi::goi_expectation_oracle_all(p, shift, mc, g.seed)
                                : goi::goi_expectation_mc_all(p, shift, mc, g.seed);
    if (index && (*index < 0 || *index > dim)) throw ArgumentError("--index must lie in [0, d]");
    std::cout << "d,c,i,shift,mean,stderr,n\n";
    for (int i = 0; i <= dim; ++i)
      if (!index || i == *index)
        std::cout << dim << ',' << kacrice::format_double(c_param) << ',' << i << ','
                  << kacrice::format_double(shift) << ',' << kacrice::format_double(est[i].mean) << ','
                  << kacrice::format_double(est[i].std_error) << ',' << est[i].n << "\n";
  } else {
    for (auto* cmd : experiments) {
      if (!cmd->parsed()) continue;
      harness::ExperimentConfig cfg = harness::default_config(cmd->get_name(), g.paper_scale);
      if (!g.config.empty()) cfg = harness::load_config(g.config, cfg);
      cfg.name = cmd->get_name();
      if (app.count("--seed")) cfg.seed = g.seed;
      if (app.count("--out")) cfg.output_dir = g.out;
      if (g.mc_samples > 0) cfg.mc_samples = g.mc_samples;
      const harness::Report report = harness::run_experiment(cfg);
      for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << harness::write_report(report, cfg).string() << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ArgumentError& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParameterError& e) {
    std::cerr << "parameter error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const RegimeError& e) {
    std::cerr << "regime error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UnsupportedKernelError& e) {
    std::cerr << "unsupported kernel: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DiagnosticError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DegeneracyError& e) {
    std::cerr << "degenerate kernel: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
}
