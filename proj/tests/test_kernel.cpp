#include "catch_amalgamated.hpp"

#include <cmath>
#include <numbers>

#include "critpoints/kernel.hpp"
#include "oracles.hpp"

using namespace critpoints;
using namespace critpoints::kernel;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const double kSparseA2 = 1.0 + std::numbers::sqrt2;

std::vector<Activation> supported_activations(double lb) {
  return {Activation::gaussian_a2(1.0, lb), Activation::gaussian_a2(kSparseA2, lb), Activation::gaussian_a2(9.0, lb),
          Activation::relu(lb), Activation::tanh(lb)};
}

Activation identity_table() { return Activation::table({-1.0, 1.0}, {-1.0, 1.0}); }

}  // namespace

TEST_CASE("Activation validation", "[kernel]") {
  CHECK_THROWS_AS(Activation::gaussian(0.0), ArgumentError);
  CHECK_THROWS_AS(Activation::gaussian(-1.0), ArgumentError);
  CHECK_THROWS_AS(Activation::relu(1.0), ArgumentError);
  CHECK_THROWS_AS(Activation::relu(-0.1), ArgumentError);
  CHECK_THROWS_AS(Activation::table({0.0, 0.0}, {1.0, 2.0}), ArgumentError);
  CHECK_THROWS_AS(Activation::table({0.0}, {1.0}), ArgumentError);
  CHECK_NOTHROW(Activation::relu(0.0));
}

TEST_CASE("Table activation interpolates and extrapolates linearly", "[kernel]") {
  const Activation t = Activation::table({0.0, 1.0, 2.0}, {0.0, 2.0, 3.0});
  CHECK(t(0.5) == 1.0);
  CHECK(t(1.5) == 2.5);
  CHECK(t(3.0) == 4.0);
  CHECK(t(-1.0) == -2.0);
}

TEST_CASE("Hermite coefficients of the Gaussian activation match the exact series", "[kernel]") {
  for (double a2 : {1.0, kSparseA2, 9.0}) {
    const std::vector<double> b = hermite_coefficients(Activation::gaussian_a2(a2), 60);
    for (int q = 0; q <= 60; ++q) {
      const double expected = q % 2 == 0 ? oracle::gaussian_even_coeff(a2, q / 2) : 0.0;
      CHECK_THAT(b[q], WithinAbs(expected, 1e-11));
    }
  }
}

TEST_CASE("Gaussian a=1 coefficients sum to one", "[kernel]") {
  const std::vector<double> b = hermite_coefficients(Activation::gaussian(1.0), 200);
  double s = 0.0, s1 = 0.0;
  for (std::size_t q = 0; q < b.size(); ++q) {
    s += b[q];
    s1 += q * b[q];
  }
  CHECK_THAT(s, WithinAbs(1.0, 1e-10));
  const Kernel k = make_kernel(Activation::gaussian(1.0));
  const double fd = oracle::richardson4(
      [&](double h) { return oracle::left_first_derivative([&](double u) { return kappa_eval(k, u); }, 1.0, h); },
      1e-3);
  CHECK_THAT(s1, WithinAbs(fd, 1e-8));
  CHECK_THAT(s1, WithinAbs(1.0 / 3.0, 1e-8));
}

TEST_CASE("ReLU odd coefficients beyond the first vanish", "[kernel]") {
  const std::vector<double> b = hermite_coefficients(Activation::relu(), 40);
  for (int q = 3; q <= 40; q += 2) CHECK(std::abs(b[q]) < 1e-14);
  // even coefficients against adaptive quadrature of E[ReLU(Z) h_q(Z)]
  for (int q : {0, 1, 2, 4, 6, 10, 16}) {
    const double c = oracle::integrate([q](double x) { return x * oracle::hermite_normalized(q, x) * oracle::phi(x); },
                                       0.0, 40.0);
    CHECK_THAT(b[q], WithinAbs(2.0 * c * c, 1e-12));
  }
}

TEST_CASE("Hermite coefficient arguments are validated", "[kernel]") {
  CHECK_THROWS_AS(hermite_coefficients(Activation::relu(), 1), ArgumentError);
}

TEST_CASE("Non-square-integrable activation is diagnosed", "[kernel]") {
  auto grows = [](double x) { return std::exp(x * x / 3.0); };
  CHECK_THROWS_AS(project_hermite(grows, {}, 10), DiagnosticError);
  auto tame = [](double x) { return std::exp(x * x / 5.0); };
  CHECK_NOTHROW(project_hermite(tame, {}, 10));
}

TEST_CASE("kappa(1) = 1 for all activations and bias variances", "[kernel]") {
  for (double lb : {0.0, 0.1})
    for (const Activation& act : supported_activations(lb)) {
      const Kernel k = make_kernel(act);
      INFO(act.name() << " lb=" << lb);
      CHECK_THAT(kappa_eval(k, 1.0), WithinAbs(1.0, 1e-9));
      double s = 0.0;
      for (double b : k.coeffs()) {
        CHECK(b >= 0.0);
        s += b;
      }
      CHECK_THAT(s, WithinAbs(1.0, act.is<ReLU>() ? 1e-4 : 1e-9));
    }
}

TEST_CASE("Closed-form kernels at u = 0", "[kernel]") {
  CHECK_THAT(kappa_eval(make_kernel(Activation::relu()), 0.0), WithinAbs(1.0 / std::numbers::pi, 1e-12));
  CHECK_THAT(kappa_eval(make_kernel(Activation::gaussian(1.0)), 0.0), WithinAbs(std::sqrt(3.0) / 2.0, 1e-12));
}

TEST_CASE("Kernels agree with two-dimensional quadrature on a 41-point grid", "[kernel]") {
  struct Case {
    Activation act;
    std::function<double(double)> sigma;
    std::vector<double> kinks;
  };
  std::vector<Case> cases;
  for (double lb : {0.0, 0.1}) {
    cases.push_back({Activation::gaussian(1.0, lb), [](double x) { return std::exp(-0.5 * x * x); }, {}});
    cases.push_back({Activation::gaussian_a2(9.0, lb), [](double x) { return std::exp(-4.5 * x * x); }, {}});
    cases.push_back({Activation::relu(lb), [](double x) { return std::max(x, 0.0); }, {0.0}});
    cases.push_back({Activation::tanh(lb), [](double x) { return std::tanh(x); }, {}});
  }
  for (const Case& c : cases) {
    const Kernel k = make_kernel(c.act);
    for (int j = 0; j <= 40; ++j) {
      const double u = -1.0 + j / 20.0;
      INFO(c.act.name() << " lb=" << c.act.lambda_b() << " u=" << u);
      CHECK_THAT(kappa_eval(k, u), WithinAbs(oracle::kappa_2d(c.sigma, c.act.lambda_b(), u, c.kinks), 1e-8));
    }
  }
}

TEST_CASE("kappa_eval rejects arguments outside [-1, 1]", "[kernel]") {
  const Kernel k = make_kernel(Activation::gaussian(1.0));
  CHECK_THROWS_AS(kappa_eval(k, 1.0 + 1e-12), ArgumentError);
  CHECK_THROWS_AS(kappa_eval(k, -2.0), ArgumentError);
  CHECK_THROWS_AS(kappa_L_eval(k, 0, 0.5), ArgumentError);
}

TEST_CASE("Derivatives at one", "[kernel]") {
  const auto d_sparse = kappa_derivs_at_one(make_kernel(Activation::gaussian_a2(kSparseA2)));
  CHECK_THAT(d_sparse.first, WithinAbs(1.0, 1e-8));

  const Kernel high = make_kernel(Activation::gaussian_a2(9.0));
  const auto d_high = kappa_derivs_at_one(high);
  CHECK_THAT(d_high.first, WithinAbs(81.0 / 19.0, 1e-8));
  auto f = [&](double u) { return kappa_eval(high, u); };
  const double fd1 = oracle::richardson4([&](double h) { return oracle::left_first_derivative(f, 1.0, h); }, 1e-3);
  const double fd2 = oracle::richardson4([&](double h) { return oracle::left_second_derivative(f, 1.0, h); }, 1e-3);
  CHECK_THAT(d_high.first, WithinRel(fd1, 1e-8));
  CHECK_THAT(d_high.second, WithinRel(fd2, 1e-6));

  // the closed forms agree with the Hermite sums
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t q = 0; q < high.coeffs().size(); ++q) {
    s1 += q * high.coeffs()[q];
    s2 += q * (q - 1.0) * high.coeffs()[q];
  }
  CHECK_THAT(s1, WithinRel(d_high.first, 1e-9));
  CHECK_THAT(s2, WithinRel(d_high.second, 1e-9));
}

TEST_CASE("ReLU second derivative diverges", "[kernel]") {
  const Kernel k = make_kernel(Activation::relu());
  const auto d = kappa_derivs_at_one(k);
  CHECK_THAT(d.first, WithinAbs(1.0, 1e-8));
  CHECK_FALSE(d.second_finite);
  CHECK(std::isinf(d.second));
  // finite-difference second derivative grows without bound as the mesh refines toward 1
  auto f = [&](double u) { return kappa_eval(k, u); };
  double prev = 0.0;
  for (double h : {1e-2, 1e-3, 1e-4, 1e-5}) {
    const double second = (f(1.0) - 2.0 * f(1.0 - h) + f(1.0 - 2.0 * h)) / (h * h);
    CHECK(second > 2.0 * prev);
    prev = second;
  }
  CHECK_THAT(oracle::left_first_derivative(f, 1.0, 1e-8), WithinAbs(1.0, 1e-3));
  CHECK_THROWS_AS(depth_derivs(k, 2), UnsupportedKernelError);
}

TEST_CASE("Composition", "[kernel]") {
  const Kernel k = make_kernel(Activation::gaussian(1.0));
  for (double u : {-0.7, 0.0, 0.3, 0.99}) CHECK(kappa_L_eval(k, 1, u) == kappa_eval(k, u));
  CHECK_THAT(kappa_L_eval(k, 2, 0.0), WithinAbs(kappa_eval(k, std::sqrt(3.0) / 2.0), 1e-12));
  for (const Activation& act : supported_activations(0.1)) {
    const Kernel kk = make_kernel(act);
    for (int L : {1, 2, 7, 30}) CHECK_THAT(kappa_L_eval(kk, L, 1.0), WithinAbs(1.0, 1e-9));
  }
}

TEST_CASE("Depth derivatives", "[kernel]") {
  const Kernel sparse = make_kernel(Activation::gaussian_a2(kSparseA2));
  const auto [d1, d2] = depth_derivs(sparse, 7);
  CHECK_THAT(d2, WithinRel(7.0 * sparse.ddkappa1(), 1e-12));
  CHECK_THAT(d1, WithinAbs(1.0, 1e-8));

  for (const Activation& act : supported_activations(0.0)) {
    const Kernel k = make_kernel(act);
    if (!k.ddkappa1_finite()) continue;
    const auto base = depth_derivs(k, 1);
    CHECK(base.first == k.dkappa1());
    CHECK(base.second == k.ddkappa1());
  }
}

TEST_CASE("Depth derivatives match finite differences of the composed kernel", "[kernel]") {
  for (double lb : {0.0, 0.1})
    for (double a2 : {1.0, kSparseA2, 9.0}) {
      const Kernel k = make_kernel(Activation::gaussian_a2(a2, lb));
      for (int L = 1; L <= 10; ++L) {
        const auto [d1, d2] = depth_derivs(k, L);
        // step scaled to the width of the peak at 1
        const double h = 0.02 / std::max(1.0, d2 / std::max(d1, 1e-300));
        INFO("a2=" << a2 << " lb=" << lb << " L=" << L);

        auto composed = [&](long double u) { return oracle::gaussian_kappa_L_ld(a2, lb, L, u); };
        const auto coarse = oracle::left_derivatives_ld(composed, h);
        const auto fine = oracle::left_derivatives_ld(composed, 0.5L * h);
        CHECK_THAT((16.0 * fine.first - coarse.first) / 15.0, WithinRel(d1, 1e-6));
        CHECK_THAT((16.0 * fine.second - coarse.second) / 15.0, WithinRel(d2, 1e-6));

        // the library's own composition, while double roundoff (amplified by kappa'(1)^L) stays below the tolerance
        if (std::pow(std::max(k.dkappa1(), 1.0 / k.dkappa1()), L) > 1e3) continue;
        auto f = [&](double u) { return kappa_L_eval(k, L, u); };
        const double fd1 = oracle::richardson4([&](double s) { return oracle::left_first_derivative(f, 1.0, s); }, h);
        const double fd2 = oracle::richardson4([&](double s) { return oracle::left_second_derivative(f, 1.0, s); }, h);
        CHECK_THAT(fd1, WithinRel(d1, 1e-6));
        CHECK_THAT(fd2, WithinRel(d2, 1e-6));
      }
    }
}

TEST_CASE("Regime classification", "[kernel]") {
  CHECK(classify_regime(make_kernel(Activation::gaussian_a2(1.0))).tag == RegimeTag::LowDisorder);
  CHECK(classify_regime(make_kernel(Activation::gaussian_a2(kSparseA2))).tag == RegimeTag::Sparse);
  CHECK(classify_regime(make_kernel(Activation::gaussian_a2(9.0))).tag == RegimeTag::HighDisorder);
  const Regime r = classify_regime(make_kernel(Activation::gaussian_a2(1.0 + 1e-4)), 1e-2);
  CHECK(r.tag == RegimeTag::LowDisorder);
  CHECK(r.tolerance == 1e-2);
  CHECK(classify_regime(make_kernel(Activation::gaussian_a2(kSparseA2 + 1e-3)), 1e-2).tag == RegimeTag::Sparse);
}

TEST_CASE("Kernel properties hold for every supported activation", "[kernel]") {
  for (double lb : {0.0, 0.1})
    for (const Activation& act : supported_activations(lb)) {
      const Kernel k = make_kernel(act);
      INFO(act.name() << " lb=" << lb);
      CHECK(k.dkappa1() >= 0.0);
      CHECK(k.ddkappa1() >= 0.0);
      if (k.ddkappa1_finite()) CHECK(k.ddkappa1() >= k.dkappa1() * (k.dkappa1() - 1.0));
      double prev = kappa_eval(k, 0.0);
      for (int j = -50; j <= 50; ++j) {
        const double u = j / 50.0;
        const double v = kappa_eval(k, u);
        CHECK(std::abs(v) <= 1.0 + 1e-12);
        if (j > 0) {
          CHECK(v >= prev - 1e-14);
          prev = v;
        }
      }
      if (k.ddkappa1_finite()) {
        const double gamma1 = (k.dkappa1() * k.dkappa1() - k.dkappa1()) / k.ddkappa1();
        for (int L = 1; L <= 6; ++L) {
          const auto [d1, d2] = depth_derivs(k, L);
          const double gamma = (d1 * d1 - d1) / d2;
          if (gamma1 == 0.0) CHECK(std::abs(gamma) < 1e-9);
          else CHECK_THAT(gamma, WithinRel(gamma1, 1e-9));
        }
      }
    }
}

TEST_CASE("Tanh kernel is odd with a converged series", "[kernel]") {
  const Kernel k = make_kernel(Activation::tanh());
  CHECK(k.derivative_source() == DerivativeSource::Series);
  for (std::size_t q = 0; q < k.coeffs().size(); q += 2) CHECK(std::abs(k.coeffs()[q]) < 1e-14);
  CHECK(k.cri().kind == Cri::Kind::GreaterThanTwo);
  CHECK(make_kernel(Activation::relu()).cri().kind == Cri::Kind::Known);
  CHECK(make_kernel(Activation::relu()).cri().value == 1.5);
  CHECK(make_kernel(identity_table()).cri().kind == Cri::Kind::Unknown);
}

TEST_CASE("Identity activation has the identity kernel and spectrum", "[kernel]") {
  const Kernel k = make_kernel(identity_table());
  CHECK_THAT(k.lambda_w(), WithinAbs(1.0, 1e-12));
  for (double u : {-1.0, -0.3, 0.0, 0.8}) CHECK_THAT(kappa_L_eval(k, 5, u), WithinAbs(u, 1e-12));
  const AngularSpectrum s = angular_spectrum(k, 3, 20, 64);
  for (int l = 0; l <= 20; ++l) CHECK_THAT(s.chat[l], WithinAbs(l == 1 ? 1.0 : 0.0, 1e-10));
  CHECK_THAT(variance_explained(s, 1), WithinAbs(1.0, 1e-10));
  CHECK_THROWS_AS(variance_explained(s, 21), ArgumentError);
  CHECK_THROWS_AS(angular_spectrum(k, 1, 20, 30), ArgumentError);
}

TEST_CASE("Angular spectrum reproduces the kernel", "[kernel]") {
  for (double a2 : {1.0, kSparseA2, 9.0}) {
    const Kernel k = make_kernel(Activation::gaussian_a2(a2));
    const AngularSpectrum s = angular_spectrum(k, 3, 256, 1024);
    double total = 0.0;
    for (double c : s.chat) {
      CHECK(c >= -1e-8);
      total += c;
    }
    CHECK(total > 0.0);
    CHECK(total <= 1.0 + 1e-8);
    CHECK(variance_explained(s, s.lmax) == Catch::Approx(std::min(total, 1.0)).epsilon(1e-15));
    for (double t : {-0.9, -0.2, 0.4, 0.95}) {
      double sum = 0.0;
      for (int l = 0; l <= s.lmax; ++l) sum += s.chat[l] * oracle::legendre_p(l, t);
      CHECK_THAT(sum, WithinAbs(kappa_L_eval(k, 3, t), 1e-8));
    }
  }
}

TEST_CASE("Variance explained for the deep high-disorder kernel", "[kernel]") {
  const Kernel k = make_kernel(Activation::gaussian(3.0));
  std::vector<double> v;
  for (int L : {40, 50, 60}) v.push_back(variance_explained(angular_spectrum(k, L, 1536, 4096), 1536));
  for (double x : v) CHECK(x < 1.0);
  CHECK(v[1] <= v[0] + 1e-8);
  CHECK(v[2] <= v[1] + 1e-8);
  const AngularSpectrum shallow = angular_spectrum(k, 1, 1536, 4096);
  CHECK(variance_explained(shallow, 1536) >= 0.999);
}

TEST_CASE("Depth-10 high-disorder kernel keeps 99% of its variance below l = 1536", "[kernel-depth10]") {
  const Kernel k = make_kernel(Activation::gaussian(3.0));
  const double coarse = variance_explained(angular_spectrum(k, 10, 1536, 4096), 1536);
  const double fine = variance_explained(angular_spectrum(k, 10, 3072, 8192), 3072);
  INFO("V(1536) = " << coarse << ", V(3072) = " << fine);
  CHECK(fine >= coarse);
  CHECK(coarse >= 0.99);
}
