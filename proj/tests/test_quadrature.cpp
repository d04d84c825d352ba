#include "catch_amalgamated.hpp"

#include <cmath>
#include <numbers>

#include "critpoints/quadrature.hpp"

using namespace critpoints;
using Catch::Matchers::WithinAbs;

TEST_CASE("Gauss-Legendre integrates polynomials of degree 2n-1 exactly", "[quadrature]") {
  for (int n : {1, 2, 3, 7, 16, 40}) {
    const quad::Rule r = quad::gauss_legendre(n);
    REQUIRE(r.size() == static_cast<std::size_t>(n));
    for (int p = 0; p <= 2 * n - 1; ++p) {
      const double exact = (p % 2 == 1) ? 0.0 : 2.0 / (p + 1);
      const double got = r.integrate([p](double x) { return std::pow(x, p); });
      CHECK_THAT(got, WithinAbs(exact, 1e-13));
    }
  }
}

TEST_CASE("Gauss-Legendre nodes are ascending inside (-1, 1)", "[quadrature]") {
  const quad::Rule r = quad::gauss_legendre(33);
  for (std::size_t k = 0; k + 1 < r.size(); ++k) CHECK(r.nodes[k] < r.nodes[k + 1]);
  CHECK(r.nodes.front() > -1.0);
  CHECK(r.nodes.back() < 1.0);
}

TEST_CASE("Gaussian-weight rule reproduces normal moments", "[quadrature]") {
  const quad::Rule r = quad::gaussian_weight_rule(2);
  CHECK_THAT(r.integrate([](double) { return 1.0; }), WithinAbs(1.0, 1e-14));
  CHECK_THAT(r.integrate([](double x) { return x * x; }), WithinAbs(1.0, 1e-13));
  CHECK_THAT(r.integrate([](double x) { return x * x * x * x; }), WithinAbs(3.0, 1e-12));
  CHECK_THAT(r.integrate([](double x) { return std::pow(x, 8); }), WithinAbs(105.0, 1e-10));
}

TEST_CASE("Kinks become panel edges", "[quadrature]") {
  const double kink[] = {0.3};
  const quad::Rule r = quad::gaussian_weight_rule(0, kink);
  // E[max(Z - 0.3, 0)] = phi(0.3) - 0.3 * (1 - Phi(0.3))
  const double exact = quad::normal_pdf(0.3) - 0.3 * quad::normal_sf(0.3);
  CHECK_THAT(r.integrate([](double x) { return std::max(x - 0.3, 0.0); }), WithinAbs(exact, 1e-14));
}

TEST_CASE("Normal upper tail", "[quadrature]") {
  CHECK_THAT(quad::normal_sf(0.0), WithinAbs(0.5, 1e-16));
  CHECK_THAT(quad::normal_sf(1.0), WithinAbs(0.15865525393145707, 1e-15));
  CHECK(quad::normal_sf(-12.0) == 1.0);
}
