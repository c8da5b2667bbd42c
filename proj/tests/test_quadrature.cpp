#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <thread>

#include "topocov/parallel.hpp"
#include "topocov/quadrature.hpp"
#include "topocov/rng.hpp"

using namespace topocov;

TEST_CASE("gauss-legendre is exact for polynomials of degree 2n-1") {
  for (int n = 1; n <= 12; ++n) {
    QuadRule r = gauss_legendre(n, -0.5, 2.0);
    for (int p = 0; p <= 2 * n - 1; ++p) {
      double s = 0.0;
      for (int k = 0; k < r.size(); ++k) s += r.weights[k] * std::pow(r.nodes[k], p);
      double exact = (std::pow(2.0, p + 1) - std::pow(-0.5, p + 1)) / (p + 1);
      CHECK(s == doctest::Approx(exact).epsilon(1e-12));
    }
  }
}

TEST_CASE("composite rule covers every panel") {
  QuadRule r = composite_gauss_legendre(8, {0.0, 0.5, 2.0, 3.0});
  CHECK(r.size() == 24);
  double s = 0.0;
  for (int k = 0; k < r.size(); ++k) s += r.weights[k] * std::exp(r.nodes[k]);
  CHECK(s == doctest::Approx(std::exp(3.0) - 1.0).epsilon(1e-9));
}

TEST_CASE("sine substitution integrates the endpoint singularity") {
  QuadRule r = sine_substituted_unit(16);
  double s = 0.0;
  for (int k = 0; k < r.size(); ++k) s += r.weights[k] / std::sqrt(1 - r.nodes[k] * r.nodes[k]);
  CHECK(s == doctest::Approx(std::numbers::pi / 2).epsilon(1e-12));
  for (double t : r.nodes) {
    CHECK(t > 0.0);
    CHECK(t < 1.0);
  }
}

TEST_CASE("tail estimate is small for smooth and large for rough integrands") {
  QuadRule r = gauss_legendre(8, 0.0, 1.0);
  std::vector<double> smooth, rough;
  for (double t : r.nodes) {
    smooth.push_back(1 + t + t * t);
    rough.push_back(std::abs(t - 0.5));
  }
  CHECK(legendre_tail_estimate(r, smooth, 0.0, 1.0) < 1e-12);
  CHECK(legendre_tail_estimate(r, rough, 0.0, 1.0) > 1e-4);
}

TEST_CASE("seed derivation is deterministic and spreads") {
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, {2, 3}) == derive_seed(derive_seed(1, 2), 3));
  std::set<std::uint64_t> seen;
  for (std::uint64_t k = 0; k < 1000; ++k) seen.insert(derive_seed(42, k));
  CHECK(seen.size() == 1000);
  Rng a(5), b(5);
  for (int i = 0; i < 10; ++i) CHECK(a.normal() == b.normal());
}

TEST_CASE("parallel_for results do not depend on the worker count") {
  auto run = [](int workers) {
    std::vector<double> out(64);
    parallel_for(64, workers, [&](int i) {
      Rng r(derive_seed(9, static_cast<std::uint64_t>(i)));
      out[i] = r.normal();
    });
    return out;
  };
  CHECK(run(1) == run(4));
}
