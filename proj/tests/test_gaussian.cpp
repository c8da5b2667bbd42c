#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "topocov/gaussian.hpp"
#include "topocov/kernels.hpp"
#include "topocov/quadrature.hpp"
#include "topocov/rng.hpp"

using namespace topocov;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::MatrixXd random_matrix(int r, int c, Rng& rng) {
  Eigen::MatrixXd a(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) a(i, j) = rng.normal();
  return a;
}

}  // namespace

TEST_CASE("conditioning examples") {
  Eigen::MatrixXd c(2, 2);
  c << 1, 0.6, 0.6, 1;
  auto law = condition(GaussianSpec::centred(c), {1}, Eigen::VectorXd::Zero(1));
  REQUIRE(law.size() == 1);
  CHECK(law.mean[0] == doctest::Approx(0.0));
  CHECK(law.cov(0, 0) == doctest::Approx(0.64));

  Eigen::MatrixXd d = Eigen::MatrixXd::Identity(3, 3);
  d(0, 1) = d(1, 0) = 0.3;
  Eigen::VectorXd mu(3);
  mu << 1, 2, 3;
  auto indep = condition(GaussianSpec(mu, d), {2}, Eigen::VectorXd::Constant(1, 5.0));
  CHECK(indep.mean[0] == doctest::Approx(1.0));
  CHECK(indep.mean[1] == doctest::Approx(2.0));
  CHECK(indep.cov.isApprox(d.topLeftCorner(2, 2)));

  auto all = condition(GaussianSpec(mu, d), {0, 1, 2}, mu);
  CHECK(all.size() == 0);
  CHECK(all.cov.size() == 0);

  Eigen::MatrixXd sing = Eigen::MatrixXd::Ones(2, 2);
  Eigen::MatrixXd big = Eigen::MatrixXd::Identity(3, 3);
  big.bottomRightCorner(2, 2) = sing;
  try {
    condition(GaussianSpec::centred(big), {1, 2}, Eigen::VectorXd::Zero(2));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Degenerate);
  }
}

TEST_CASE("conditioning contracts variances") {
  Rng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::MatrixXd a = random_matrix(5, 5, rng);
    Eigen::MatrixXd c = a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(5, 5);
    auto law = condition(GaussianSpec::centred(c), {1, 3}, Eigen::VectorXd::Zero(2));
    std::vector<int> free = {0, 2, 4};
    for (int i = 0; i < 3; ++i) CHECK(law.cov(i, i) <= c(free[i], free[i]) + 1e-12);
  }
}

TEST_CASE("density examples") {
  CHECK(density_at(GaussianSpec::centred(Eigen::MatrixXd::Identity(1, 1)), Eigen::VectorXd::Zero(1)) ==
        doctest::Approx(0.398942280).epsilon(1e-9));
  CHECK(density_at(GaussianSpec::centred(Eigen::MatrixXd::Identity(3, 3)), Eigen::VectorXd::Zero(3)) ==
        doctest::Approx(0.0634936359).epsilon(1e-9));
  GaussianSpec shifted(Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Identity(1, 1));
  CHECK(density_at(shifted, Eigen::VectorXd::Zero(1)) == doctest::Approx(0.241970725).epsilon(1e-9));
}

TEST_CASE("determinant examples") {
  CHECK(det_cov(Eigen::MatrixXd::Identity(4, 4)) == doctest::Approx(1.0));
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, 2);
  d(0, 0) = 2;
  d(1, 1) = 3;
  CHECK(det_cov(d) == doctest::Approx(6.0));
  Rng rng(9);
  Eigen::MatrixXd a = random_matrix(4, 4, rng);
  CHECK(det_cov(a * a.transpose()) == doctest::Approx(std::pow(a.determinant(), 2)).epsilon(1e-10));
}

TEST_CASE("determinant superadditivity on 200 random pairs") {
  Rng rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 1 + rep % 6;
    Eigen::MatrixXd a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
    Eigen::MatrixXd sx = a * a.transpose(), sy = b * b.transpose();
    CHECK(det_cov(sx + sy) >= det_cov(sx) + det_cov(sy));
  }
}

TEST_CASE("interpolation keeps the determinant between its end points") {
  Rng rng(13);
  for (int rep = 0; rep < 200; ++rep) {
    const int n1 = 1 + rep % 3, n2 = 1 + (rep / 3) % 3;
    Eigen::MatrixXd a = random_matrix(n1 + n2, n1 + n2, rng);
    Eigen::MatrixXd s = a * a.transpose() + 0.05 * Eigen::MatrixXd::Identity(n1 + n2, n1 + n2);
    Eigen::MatrixXd b11 = s.topLeftCorner(n1, n1), b22 = s.bottomRightCorner(n2, n2), x = s.topRightCorner(n1, n2);
    const double d1 = det_cov(interpolated_pair_cov(b11, b22, x, 1.0));
    const double d0 = det_cov(interpolated_pair_cov(b11, b22, x, 0.0));
    for (int i = 0; i <= 20; ++i) {
      const double dt = det_cov(interpolated_pair_cov(b11, b22, x, i / 20.0));
      CHECK(dt >= d1 * (1 - 1e-12));
      CHECK(dt <= d0 * (1 + 1e-12));
    }
  }
}

TEST_CASE("interpolated pair examples") {
  Eigen::MatrixXd b = Eigen::MatrixXd::Identity(2, 2), x(2, 2);
  x << 0.5, 0.1, 0.2, 0.3;
  auto t0 = interpolated_pair_cov(b, b, x, 0.0);
  CHECK(t0.cov.topRightCorner(2, 2).isZero());
  auto t1 = interpolated_pair_cov(b, b, x, 1.0);
  CHECK(t1.cov.topRightCorner(2, 2).isApprox(x));
  auto k = make_kernel("bargmann-fock", {});
  std::vector<Functional> f1 = {Functional::value({0.3, 0.3}, 0)}, f2 = {Functional::value({0.3, 0.3}, 1)};
  CHECK(functional_cov_matrix(*k, f1, f2, 0.5)(0, 0) == doctest::Approx(0.5));
  Eigen::VectorXd m1 = Eigen::VectorXd::Constant(2, 1.5), m2 = Eigen::VectorXd::Constant(2, -0.5);
  auto withmean = interpolated_pair_cov(b, b, x, 0.3, m1, m2);
  CHECK(withmean.mean[0] == 1.5);
  CHECK(withmean.mean[3] == -0.5);
}

TEST_CASE("covariance formula for half-spaces and boxes") {
  const QuadRule t = sine_substituted_unit(32);
  const Eigen::VectorXd c1 = Eigen::VectorXd::Zero(1);
  auto up = HalfSpaceOrBox::axis_halfspace(1, 0, 0.0, true);
  auto down = HalfSpaceOrBox::axis_halfspace(1, 0, 0.0, false);
  // Oracle: arcsin(1) / (2 pi).
  CHECK(piterbarg_rhs(1, up, up, c1, t) == doctest::Approx(std::asin(1.0) / (2 * std::numbers::pi)).epsilon(1e-6));
  CHECK(piterbarg_rhs(1, up, up, c1, t) == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(piterbarg_rhs(1, up, down, c1, t) == doctest::Approx(-0.25).epsilon(1e-6));
  CHECK(piterbarg_rhs(2, HalfSpaceOrBox::whole(2), HalfSpaceOrBox::box({0, 0}, {1, 1}), Eigen::VectorXd::Zero(2),
                      t) == 0.0);

  // Complement flip on shifted half-spaces, against the bivariate normal oracle.
  for (double a : {-0.7, 0.0, 0.4}) {
    for (double b : {-0.2, 0.9}) {
      auto A = HalfSpaceOrBox::axis_halfspace(1, 0, a, true);
      auto B = HalfSpaceOrBox::axis_halfspace(1, 0, b, true);
      auto Bc = HalfSpaceOrBox::axis_halfspace(1, 0, b, false);
      double r = piterbarg_rhs(1, A, B, c1, t);
      CHECK(r == doctest::Approx(-piterbarg_rhs(1, A, Bc, c1, t)).epsilon(1e-10));
      double oracle = (1 - std_normal_cdf(std::max(a, b))) - (1 - std_normal_cdf(a)) * (1 - std_normal_cdf(b));
      CHECK(r == doctest::Approx(oracle).epsilon(1e-5));
    }
  }
}

TEST_CASE("covariance formula against Monte Carlo") {
  const QuadRule t = sine_substituted_unit(32);
  Rng rng(17);
  auto up = HalfSpaceOrBox::axis_halfspace(1, 0, 0.0, true);
  auto c = piterbarg_check(1, up, up, Eigen::VectorXd::Zero(1), 100000, rng, t);
  CHECK(c.rhs == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(std::abs(c.lhs - c.rhs) <= 3 * c.mc_se + 1e-4);

  auto box = HalfSpaceOrBox::box({0, 0}, {1, 1});
  auto c2 = piterbarg_check(2, box, box, Eigen::VectorXd::Ones(2), 100000, rng, t);
  double p = std::pow(std_normal_cdf(0.0) - std_normal_cdf(-1.0), 2);
  CHECK(c2.rhs == doctest::Approx(p - p * p).epsilon(1e-4));
  CHECK(std::abs(c2.lhs - c2.rhs) <= 3 * c2.mc_se);

  auto A = HalfSpaceOrBox::box({0.5, -kInf}, {kInf, kInf});
  auto B = HalfSpaceOrBox::box({-kInf, -kInf}, {-0.5, kInf});
  auto c3 = piterbarg_check(2, A, B, Eigen::VectorXd::Zero(2), 100000, rng, t);
  double q = 1 - std_normal_cdf(0.5);
  CHECK(c3.rhs == doctest::Approx(-q * q).epsilon(1e-5));
  CHECK(std::abs(c3.lhs - c3.rhs) <= 3 * c3.mc_se);
}

TEST_CASE("bivariate normal helpers") {
  CHECK(bvn_upper(0, 0, 0) == doctest::Approx(0.25));
  CHECK(bvn_upper(0, 0, 0.5) == doctest::Approx(0.25 + std::asin(0.5) / (2 * std::numbers::pi)));
  CHECK(bvn_cdf(1.0, 0.3, 0.0) == doctest::Approx(std_normal_cdf(1.0) * std_normal_cdf(0.3)));
}
