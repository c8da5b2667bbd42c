#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "topocov/bounds.hpp"
#include "topocov/formula.hpp"

using namespace topocov;

namespace {

KernelPtr bf() { return make_kernel("bargmann-fock", {}); }

}  // namespace

TEST_CASE("conditional hessian moment on an edge") {
  auto k = bf();
  const Stratum F = Stratum::edge({0, 1});
  // Closed forms: given the value, d4 k(0) - d2 k(0)^2 / k(0); given only the
  // tangential derivative, d4 k(0) since the third derivative vanishes.
  const double d4 = k->derivative({0, 4}, {0, 0}), d2 = k->derivative({0, 2}, {0, 0});
  Rng r1(3);
  auto with_value = conditional_hessian_moment(*k, {0, 0}, F, 100000, r1, true);
  CHECK(std::abs(with_value.value - (d4 - d2 * d2 / k->variance())) <= 5 * with_value.se);
  Rng r2(4);
  auto grad_only = conditional_hessian_moment(*k, {0, 0}, F, 100000, r2, false);
  CHECK(std::abs(grad_only.value - d4) <= 5 * grad_only.se);
  CHECK(conditional_hessian_law(*k, {0, 0}, Stratum::corner()).size() == 0);
}

TEST_CASE("mixing constants are homogeneous of degree -1") {
  auto k = bf();
  const Rect b1{0, 2, 0, 2}, b2{3, 5, 0, 2};
  for (auto [j1, j2] : std::vector<std::pair<int, int>>{{0, 0}, {1, 2}, {3, 4}}) {
    Rng r(11);
    const double base = mixing_constant(*k, j1, j2, b1, b2, 2000, r);
    for (double lam : {0.5, 2.0}) {
      auto scaled = std::make_shared<ScaledKernel>(k, lam);
      Rng rs(11);
      const double c = mixing_constant(*scaled, j1, j2, b1, b2, 2000, rs);
      CHECK(c == doctest::Approx(base / lam).epsilon(1e-6));
    }
  }
}

TEST_CASE("mixing constants settle as the boxes separate") {
  auto k = bf();
  const Rect b1{0, 1, 0, 1};
  std::vector<double> c;
  for (double gap : {10.0, 20.0, 40.0}) {
    Rng r(5);
    auto d = mixing_constant_detail(*k, StratifiedBox{b1}, 0, StratifiedBox{{1 + gap, 2 + gap, 0, 1}}, 0, 2000, r);
    CHECK(d.min_det_delta == doctest::Approx(1.0).epsilon(1e-6));
    c.push_back(d.value);
  }
  CHECK(c[1] == doctest::Approx(c[2]).epsilon(1e-6));
}

TEST_CASE("degenerate delta names the offending pair") {
  auto c = make_kernel("constant", {});
  Rng r(1);
  try {
    mixing_constant(*c, 1, 1, {0, 1, 0, 1}, {2, 3, 0, 1}, 100, r);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Degenerate);
    CHECK(std::string(e.what()).find("x1") != std::string::npos);
  }
}

TEST_CASE("mixing bound examples") {
  auto w = make_kernel("wendland-product", {{"support", 1.0}});
  CHECK(mixing_bound(*w, {0, 1, 0, 1}, {2.5, 3.5, 0, 1}).bound == 0.0);

  auto k = bf();
  const Rect b1{0, 2, 0, 2};
  double prev = std::numeric_limits<double>::infinity();
  for (double sep : {2.0, 3.0, 4.0, 5.0}) {
    auto rep = mixing_bound(*k, b1, {2 + sep, 4 + sep, 0, 2});
    CHECK(std::isfinite(rep.bound));
    CHECK(rep.bound >= 0.0);
    CHECK(rep.bound <= prev);
    prev = rep.bound;
  }
  CHECK_THROWS_AS(mixing_bound(*k, b1, {1, 3, 0, 2}), Error);
}

TEST_CASE("bounds are non-negative and finite on the built-in kernels") {
  for (std::string name : {"bargmann-fock", "rational", "wendland-product"}) {
    auto k = make_kernel(name, {});
    MixingBoundOptions o;
    o.n_mc = 500;
    auto rep = mixing_bound(*k, {0, 1, 0, 1}, {2, 3, 0, 1}, 1.0, o);
    INFO(name);
    CHECK(std::isfinite(rep.bound));
    CHECK(rep.bound >= 0.0);
    for (const auto& t : rep.terms) {
      CHECK(t.constant >= 0.0);
      CHECK(t.face_integral >= 0.0);
    }
  }
}

TEST_CASE("face integrals against a closed form") {
  // For exp(-|h|^2/2) the integral over two unit intervals factorises into
  // error functions.
  auto k = bf();
  StratifiedBox a{{0, 1, 0, 1}}, b{{3, 4, 0, 1}};
  auto one_d = [](double lo1, double hi1, double lo2, double hi2) {
    auto F = [](double z) {
      return z * std::sqrt(std::numbers::pi / 2) * std::erf(z / std::sqrt(2.0)) + std::exp(-z * z / 2);
    };
    return F(hi2 - lo1) - F(hi2 - hi1) - F(lo2 - lo1) + F(lo2 - hi1);
  };
  const double xs = one_d(0, 1, 3, 4), ys = one_d(0, 1, 0, 1);
  CHECK(face_integral(*k, a, 0, b, 0) == doctest::Approx(xs * ys).epsilon(1e-8));
  // Right edge of a (x = 1) against left edge of b (x = 3).
  CHECK(face_integral(*k, a, 2, b, 1) == doctest::Approx(std::exp(-2.0) * ys).epsilon(1e-8));
  // Corner (1, 1) against corner (3, 0).
  CHECK(face_integral(*k, a, 8, b, 5) == doctest::Approx(std::exp(-2.5)).epsilon(1e-12));
}

TEST_CASE("envelope fit dominates every point") {
  auto k = bf();
  std::vector<double> x = {1, 2, 3}, y;
  for (double s : x) y.push_back(mixing_bound(*k, {0, s, 0, s}, {2 * s, 3 * s, 0, s}).bound);
  auto fit = fit_envelope(x, y, *k, 4.0, {0.5, 0.75, 1.0, 1.25});
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(y[i] <= fit.c3 * std::pow(x[i], 4) * kappa_bar(*k, fit.c4 * x[i]) * (1 + 1e-12));
  CHECK(fit.spread >= 1.0);
}

TEST_CASE("empirical alpha examples") {
  auto k = bf();
  const Rect a{0, 2, 0, 2};
  auto same = empirical_alpha(k, crossing_family(a), crossing_family(a), 20000, 1);
  CHECK(same.value == doctest::Approx(0.25).epsilon(0.04));
  auto far = empirical_alpha(k, crossing_family(a), crossing_family({12, 14, 0, 2}), 20000, 2);
  CHECK(far.value <= 3 * far.se);
  CHECK(default_event_family(a).size() == 8);
}

TEST_CASE("crossing covariances are non-negative on random box pairs") {
  auto k = bf();
  Rng rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    const double w1 = 0.5 + 0.25 * static_cast<int>(rng.uniform() * 5), w2 = 0.5 + 0.25 * static_cast<int>(rng.uniform() * 5);
    const double gap = 0.25 * (1 + static_cast<int>(rng.uniform() * 8));
    const double dy = 0.25 * static_cast<int>(rng.uniform() * 5) - 0.5;
    const Rect b1{0, w1, 0, 1}, b2{w1 + gap, w1 + gap + w2, dy, dy + 1};
    auto d = rng.uniform() < 0.5 ? Direction::LeftRight : Direction::BottomTop;
    auto e = estimate_lhs(k, {}, EventSpec::crossing(b1, d), EventSpec::crossing(b2, Direction::LeftRight), 4000,
                          derive_seed(8, static_cast<std::uint64_t>(rep)));
    INFO("pair ", rep);
    CHECK(e.value >= -3 * e.se);
  }
}

TEST_CASE("a shape calibrated once dominates alpha at other separations") {
  // R x R boxes at gap R; c fitted at the first R against R^4 kappa_bar(R).
  auto k = bf();
  std::vector<double> sizes = {1.0, 1.5, 2.0}, alpha, se, shape;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const double R = sizes[i];
    auto a = empirical_alpha(k, crossing_family({0, R, 0, R}), crossing_family({2 * R, 3 * R, 0, R}), 20000,
                             derive_seed(3, i));
    alpha.push_back(a.value);
    se.push_back(a.se);
    shape.push_back(std::pow(R, 4) * kappa_bar(*k, R));
  }
  const double c = alpha[0] / shape[0];
  for (std::size_t i = 1; i < sizes.size(); ++i) CHECK(alpha[i] <= c * shape[i] + 3 * se[i]);
}

TEST_CASE("mixing bound calibrated at the widest gap dominates alpha at the others") {
  auto k = bf();
  const Rect b1{0, 1, 0, 1};
  std::vector<double> gaps = {1.0, 1.5, 2.0}, alpha, se, bound;
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    const Rect b2{1 + gaps[i], 2 + gaps[i], 0, 1};
    auto a = empirical_alpha(k, crossing_family(b1), crossing_family(b2), 20000, derive_seed(3, i));
    alpha.push_back(a.value);
    se.push_back(a.se);
    MixingBoundOptions o;
    o.n_mc = 1000;
    bound.push_back(mixing_bound(*k, b1, b2, 1.0, o).bound);
  }
  REQUIRE(alpha.back() > 3 * se.back());
  const double c_d = alpha.back() / bound.back();
  for (std::size_t i = 0; i + 1 < gaps.size(); ++i) CHECK(alpha[i] <= c_d * bound[i]);
}

TEST_CASE("concentration with an oversized epsilon never reaches the tail") {
  auto k = bf();
  ConcentrationOptions o;
  o.epsilon = 1e6;
  auto t = concentration_experiment(k, {0, 1, 0, 1}, {2, 3}, 200, 4, o);
  for (const auto& r : t.rows) CHECK(r.frequency == 0.0);
  CHECK(t.threshold < 0.0);
  CHECK(frequencies_non_increasing(t));
  for (const auto& r : t.rows) {
    CHECK(r.envelope >= 0.0);
    CHECK(r.r >= 1.0);
  }
}

TEST_CASE("chain bound on three disjoint boxes") {
  auto k = bf();
  std::vector<EventSpec> ev = {EventSpec::crossing({0, 1, 0, 1}, Direction::LeftRight),
                               EventSpec::crossing({1.5, 2.5, 0, 1}, Direction::LeftRight),
                               EventSpec::crossing({3, 4, 0, 1}, Direction::BottomTop)};
  auto c = chain_bound_check(k, ev, 20000, 6);
  CHECK(c.marginals.size() == 3);
  CHECK(c.h < 1.0);
  CHECK(c.lhs <= c.rhs + 3.0 / std::sqrt(double(c.n)));
  CHECK_THROWS_AS(chain_bound_check(k, {ev[0], ev[0]}, 1000, 1), Error);
}

TEST_CASE("kostlan caps") {
  CHECK_THROWS_AS(kostlan_mixing_experiment({8}, {0, 0.5}, {3.0, 3.4}, 100, 1), Error);
  CHECK_THROWS_AS(kostlan_mixing_experiment({8}, {0, 1.0}, {0.5, 1.5}, 100, 1), Error);
  auto d = kostlan_mixing_experiment({0}, {0, 0.5}, {1.0, 1.5}, 4000, 2, 256);
  // Degree 0: one Gaussian decides both caps, so the sign events coincide.
  CHECK(d.rows[0].alpha == doctest::Approx(0.25).epsilon(0.05));
  CHECK(arc_event_names().size() == 5);
}

TEST_CASE("kostlan zero counts grow like the square root of the degree") {
  auto z = kostlan_zero_counts({25, 100, 400}, 1000, 5, 4096);
  for (const auto& r : z) {
    CHECK(r.expected == doctest::Approx(2 * std::sqrt(double(r.degree))));
    CHECK(std::abs(r.mean - r.expected) <= 5 * r.se);
  }
  // Normalised means stabilise.
  const double a = z[1].mean / std::sqrt(100.0), b = z[2].mean / std::sqrt(400.0);
  CHECK(std::abs(a - b) <= 5 * std::hypot(z[1].se / 10.0, z[2].se / 20.0));
}

TEST_CASE("decorrelation bound examples") {
  CHECK(decorrelation_bound(1, 2, 0) == 0.0);
  CHECK(decorrelation_bound(1, 2, 1) == doctest::Approx(8.0));
  CHECK(decorrelation_bound(16, 2, 0.01) == doctest::Approx(3.2));
  CHECK_THROWS_AS(decorrelation_bound(-1, 2, 0.1), Error);
}

TEST_CASE("harris exponents and scaling sequences") {
  auto k = make_kernel("rational", {{"power", 1.5}});  // |x|^-3 tail, integrable
  auto t = harris_scaling(*k, 4.0 / 3.0, {4, 8, 16, 32}, {0, 1, 0, 1}, {0, 1, 0, 1}, {2, 3, 0, 1});
  CHECK(t.self_exponent == doctest::Approx(-2.5));
  CHECK(t.zeta4 == doctest::Approx(1.25));
  CHECK(t.cross_exponent == doctest::Approx(-2.5));
  for (std::size_t i = 1; i < t.rows.size(); ++i) {
    CHECK(t.rows[i].self_scaled < t.rows[i - 1].self_scaled);
    CHECK(t.rows[i].cross_scaled < t.rows[i - 1].cross_scaled);
  }
  // Compact support: the self integral grows like the area only.
  auto w = make_kernel("wendland-product", {{"support", 1.0}});
  auto tw = harris_scaling(*w, 4.0 / 3.0, {4, 8, 16}, {0, 1, 0, 1}, {0, 1, 0, 1}, {2, 3, 0, 1});
  for (std::size_t i = 1; i < tw.rows.size(); ++i) CHECK(tw.rows[i].self_scaled < tw.rows[i - 1].self_scaled);
  CHECK(tw.rows[0].self_integral / 16.0 == doctest::Approx(tw.rows[2].self_integral / 256.0).epsilon(0.3));

  // Quadrature against a direct tensor sum for one small case.
  auto bfk = bf();
  const double direct = [&] {
    auto g = gauss_legendre(24, 0.0, 1.0);
    double s = 0.0;
    for (int a = 0; a < g.size(); ++a)
      for (int b = 0; b < g.size(); ++b)
        for (int c = 0; c < g.size(); ++c)
          for (int d = 0; d < g.size(); ++d)
            s += g.weights[a] * g.weights[b] * g.weights[c] * g.weights[d] *
                 bfk->value({g.nodes[a] - g.nodes[c] - 2.0, g.nodes[b] - g.nodes[d]});
    return s;
  }();
  CHECK(box_pair_integral(*bfk, {0, 1, 0, 1}, {2, 3, 0, 1}) == doctest::Approx(direct).epsilon(1e-8));
}
