#include <doctest.h>

#include <cmath>
#include <numbers>

#include "topocov/formula.hpp"
#include "topocov/gaussian.hpp"
#include "topocov/kernels.hpp"
#include "topocov/quadrature.hpp"

using namespace topocov;

namespace {

KernelPtr bf() { return make_kernel("bargmann-fock", {}); }

EventSpec lr(const Rect& r) { return EventSpec::crossing(r, Direction::LeftRight); }

FormulaOptions small_options() {
  FormulaOptions o;
  o.spatial_nodes = 2;
  o.t_nodes = 4;
  o.n_mc = 200;
  o.n_lhs = 2000;
  return o;
}

}  // namespace

TEST_CASE("lhs examples") {
  const Rect a{0, 2, 0, 2};
  auto sure = EventSpec::count_at_least({3, 5, 0, 2}, 0);
  auto e = estimate_lhs(bf(), {}, lr(a), sure, 4000, 1);
  CHECK(e.value == 0.0);

  auto same = estimate_lhs(bf(), {}, lr(a), lr(a), 20000, 2);
  CHECK(std::abs(same.value - 0.25) <= 3 * same.se + 0.005);

  auto far = estimate_lhs(bf(), {}, lr(a), lr({12, 14, 0, 2}), 20000, 3);
  CHECK(std::abs(far.value) <= 3 * far.se);
  CHECK(far.se > 0.0);
  CHECK(far.se < 0.02);
}

TEST_CASE("gamma at zero") {
  auto k = bf();
  const double g0 = std::pow(2 * std::numbers::pi, -1.5);
  CHECK(gamma_at_zero(*k, 0.0, {0, 0}, Stratum::interior(), {30, 0}, Stratum::interior()) ==
        doctest::Approx(g0 * g0).epsilon(1e-10));

  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    Vec2 x1{rng.normal(), rng.normal()}, x2{rng.normal() + 1, rng.normal()};
    Stratum F1 = i % 2 ? Stratum::interior() : Stratum::edge({1, 0});
    Stratum F2 = i % 3 ? Stratum::interior() : Stratum::edge({0, 1});
    auto marginal = [&](Vec2 x, const Stratum& F) {
      auto f = constraint_functionals(x, F);
      return density_at(GaussianSpec::centred(functional_cov_matrix(*k, f, f)),
                        Eigen::VectorXd::Zero(static_cast<int>(f.size())));
    };
    CHECK(gamma_at_zero(*k, 0.0, x1, F1, x2, F2) ==
          doctest::Approx(marginal(x1, F1) * marginal(x2, F2)).epsilon(1e-10));
  }

  double prev = 0.0;
  for (int i = 0; i <= 20; ++i) {
    double g = gamma_at_zero(*k, i / 20.0, {0, 0}, Stratum::interior(), {2.5, 0.5}, Stratum::edge({0, 1}));
    CHECK(g >= prev * (1 - 1e-12));
    prev = g;
  }
}

TEST_CASE("gamma and the hessian weight are symmetric in the two points") {
  auto k = bf();
  const Vec2 x1{0.5, 1.0}, x2{3.25, 0.75};
  const Stratum F1 = Stratum::interior(), F2 = Stratum::edge({0, 1});
  for (double t : {0.0, 0.3, 0.9, 1.0})
    CHECK(std::abs(gamma_at_zero(*k, t, x1, F1, x2, F2) - gamma_at_zero(*k, t, x2, F2, x1, F1)) <= 1e-12);
}

TEST_CASE("t-integrand stays bounded near t = 1 for separated points") {
  auto k = bf();
  QuadRule t;
  t.nodes = {0.0, 0.5, 0.9, 0.99, 0.999, 1.0};
  t.weights.assign(t.nodes.size(), 1.0);
  auto p = hessian_weight_profile(k, {}, {1.5, 1.0}, Stratum::interior(), {3.5, 1.0}, Stratum::interior(), t, 2000, 9);
  REQUIRE(p.front() > 0.0);
  for (double v : p) {
    CHECK(std::isfinite(v));
    CHECK(v <= 1e3 * p.front());
  }
}

TEST_CASE("pivotal intensity examples") {
  auto k = bf();
  const Rect b1{0, 2, 0, 2}, b2{3, 5, 0, 2};
  auto pi = pivotal_intensity(k, {}, 0.5, {1.0, 1.0}, 0, {4.0, 1.0}, 0, lr(b1), lr(b2), 500, 3);
  CHECK(pi.minus == 0.0);
  CHECK(pi.plus >= 0.0);

  auto corner = pivotal_intensity(k, {}, 0.5, {0.0, 0.0}, 5, {4.0, 1.0}, 0, lr(b1), lr(b2), 500, 3);
  CHECK(corner.plus == 0.0);
  CHECK(corner.minus == 0.0);
  CHECK(corner.n_samples == 0);

}

TEST_CASE("rhs vanishes when the kernel vanishes between the boxes") {
  auto w = make_kernel("wendland-product", {{"support", 1.0}});
  auto rep = estimate_rhs(w, {}, lr({0, 1, 0, 1}), lr({2.5, 3.5, 0, 1}), small_options(), 5);
  CHECK(rep.rhs == 0.0);
  for (const auto& c : rep.breakdown) CHECK(c.value == 0.0);
}

TEST_CASE("rhs breakdown for increasing events") {
  auto k = bf();
  const Rect b1{0, 1, 0, 1}, b2{1.5, 2.5, 0, 1};
  FormulaOptions o = small_options();
  auto rep = estimate_rhs(k, {}, lr(b1), lr(b2), o, 6);
  CHECK(rep.breakdown.size() == 81);
  CHECK(rep.rhs >= 0.0);
  for (const auto& c : rep.breakdown) {
    if (c.j1 >= 5 || c.j2 >= 5) {
      CHECK(c.value == 0.0);
      CHECK(c.node_pairs == 0);
    } else if (c.kernel_min >= 0.0) {
      CHECK(c.value >= -c.mc_se);
    }
  }
  CHECK(rep.rhs_se() > 0.0);

  // With corner strata the corner pairs carry their own terms.
  o.corner_strata = true;
  auto with = estimate_rhs(k, {}, lr(b1), lr(b2), o, 6);
  double corners = 0.0;
  for (const auto& c : with.breakdown)
    if (c.j1 >= 5 || c.j2 >= 5) corners += c.value;
  CHECK(corners > 0.0);
}

TEST_CASE("swapping the events keeps the rhs within its error") {
  auto k = bf();
  const Rect b1{0, 1, 0, 1}, b2{1.5, 2.5, 0, 1};
  auto a = estimate_rhs(k, {}, lr(b1), lr(b2), small_options(), 7);
  auto b = estimate_rhs(k, {}, lr(b2), lr(b1), small_options(), 8);
  CHECK(std::abs(a.rhs - b.rhs) <= 4 * std::hypot(a.rhs_se(), b.rhs_se()));
}

TEST_CASE("formula runs are deterministic and worker-independent") {
  auto k = bf();
  const Rect b1{0, 1, 0, 1}, b2{1.5, 2.5, 0, 1};
  FormulaOptions o = small_options();
  auto a = run_formula(k, {}, lr(b1), lr(b2), o, 11);
  o.workers = 3;
  auto b = run_formula(k, {}, lr(b1), lr(b2), o, 11);
  CHECK(formula_csv_row(a) == formula_csv_row(b));
  const double r = (a.lhs.value - a.rhs) / std::hypot(a.lhs.se, a.rhs_se());
  CHECK(formula_residual(a) == doctest::Approx(r));
}

TEST_CASE("overlapping boxes need an exclusion radius") {
  auto k = bf();
  try {
    estimate_rhs(k, {}, lr({0, 2, 0, 2}), lr({1, 3, 0, 2}), small_options(), 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonDisjoint);
  }
}
