#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "topocov/gaussian.hpp"
#include "topocov/kernels.hpp"
#include "topocov/sampler.hpp"
#include "topocov/topology.hpp"

using namespace topocov;

namespace {

KernelPtr bf() { return make_kernel("bargmann-fock", {}); }

// Running first and second moments of a few coordinates.
struct Moments {
  explicit Moments(int n) : sum(Eigen::VectorXd::Zero(n)), cross(Eigen::MatrixXd::Zero(n, n)), sq(cross) {}
  void add(const Eigen::VectorXd& v) {
    ++count;
    sum += v;
    Eigen::MatrixXd o = v * v.transpose();
    cross += o;
    sq += o.cwiseProduct(o);
  }
  double mean(int i) const { return sum[i] / count; }
  double mean_se(int i) const { return std::sqrt((cross(i, i) / count - mean(i) * mean(i)) / count); }
  // Second moment about zero and its standard error.
  double m2(int i, int j) const { return cross(i, j) / count; }
  double m2_se(int i, int j) const { return std::sqrt((sq(i, j) / count - m2(i, j) * m2(i, j)) / count); }
  long count = 0;
  Eigen::VectorXd sum;
  Eigen::MatrixXd cross, sq;
};

}  // namespace

TEST_CASE("stationary sampler moments") {
  Rng rng(1);
  Grid2D one{{0, 0}, 0.25, 1, 1};
  Moments m1(1);
  for (int s = 0; s < 10000; ++s) m1.add(Eigen::VectorXd::Constant(1, sample_stationary(bf(), one, {}, rng).values[0]));
  CHECK(std::abs(m1.m2(0, 0) - 1.0) <= 5 * m1.m2_se(0, 0));

  Grid2D two{{0, 0}, 0.75, 2, 1};
  Moments m2(2);
  for (int s = 0; s < 10000; ++s) {
    auto f = sample_stationary(bf(), two, {2.0}, rng);
    m2.add(Eigen::Vector2d(f.values[0], f.values[1]));
  }
  CHECK(std::abs(m2.mean(0) - 2.0) <= 5 * m2.mean_se(0));
  CHECK(std::abs(m2.mean(1) - 2.0) <= 5 * m2.mean_se(1));
  double cov = m2.m2(0, 1) - m2.mean(0) * m2.mean(1);
  CHECK(std::abs(cov - std::exp(-0.75 * 0.75 / 2)) <= 5 * m2.m2_se(0, 1));
}

TEST_CASE("exact and FFT paths agree in distribution") {
  const Grid2D g = Grid2D::covering({0, 3, 0, 2}, 0.25);
  GridSampler exact(bf(), {g}, {}, SamplingMethod::Exact);
  GridSampler fft(bf(), {g}, {}, SamplingMethod::Fft);
  REQUIRE(fft.method() == SamplingMethod::Fft);
  Rng pick(5);
  std::vector<std::pair<int, int>> pairs;
  for (int k = 0; k < 10; ++k)
    pairs.emplace_back(static_cast<int>(pick.uniform() * g.size()), static_cast<int>(pick.uniform() * g.size()));
  auto moments = [&](const GridSampler& s, std::uint64_t seed) {
    Moments m(2 * static_cast<int>(pairs.size()));
    std::vector<double> v(g.size());
    Rng rng(seed);
    for (int d = 0; d < 10000; ++d) {
      s.draw_values(rng, v.data());
      Eigen::VectorXd x(2 * pairs.size());
      for (std::size_t k = 0; k < pairs.size(); ++k) {
        x[2 * k] = v[pairs[k].first];
        x[2 * k + 1] = v[pairs[k].second];
      }
      m.add(x);
    }
    return m;
  };
  Moments a = moments(exact, 11), b = moments(fft, 12);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const int i = 2 * static_cast<int>(k), j = i + 1;
    CHECK(std::abs(a.m2(i, i) - b.m2(i, i)) <= 5 * std::hypot(a.m2_se(i, i), b.m2_se(i, i)));
    CHECK(std::abs(a.m2(i, j) - b.m2(i, j)) <= 5 * std::hypot(a.m2_se(i, j), b.m2_se(i, j)));
    Vec2 lag = g.node(pairs[k].first % g.nx, pairs[k].first / g.nx) - g.node(pairs[k].second % g.nx, pairs[k].second / g.nx);
    CHECK(std::abs(b.m2(i, j) - bf()->value(lag)) <= 5 * b.m2_se(i, j));
  }
}

TEST_CASE("interpolated pair") {
  Rng rng(3);
  const Grid2D g{{0, 0}, 0.5, 2, 1};
  auto [a, b] = sample_interpolated_pair(bf(), g, 1.0, {0.4}, rng);
  CHECK(a.values == b.values);
  for (double t : {0.0, 0.5}) {
    Moments m(2);
    for (int s = 0; s < 10000; ++s) {
      auto [f1, f2] = sample_interpolated_pair(bf(), g, t, {}, rng);
      m.add(Eigen::Vector2d(f1.values[0], f2.values[0]));
    }
    CHECK(std::abs(m.m2(0, 1) - t) <= 5 * m.m2_se(0, 1));
    CHECK(std::abs(m.m2(1, 1) - 1.0) <= 5 * m.m2_se(1, 1));
  }
}

TEST_CASE("conditional pair sampler") {
  const Rect b1{0, 2, 0, 2}, b2{3, 5, 0, 2};
  const ConstraintPoint c1{{0.9, 1.1}, Stratum::interior()}, c2{{3.0, 0.6}, Stratum::edge({0, 1})};
  ConditionalPairSampler s(bf(), {0.0, 0.7}, b1, c1, b2, c2, 0.25);
  CHECK(s.constraint_size() == 3 + 2);

  // Oracle for t = 0.7: condition the joint law of (constraint, probe values,
  // Hessians) with the gaussian-core regression.
  const double t = 0.7;
  std::vector<Functional> cons = constraint_functionals(c1.x, c1.stratum, 0);
  for (auto& f : constraint_functionals(c2.x, c2.stratum, 1)) cons.push_back(f);
  const Vec2 p1{1.25, 1.1}, p2{3.0, 0.75};  // grid nodes next to the marked points
  std::vector<Functional> probes = {Functional::value(p1, 0), Functional::value(p2, 1)};
  for (auto& f : hessian_functionals(c1.x, c1.stratum, 0)) probes.push_back(f);
  for (auto& f : hessian_functionals(c2.x, c2.stratum, 1)) probes.push_back(f);
  std::vector<Functional> all = cons;
  all.insert(all.end(), probes.begin(), probes.end());
  auto joint = GaussianSpec::centred(functional_cov_matrix(*bf(), all, all, t));
  std::vector<int> given(cons.size());
  for (std::size_t i = 0; i < cons.size(); ++i) given[i] = static_cast<int>(i);
  auto oracle = condition(joint, given, Eigen::VectorXd::Zero(static_cast<int>(cons.size())));
  const int np = static_cast<int>(probes.size());

  Rng rng(21);
  Moments m(np), m0(4);
  for (int d = 0; d < 20000; ++d) {
    auto base = s.draw_base(rng);
    auto [f1, f2] = s.realize(base, 1);
    auto [n1, n2] = s.marked_node(0);
    auto [q1, q2] = s.marked_node(1);
    CHECK(std::abs(f1.at(n1, n2)) <= 1e-10);
    CHECK(std::abs(f2.at(q1, q2)) <= 1e-10);
    Eigen::VectorXd v(np);
    v[0] = f1.at(axis_index(f1.xs, p1.x), axis_index(f1.ys, p1.y));
    v[1] = f2.at(axis_index(f2.xs, p2.x), axis_index(f2.ys, p2.y));
    for (int k = 0; k < 3; ++k) v[2 + k] = f1.jets[0].hess[k];
    v[5] = f2.jets[0].hess[0];
    m.add(v);
    auto [g1, g2] = s.realize(base, 0);
    m0.add(Eigen::Vector4d(g1.jets[0].hess[0], g1.jets[0].hess[2], g2.jets[0].hess[0], 1.0));
  }
  for (int i = 0; i < np; ++i) {
    CHECK(std::abs(m.mean(i) - oracle.mean[i]) <= 5 * m.mean_se(i) + 1e-12);
    for (int j = 0; j < np; ++j) {
      INFO("entry ", i, ",", j);
      CHECK(std::abs(m.m2(i, j) - oracle.cov(i, j)) <= 5 * m.m2_se(i, j) + 1e-12);
    }
  }
  // t = 0: Hessians at x1 and x2 are independent.
  for (int i = 0; i < 2; ++i) {
    double c = m0.m2(i, 2) - m0.mean(i) * m0.mean(2);
    CHECK(std::abs(c) <= 5 * m0.m2_se(i, 2));
  }
}

TEST_CASE("conditioning at t = 1 on one point is degenerate") {
  const Rect b{0, 2, 0, 2};
  const ConstraintPoint c{{1.0, 1.0}, Stratum::interior()};
  try {
    ConditionalPairSampler s(bf(), {1.0}, b, c, b, c, 0.25);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Degenerate);
  }
}

TEST_CASE("snapped axes put the point on a grid line") {
  auto a = snapped_axis(0, 2, 0.25, 0.9);
  CHECK(axis_index(a, 0.9) >= 0);
  CHECK(a.front() == 0.0);
  CHECK(a.back() == 2.0);
  auto e = snapped_axis(0, 2, 0.25, 0.01);
  CHECK(axis_index(e, 0.01) >= 0);
  CHECK(axis_index(e, 0.0) >= 0);
  CHECK(snapped_axis(0, 1, 0.25, std::nullopt).size() == 5);
}

TEST_CASE("kostlan samples") {
  Rng rng(31);
  auto z = sample_kostlan(0, KostlanDomain::Circle, 64, rng);
  for (double v : z.values) CHECK(v == z.values[0]);

  const int n = 6;
  KostlanSampler ks(n, KostlanDomain::Circle, 64);
  Moments m(2);
  std::vector<double> v(ks.size());
  for (int d = 0; d < 10000; ++d) {
    ks.draw_values(rng, v.data());
    m.add(Eigen::Vector2d(v[0], v[5]));
  }
  const double angle = ks.xs()[5] - ks.xs()[0];
  CHECK(std::abs(m.m2(0, 1) - std::pow(std::cos(angle), n)) <= 5 * m.m2_se(0, 1));

  KostlanSampler sphere(4, KostlanDomain::Sphere, 16);
  Moments ms(2);
  std::vector<double> w(sphere.size());
  for (int d = 0; d < 10000; ++d) {
    sphere.draw_values(rng, w.data());
    ms.add(Eigen::Vector2d(w[3 * sphere.xs().size() + 2], w[9 * sphere.xs().size() + 7]));
  }
  auto unit = [](double theta, double phi) {
    return std::array<double, 3>{std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
  };
  auto u1 = unit(sphere.ys()[3], sphere.xs()[2]), u2 = unit(sphere.ys()[9], sphere.xs()[7]);
  double ip = u1[0] * u2[0] + u1[1] * u2[1] + u1[2] * u2[2];
  CHECK(std::abs(ms.m2(0, 1) - std::pow(ip, 4)) <= 5 * ms.m2_se(0, 1));
}

TEST_CASE("kostlan zero counts match the expected 2 sqrt(n)") {
  Rng rng(41);
  KostlanSampler ks(100, KostlanDomain::Circle, 4096);
  std::vector<double> v(ks.size());
  double sum = 0, sum2 = 0;
  const int draws = 1000;
  for (int d = 0; d < draws; ++d) {
    ks.draw_values(rng, v.data());
    double c = count_zero_sign_changes(v.data(), ks.size());
    sum += c;
    sum2 += c * c;
  }
  double mean = sum / draws, se = std::sqrt((sum2 / draws - mean * mean) / draws);
  CHECK(std::abs(mean - 20.0) <= 5 * se);
}

TEST_CASE("kostlan covariance approaches the local limit") {
  // Exact covariance cos^n(u / sqrt(n)) against exp(-u^2/2); the empirical
  // check runs at the smallest degree.
  double prev = 1e9;
  for (int n : {25, 100, 400}) {
    double dev = 0.0;
    for (double u = 0.0; u <= 3.0; u += 0.1) dev = std::max(dev, std::abs(std::pow(std::cos(u / std::sqrt(n)), n) - std::exp(-u * u / 2)));
    CHECK(dev < prev);
    prev = dev;
  }
  Rng rng(43);
  KostlanSampler ks(25, KostlanDomain::Circle, 400);
  std::vector<double> v(ks.size());
  Moments m(2);
  const int lag = 16;  // angle 2 pi 16 / 400, u = angle sqrt(25) about 1.26
  for (int d = 0; d < 10000; ++d) {
    ks.draw_values(rng, v.data());
    m.add(Eigen::Vector2d(v[0], v[lag]));
  }
  const double u = (ks.xs()[lag] - ks.xs()[0]) * 5.0;
  CHECK(std::abs(m.m2(0, 1) - std::pow(std::cos(u / 5.0), 25)) <= 5 * m.m2_se(0, 1));
}

TEST_CASE("field export round trips") {
  Rng rng(51);
  auto f = sample_stationary(bf(), Grid2D::covering({0, 1, 0, 0.5}, 0.25), {}, rng);
  std::stringstream csv, bin;
  write_field_csv(f, csv);
  auto g = read_field_csv(csv);
  CHECK(g.xs == f.xs);
  CHECK(g.ys == f.ys);
  for (std::size_t i = 0; i < f.values.size(); ++i) CHECK(g.values[i] == doctest::Approx(f.values[i]).epsilon(1e-15));
  write_field_binary(f, bin);
  auto b = read_field_binary(bin);
  CHECK(b.values == f.values);
}

TEST_CASE("invalid grids are rejected") {
  CHECK_THROWS_AS(Grid2D::covering({0, 1, 0, 1}, 0.3), Error);
  CHECK_THROWS_AS(Grid2D::covering({0, 1, 0, 1}, -0.25), Error);
}
