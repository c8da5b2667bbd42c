#include "topocov/formula.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <json.hpp>

#include "topocov/parallel.hpp"
#include "topocov/rng.hpp"
#include "topocov/sampler.hpp"

namespace topocov {

namespace {

constexpr int kBatches = 20;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double hessian_det(const double* h, int dim) {
  if (dim == 2) return h[0] * h[2] - h[1] * h[1];
  if (dim == 1) return h[0];
  return 1.0;
}

void check_events(const EventSpec& e1, const EventSpec& e2, double h) {
  for (const EventSpec* e : {&e1, &e2}) {
    const Rect& r = e->box.rect;
    require(r.width() > 0 && r.height() > 0, ErrorKind::Validation, "event box must have positive side lengths");
    Grid2D::covering(r, h);
  }
}

// Per-t means of the positive and negative pivotal weights at one node pair.
struct NodeResult {
  std::vector<double> plus, minus;
  double z_mean = 0.0;  // mean over draws of sum_k w_k (Y+_k - Y-_k)
  double z_var = 0.0;   // sample variance of that sum
  long n = 0;
};

NodeResult integrate_pair(const KernelPtr& kernel, MeanFunction mean, const EventSpec& event1,
                          const EventSpec& event2, Vec2 x1, const Stratum& F1, Vec2 x2, const Stratum& F2,
                          const QuadRule& t_rule, long n_mc, std::uint64_t seed, double h, PivotStencil stencil,
                          bool corners) {
  const int nt = t_rule.size();
  NodeResult out;
  out.plus.assign(nt, 0.0);
  out.minus.assign(nt, 0.0);
  out.n = n_mc;
  if ((!corners && (F1.dim == 0 || F2.dim == 0)) || n_mc <= 0) return out;

  // Level-l events of a mean-m field are level-0 events of the field shifted by -l.
  MeanFunction shifted{mean.level - event1.level};
  EventSpec e1 = event1, e2 = event2;
  e1.level = e2.level = 0.0;
  ConditionalPairSampler sampler(kernel, t_rule.nodes, e1.box.rect, {x1, F1}, e2.box.rect, {x2, F2}, h, shifted);
  const int nx1 = static_cast<int>(sampler.xs(0).size()), ny1 = static_cast<int>(sampler.ys(0).size());
  const int nx2 = static_cast<int>(sampler.xs(1).size()), ny2 = static_cast<int>(sampler.ys(1).size());
  PivotalTester tester1(e1, nx1, ny1, sampler.marked_node(0).first, sampler.marked_node(0).second, stencil);
  PivotalTester tester2(e2, nx2, ny2, sampler.marked_node(1).first, sampler.marked_node(1).second, stencil);

  Rng rng(seed);
  ConditionalPairSampler::BaseDraw base;
  Eigen::VectorXd s1, s2;
  std::vector<double> r(sampler.constraint_size()), v1(nx1 * ny1), v2(nx2 * ny2);
  double h1[3], h2[3];
  std::vector<double> sum_plus(nt, 0.0), sum_minus(nt, 0.0);
  double z_sum = 0.0, z_sq = 0.0;
  for (long d = 0; d < n_mc; ++d) {
    sampler.draw_base(rng, base, s1, s2);
    double z = 0.0;
    for (int k = 0; k < nt; ++k) {
      sampler.residual(base, k, r.data());
      sampler.realize_grid(base, k, 0, r.data(), v1.data());
      int sign1 = tester1.sign(v1.data());
      if (!sign1) continue;
      sampler.realize_grid(base, k, 1, r.data(), v2.data());
      int sign2 = tester2.sign(v2.data());
      if (!sign2) continue;
      sampler.realize_hessian(base, k, 0, r.data(), h1);
      sampler.realize_hessian(base, k, 1, r.data(), h2);
      double y = sampler.gamma(k) * std::abs(hessian_det(h1, F1.dim) * hessian_det(h2, F2.dim));
      if (sign1 * sign2 > 0) {
        sum_plus[k] += y;
        z += t_rule.weights[k] * y;
      } else {
        sum_minus[k] += y;
        z -= t_rule.weights[k] * y;
      }
    }
    z_sum += z;
    z_sq += z * z;
  }
  for (int k = 0; k < nt; ++k) {
    out.plus[k] = sum_plus[k] / n_mc;
    out.minus[k] = sum_minus[k] / n_mc;
  }
  out.z_mean = z_sum / n_mc;
  out.z_var = n_mc > 1 ? std::max(0.0, (z_sq - n_mc * out.z_mean * out.z_mean) / (n_mc - 1)) : 0.0;
  return out;
}

}  // namespace

// ---------------------------------------------------------------- lhs

Estimate estimate_lhs(KernelPtr kernel, MeanFunction mean, const EventSpec& event1, const EventSpec& event2, long n,
                      std::uint64_t seed, double h, int workers) {
  require(n >= 1000, ErrorKind::Validation, "estimate_lhs: at least 10^3 draws required");
  check_events(event1, event2, h);
  Vec2 c1 = event1.box.rect.centre(), c2 = event2.box.rect.centre();
  if (c1.x != c2.x || c1.y != c2.y) {
    auto nd = check_nondegeneracy(*kernel, c1, c2);
    if (!nd.pass) fail(ErrorKind::Degenerate, "estimate_lhs: non-degeneracy check failed at the box centres");
  }
  GridSampler sampler(kernel, {Grid2D::covering(event1.box.rect, h), Grid2D::covering(event2.box.rect, h)}, mean);
  const Grid2D g1 = sampler.grids()[0], g2 = sampler.grids()[1];
  std::vector<IndicatorCounts> batches(kBatches);
  parallel_for(kBatches, workers, [&](long b) {
    long nb = n / kBatches + (b < n % kBatches ? 1 : 0);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
    std::vector<double> all(sampler.total_nodes());
    FieldSample s1 = FieldSample::on_grid(g1), s2 = FieldSample::on_grid(g2);
    IndicatorCounts counts;
    for (long d = 0; d < nb; ++d) {
      sampler.draw_values(rng, all.data());
      std::copy(all.begin(), all.begin() + g1.size(), s1.values.begin());
      std::copy(all.begin() + g1.size(), all.end(), s2.values.begin());
      counts.add(event_occurs(s1, event1), event_occurs(s2, event2));
    }
    batches[b] = counts;
  });
  return batch_covariance(batches);
}

// ---------------------------------------------------------------- densities and intensities

double gamma_at_zero(const StationaryKernel& kernel, double t, Vec2 x1, const Stratum& F1, Vec2 x2, const Stratum& F2,
                     MeanFunction mean) {
  require(t >= 0.0 && t <= 1.0, ErrorKind::Validation, "gamma_at_zero: t must lie in [0, 1]");
  auto c = constraint_functionals(x1, F1, 0);
  auto c2 = constraint_functionals(x2, F2, 1);
  const int n1 = static_cast<int>(c.size());
  c.insert(c.end(), c2.begin(), c2.end());
  Eigen::MatrixXd cov = functional_cov_matrix(kernel, c, c, t);
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(cov.rows());
  mu[0] = mean.level;
  mu[n1] = mean.level;
  GaussianSpec law(mu, 0.5 * (cov + cov.transpose()));
  return density_at(law, Eigen::VectorXd::Zero(cov.rows()));
}

PivotalIntensityEstimate pivotal_intensity(KernelPtr kernel, MeanFunction mean, double t, Vec2 x1, int j1, Vec2 x2,
                                           int j2, const EventSpec& event1, const EventSpec& event2, long n_mc,
                                           std::uint64_t seed, double h, PivotStencil stencil, bool corners) {
  PivotalIntensityEstimate est;
  est.t = t;
  est.x1 = x1;
  est.x2 = x2;
  est.dim1 = event1.box.stratum_dim(j1);
  est.dim2 = event2.box.stratum_dim(j2);
  if (!corners && (est.dim1 == 0 || est.dim2 == 0)) return est;
  est.n_samples = n_mc;
  require(event1.level == event2.level, ErrorKind::Unsupported, "pivotal intensity: events must share one level");
  QuadRule single;
  single.nodes = {t};
  single.weights = {1.0};
  NodeResult r = integrate_pair(kernel, mean, event1, event2, x1, event1.box.stratum(j1), x2,
                                event2.box.stratum(j2), single, n_mc, seed, h, stencil, corners);
  est.plus = r.plus[0];
  est.minus = r.minus[0];
  est.mc_se = std::sqrt(r.z_var / std::max<long>(1, n_mc));
  return est;
}

std::vector<double> hessian_weight_profile(KernelPtr kernel, MeanFunction mean, Vec2 x1, const Stratum& F1, Vec2 x2,
                                           const Stratum& F2, const QuadRule& t_rule, long n_mc, std::uint64_t seed) {
  Rect b1{x1.x - 0.5, x1.x + 0.5, x1.y - 0.5, x1.y + 0.5};
  Rect b2{x2.x - 0.5, x2.x + 0.5, x2.y - 0.5, x2.y + 0.5};
  ConditionalPairSampler sampler(kernel, t_rule.nodes, b1, {x1, F1}, b2, {x2, F2}, 0.5, mean);
  Rng rng(seed);
  std::vector<double> out(t_rule.size(), 0.0), r(sampler.constraint_size());
  ConditionalPairSampler::BaseDraw base;
  Eigen::VectorXd s1, s2;
  double h1[3], h2[3];
  for (long d = 0; d < n_mc; ++d) {
    sampler.draw_base(rng, base, s1, s2);
    for (int k = 0; k < t_rule.size(); ++k) {
      sampler.residual(base, k, r.data());
      sampler.realize_hessian(base, k, 0, r.data(), h1);
      sampler.realize_hessian(base, k, 1, r.data(), h2);
      out[k] += std::abs(hessian_det(h1, F1.dim) * hessian_det(h2, F2.dim));
    }
  }
  for (int k = 0; k < t_rule.size(); ++k) out[k] *= sampler.gamma(k) / n_mc;
  return out;
}

// ---------------------------------------------------------------- rhs

double FormulaReport::rhs_se() const {
  return std::sqrt(rhs_mc_se * rhs_mc_se + rhs_quadrature_error * rhs_quadrature_error);
}

FormulaReport estimate_rhs(KernelPtr kernel, MeanFunction mean, const EventSpec& event1, const EventSpec& event2,
                           const FormulaOptions& opt, std::uint64_t seed) {
  auto t0 = std::chrono::steady_clock::now();
  require(opt.spatial_nodes >= 1 && opt.t_nodes >= 1 && opt.n_mc >= 1, ErrorKind::Validation,
          "estimate_rhs: node counts and draws must be positive");
  check_events(event1, event2, opt.h);
  require(event1.level == event2.level, ErrorKind::Unsupported, "estimate_rhs: events must share one level");
  const Rect& r1 = event1.box.rect;
  const Rect& r2 = event2.box.rect;
  if (!rects_disjoint(r1, r2) && !(opt.delta > 0.0))
    fail(ErrorKind::NonDisjoint, "estimate_rhs: boxes overlap or touch; set a diagonal exclusion radius delta");

  FormulaReport rep;
  rep.kernel = kernel->name();
  rep.kernel_params = kernel->params();
  rep.mean = mean.level;
  rep.box1 = r1;
  rep.box2 = r2;
  rep.options = opt;
  rep.rhs_seed = seed;
  QuadRule t_rule = sine_substituted_unit(opt.t_nodes);
  QuadRule theta = gauss_legendre(opt.t_nodes, 0.0, std::numbers::pi / 2.0);
  rep.t_nodes = t_rule.nodes;
  rep.t_weights = t_rule.weights;
  QuadRule unit = gauss_legendre(opt.spatial_nodes, 0.0, 1.0);

  struct Node {
    Vec2 x;
    double w;
  };
  auto stratum_nodes = [&](const StratifiedBox& box, int j) {
    std::vector<Node> out;
    int dim = box.stratum_dim(j);
    double m = box.stratum_measure(j);
    if (dim == 2) {
      for (int b = 0; b < unit.size(); ++b)
        for (int a = 0; a < unit.size(); ++a)
          out.push_back({box.stratum_point(j, unit.nodes[a], unit.nodes[b]), m * unit.weights[a] * unit.weights[b]});
    } else if (dim == 1) {
      for (int a = 0; a < unit.size(); ++a) out.push_back({box.stratum_point(j, unit.nodes[a]), m * unit.weights[a]});
    } else if (opt.corner_strata) {
      out.push_back({box.stratum_point(j, 0.0), 1.0});
    }
    return out;
  };

  struct Task {
    int j1, j2;
    Node n1, n2;
    double K;
  };
  std::vector<Task> tasks;
  const int strata = opt.corner_strata ? StratifiedBox::kStrata : 5;
  for (int j1 = 0; j1 < strata; ++j1)
    for (int j2 = 0; j2 < strata; ++j2)
      for (const Node& a : stratum_nodes(event1.box, j1))
        for (const Node& b : stratum_nodes(event2.box, j2)) {
          if (opt.delta > 0.0 && norm(a.x - b.x) < opt.delta) continue;
          tasks.push_back({j1, j2, a, b, kernel->value(a.x - b.x)});
        }

  std::vector<NodeResult> results(tasks.size());
  parallel_for(static_cast<long>(tasks.size()), opt.workers, [&](long p) {
    const Task& tk = tasks[p];
    if (tk.K == 0.0) {
      results[p].plus.assign(t_rule.size(), 0.0);
      results[p].minus.assign(t_rule.size(), 0.0);
      return;
    }
    results[p] = integrate_pair(kernel, mean, event1, event2, tk.n1.x, event1.box.stratum(tk.j1), tk.n2.x,
                                event2.box.stratum(tk.j2), t_rule, opt.n_mc, derive_seed(seed, p), opt.h, opt.stencil,
                                opt.corner_strata);
  });

  rep.breakdown.resize(StratifiedBox::kStrata * StratifiedBox::kStrata);
  for (int j1 = 0; j1 < StratifiedBox::kStrata; ++j1)
    for (int j2 = 0; j2 < StratifiedBox::kStrata; ++j2) {
      auto& c = rep.breakdown[j1 * StratifiedBox::kStrata + j2];
      c.j1 = j1;
      c.j2 = j2;
    }
  std::vector<double> var(rep.breakdown.size(), 0.0);
  rep.t_integrand.assign(t_rule.size(), 0.0);
  for (std::size_t p = 0; p < tasks.size(); ++p) {
    const Task& tk = tasks[p];
    const NodeResult& nr = results[p];
    double w = tk.n1.w * tk.n2.w * tk.K;
    double value = 0.0;
    for (int k = 0; k < t_rule.size(); ++k) {
      double diff = nr.plus[k] - nr.minus[k];
      value += t_rule.weights[k] * diff;
      rep.t_integrand[k] += w * diff;
    }
    auto& c = rep.breakdown[tk.j1 * StratifiedBox::kStrata + tk.j2];
    c.kernel_min = c.node_pairs == 0 ? tk.K : std::min(c.kernel_min, tk.K);
    c.node_pairs += 1;
    c.value += w * value;
    if (nr.n > 0) var[tk.j1 * StratifiedBox::kStrata + tk.j2] += w * w * nr.z_var / nr.n;
  }
  double total_var = 0.0;
  for (std::size_t q = 0; q < rep.breakdown.size(); ++q) {
    rep.breakdown[q].mc_se = std::sqrt(var[q]);
    rep.rhs += rep.breakdown[q].value;
    total_var += var[q];
  }
  rep.rhs_mc_se = std::sqrt(total_var);
  std::vector<double> theta_values(t_rule.size());
  for (int k = 0; k < t_rule.size(); ++k) theta_values[k] = rep.t_integrand[k] * std::cos(theta.nodes[k]);
  rep.rhs_quadrature_error = legendre_tail_estimate(theta, theta_values, 0.0, std::numbers::pi / 2.0);
  rep.rhs_seconds = seconds_since(t0);
  return rep;
}

FormulaReport run_formula(KernelPtr kernel, MeanFunction mean, const EventSpec& event1, const EventSpec& event2,
                          const FormulaOptions& options, std::uint64_t seed, bool with_lhs) {
  std::uint64_t rhs_seed = derive_seed(seed, 2);
  FormulaReport rep = estimate_rhs(kernel, mean, event1, event2, options, rhs_seed);
  rep.seed = seed;
  if (with_lhs) {
    auto t0 = std::chrono::steady_clock::now();
    rep.lhs_seed = derive_seed(seed, 1);
    rep.lhs = estimate_lhs(kernel, mean, event1, event2, options.n_lhs, rep.lhs_seed, options.h, options.workers);
    rep.lhs_seconds = seconds_since(t0);
  }
  return rep;
}

double formula_residual(const FormulaReport& report) {
  double se = std::sqrt(report.lhs.se * report.lhs.se + report.rhs_se() * report.rhs_se());
  double diff = report.lhs.value - report.rhs;
  if (se == 0.0) return diff == 0.0 ? 0.0 : (diff > 0 ? INFINITY : -INFINITY);
  return diff / se;
}

// ---------------------------------------------------------------- serialization

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

nlohmann::json rect_json(const Rect& r) { return {r.x0, r.x1, r.y0, r.y1}; }

}  // namespace

std::string formula_json(const FormulaReport& rep) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["kernel"] = {{"name", rep.kernel}, {"params", rep.kernel_params}};
  j["mean"] = rep.mean;
  j["box1"] = rect_json(rep.box1);
  j["box2"] = rect_json(rep.box2);
  j["lhs"] = {{"value", rep.lhs.value}, {"se", rep.lhs.se}};
  j["rhs"] = {{"value", rep.rhs},
              {"mc_se", rep.rhs_mc_se},
              {"quadrature_error", rep.rhs_quadrature_error},
              {"se", rep.rhs_se()}};
  j["residual"] = formula_residual(rep);
  j["t_grid"] = {{"nodes", rep.t_nodes}, {"weights", rep.t_weights}, {"integrand", rep.t_integrand}};
  nlohmann::json bd = nlohmann::json::array();
  for (const auto& c : rep.breakdown)
    bd.push_back({{"stratum1", StratifiedBox::stratum_name(c.j1)},
                  {"stratum2", StratifiedBox::stratum_name(c.j2)},
                  {"value", c.value},
                  {"mc_se", c.mc_se},
                  {"node_pairs", c.node_pairs},
                  {"kernel_min", c.kernel_min}});
  j["breakdown"] = bd;
  const auto& o = rep.options;
  j["options"] = {{"h", o.h},         {"spatial_nodes", o.spatial_nodes}, {"t_nodes", o.t_nodes},
                  {"n_mc", o.n_mc},   {"n_lhs", o.n_lhs},                 {"delta", o.delta},
                  {"corner_strata", o.corner_strata},
                  {"stencil", o.stencil == PivotStencil::Block ? "block" : (o.stencil == PivotStencil::Plus ? "plus" : "node")}};
  j["seeds"] = {{"master", rep.seed}, {"lhs", rep.lhs_seed}, {"rhs", rep.rhs_seed}};
  j["runtime_seconds"] = {{"lhs", rep.lhs_seconds}, {"rhs", rep.rhs_seconds}};
  return j.dump(2);
}

std::string formula_csv_header() { return "lhs,lhs_se,rhs,rhs_err,residual"; }

std::string formula_csv_row(const FormulaReport& rep) {
  return fmt(rep.lhs.value) + "," + fmt(rep.lhs.se) + "," + fmt(rep.rhs) + "," + fmt(rep.rhs_se()) + "," +
         fmt(formula_residual(rep));
}

}  // namespace topocov
