#include "topocov/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "topocov/parallel.hpp"
#include "topocov/quadrature.hpp"
#include "topocov/sampler.hpp"

namespace topocov {

namespace {

constexpr int kBatches = 20;

std::string point_str(Vec2 p) {
  std::ostringstream s;
  s << "(" << p.x << ", " << p.y << ")";
  return s.str();
}

std::vector<Functional> gradient_functionals(Vec2 x, const Stratum& F) {
  std::vector<Functional> out;
  for (int a = 0; a < F.dim; ++a) out.push_back(Functional::first(x, F.tangent[a]));
  return out;
}

double op_norm(const Eigen::VectorXd& h, int dim) {
  if (dim == 1) return std::abs(h[0]);
  double m = 0.5 * (h[0] + h[2]);
  double r = std::hypot(0.5 * (h[0] - h[2]), h[1]);
  return std::abs(m) + r;
}

std::vector<double> probe_coords(int probe) {
  if (probe <= 1) return {0.5};
  std::vector<double> u(probe);
  for (int k = 0; k < probe; ++k) u[k] = static_cast<double>(k) / (probe - 1);
  return u;
}

std::vector<Vec2> probe_points(const StratifiedBox& box, int j, int probe) {
  std::vector<Vec2> out;
  int dim = box.stratum_dim(j);
  auto u = probe_coords(probe);
  if (dim == 0) {
    out.push_back(box.stratum_point(j, 0.0));
  } else if (dim == 1) {
    for (double a : u) out.push_back(box.stratum_point(j, a));
  } else {
    for (double b : u)
      for (double a : u) out.push_back(box.stratum_point(j, a, b));
  }
  return out;
}

struct WeightedPoint {
  Vec2 x;
  double w;
};

std::vector<WeightedPoint> stratum_quadrature(const StratifiedBox& box, int j, int nodes) {
  int dim = box.stratum_dim(j);
  if (dim == 0) return {{box.stratum_point(j, 0.0), 1.0}};
  const Rect& r = box.rect;
  auto panels_for = [](double len) { return std::max(1, static_cast<int>(std::ceil(len - 1e-12))); };
  auto unit_rule = [&](double len) {
    int p = panels_for(len);
    std::vector<double> br(p + 1);
    for (int k = 0; k <= p; ++k) br[k] = static_cast<double>(k) / p;
    return composite_gauss_legendre(nodes, br);
  };
  std::vector<WeightedPoint> out;
  if (dim == 1) {
    double len = (j == 1 || j == 2) ? r.height() : r.width();
    QuadRule q = unit_rule(len);
    for (int a = 0; a < q.size(); ++a) out.push_back({box.stratum_point(j, q.nodes[a]), q.weights[a] * len});
  } else {
    QuadRule qx = unit_rule(r.width()), qy = unit_rule(r.height());
    for (int b = 0; b < qy.size(); ++b)
      for (int a = 0; a < qx.size(); ++a)
        out.push_back({box.stratum_point(j, qx.nodes[a], qy.nodes[b]), qx.weights[a] * qy.weights[b] * r.area()});
  }
  return out;
}

// Groups events sharing (box, level, sign) so each box is labelled once per draw.
class FamilyEvaluator {
 public:
  FamilyEvaluator(const std::vector<EventSpec>& events, const std::vector<Rect>& rects) : events_(events) {
    for (const EventSpec& e : events) {
      int r = -1;
      for (std::size_t k = 0; k < rects.size(); ++k)
        if (same_rect(rects[k], e.box.rect)) r = static_cast<int>(k);
      require(r >= 0, ErrorKind::Contract, "event box missing from the sampler grids");
      bool neg = e.sign == EventSign::Leq;
      int g = -1;
      for (std::size_t k = 0; k < groups_.size(); ++k)
        if (groups_[k].rect == r && groups_[k].negated == neg && groups_[k].level == e.level) g = static_cast<int>(k);
      if (g < 0) {
        groups_.push_back({r, e.box.rect, neg, e.level});
        g = static_cast<int>(groups_.size()) - 1;
      }
      group_of_.push_back(g);
    }
  }

  void evaluate(const std::vector<FieldSample>& samples, std::vector<char>& bits) const {
    std::vector<LabeledExcursion> labels;
    labels.reserve(groups_.size());
    for (const Group& g : groups_) {
      labels.push_back(label_excursion(samples[g.rect], g.box, g.level, g.negated));
    }
    bits.resize(events_.size());
    for (std::size_t k = 0; k < events_.size(); ++k) bits[k] = event_holds(labels[group_of_[k]], events_[k]);
  }

  static bool same_rect(const Rect& a, const Rect& b) {
    return a.x0 == b.x0 && a.x1 == b.x1 && a.y0 == b.y0 && a.y1 == b.y1;
  }

 private:
  struct Group {
    int rect;
    Rect box;
    bool negated;
    double level;
  };
  std::vector<EventSpec> events_;
  std::vector<Group> groups_;
  std::vector<int> group_of_;
};

// Distinct rectangles of the events, in first-seen order.
std::vector<Rect> distinct_rects(const std::vector<const std::vector<EventSpec>*>& families) {
  std::vector<Rect> out;
  for (const auto* fam : families)
    for (const EventSpec& e : *fam) {
      bool seen = false;
      for (const Rect& r : out) seen = seen || FamilyEvaluator::same_rect(r, e.box.rect);
      if (!seen) out.push_back(e.box.rect);
    }
  return out;
}

// Joint sampler over the rectangles that hands out per-grid FieldSamples.
struct MultiBoxDraw {
  MultiBoxDraw(KernelPtr kernel, const std::vector<Rect>& rects, double h, MeanFunction mean) {
    std::vector<Grid2D> grids;
    for (const Rect& r : rects) grids.push_back(Grid2D::covering(r, h));
    sampler = std::make_unique<GridSampler>(std::move(kernel), grids, mean);
  }
  void draw(Rng& rng, std::vector<FieldSample>& out, std::vector<double>& scratch) const {
    const auto& grids = sampler->grids();
    if (out.size() != grids.size()) {
      out.clear();
      for (const Grid2D& g : grids) out.push_back(FieldSample::on_grid(g));
    }
    scratch.resize(sampler->total_nodes());
    sampler->draw_values(rng, scratch.data());
    std::size_t off = 0;
    for (std::size_t k = 0; k < grids.size(); ++k) {
      std::copy(scratch.begin() + off, scratch.begin() + off + grids[k].size(), out[k].values.begin());
      off += grids[k].size();
    }
  }
  std::unique_ptr<GridSampler> sampler;
};

}  // namespace

// ---------------------------------------------------------------- mixing constants

GaussianSpec conditional_hessian_law(const StationaryKernel& kernel, Vec2 x, const Stratum& F,
                                     bool condition_on_value) {
  auto hess = hessian_functionals(x, F);
  const int nh = static_cast<int>(hess.size());
  if (nh == 0) return {};
  std::vector<Functional> cond = condition_on_value ? constraint_functionals(x, F) : gradient_functionals(x, F);
  Eigen::MatrixXd chh = functional_cov_matrix(kernel, hess, hess);
  Eigen::MatrixXd chc = functional_cov_matrix(kernel, hess, cond);
  Eigen::MatrixXd ccc = functional_cov_matrix(kernel, cond, cond);
  Eigen::MatrixXd cov = chh - chc * ccc.ldlt().solve(chc.transpose());
  return GaussianSpec::centred(0.5 * (cov + cov.transpose()));
}

Estimate conditional_hessian_moment(const StationaryKernel& kernel, Vec2 x, const Stratum& F, long n_mc, Rng& rng,
                                    bool condition_on_value) {
  require(n_mc >= 2, ErrorKind::Validation, "conditional_hessian_moment: at least 2 draws required");
  GaussianSpec law = conditional_hessian_law(kernel, x, F, condition_on_value);
  if (law.size() == 0) return {};
  Eigen::MatrixXd L = psd_factor(law.cov);
  Eigen::VectorXd z(L.cols()), h;
  double sum = 0.0, sq = 0.0;
  for (long d = 0; d < n_mc; ++d) {
    rng.fill_normal(z.data(), z.size());
    h = L * z;
    double v = op_norm(h, F.dim);
    v *= v;
    sum += v;
    sq += v * v;
  }
  double m = sum / n_mc;
  double var = std::max(0.0, (sq - n_mc * m * m) / (n_mc - 1));
  return {m, std::sqrt(var / n_mc)};
}

MixingConstantDetail mixing_constant_detail(const StationaryKernel& kernel, const StratifiedBox& box1, int j1,
                                            const StratifiedBox& box2, int j2, long n_mc, Rng& rng,
                                            const MixingOptions& options) {
  require(options.probe >= 1, ErrorKind::Validation, "mixing_constant: probe count must be positive");
  const Stratum F[2] = {box1.stratum(j1), box2.stratum(j2)};
  const int d[2] = {F[0].dim, F[1].dim};
  MixingConstantDetail out;
  const StratifiedBox* boxes[2] = {&box1, &box2};
  const int js[2] = {j1, j2};
  for (int i = 0; i < 2; ++i)
    out.hessian_moment[i] = conditional_hessian_moment(kernel, boxes[i]->stratum_point(js[i], 0.5, 0.5), F[i], n_mc,
                                                       rng, options.condition_on_value);

  auto p1 = probe_points(box1, j1, options.probe);
  auto p2 = probe_points(box2, j2, options.probe);
  const double k0 = kernel.variance();
  out.min_det_delta = std::numeric_limits<double>::infinity();
  for (Vec2 x1 : p1)
    for (Vec2 x2 : p2) {
      Eigen::MatrixXd delta = build_delta_matrix(kernel, x1, F[0], x2, F[1]).cov;
      double det = delta.determinant();
      double scale = delta.diagonal().prod();
      if (!(det > 1e-12 * scale))
        fail(ErrorKind::Degenerate, "mixing_constant: degenerate covariance at x1=" + point_str(x1) +
                                        ", x2=" + point_str(x2));
      const double root = std::sqrt(det);
      const Vec2 xs[2] = {x1, x2};
      for (int i = 0; i < 2; ++i) {
        double lead = std::pow(out.hessian_moment[i].value, d[i]) / root;
        for (int k = 0; k < 2; ++k) {
          auto g = gradient_functionals(xs[k], F[i]);
          double det_g = g.empty() ? 1.0 : functional_cov_matrix(kernel, g, g).determinant();
          // K(x_j, x_j) is the variance for every j.
          double inner = std::pow(k0 * det_g / root, 2 * d[i]);
          out.value = std::max(out.value, lead * std::max(1.0, inner));
        }
      }
      if (det < out.min_det_delta) {
        out.min_det_delta = det;
        out.argmin_x1 = x1;
        out.argmin_x2 = x2;
      }
      ++out.probe_pairs;
    }
  return out;
}

double mixing_constant(const StationaryKernel& kernel, int j1, int j2, const Rect& box1, const Rect& box2, long n_mc,
                       Rng& rng, const MixingOptions& options) {
  StratifiedBox b1{box1}, b2{box2};
  require(j1 >= 0 && j1 < StratifiedBox::kStrata && j2 >= 0 && j2 < StratifiedBox::kStrata, ErrorKind::Validation,
          "mixing_constant: stratum index out of range");
  return mixing_constant_detail(kernel, b1, j1, b2, j2, n_mc, rng, options).value;
}

double face_integral(const StationaryKernel& kernel, const StratifiedBox& box1, int j1, const StratifiedBox& box2,
                     int j2, int nodes_per_panel) {
  auto q1 = stratum_quadrature(box1, j1, nodes_per_panel);
  auto q2 = stratum_quadrature(box2, j2, nodes_per_panel);
  double sum = 0.0;
  for (const auto& a : q1) {
    double inner = 0.0;
    for (const auto& b : q2) inner += b.w * std::abs(kernel.value(a.x - b.x));
    sum += a.w * inner;
  }
  return sum;
}

MixingBoundReport mixing_bound(const StationaryKernel& kernel, const Rect& box1, const Rect& box2, double c_d,
                               const MixingBoundOptions& options) {
  require(c_d >= 0.0, ErrorKind::Validation, "mixing_bound: c_d must be non-negative");
  if (!rects_disjoint(box1, box2)) fail(ErrorKind::NonDisjoint, "mixing_bound: boxes must be disjoint");
  StratifiedBox b1{box1}, b2{box2};
  MixingBoundReport rep;
  rep.c_d = c_d;
  const int strata = options.corner_strata ? StratifiedBox::kStrata : 5;
  double sum = 0.0;
  for (int j1 = 0; j1 < strata; ++j1)
    for (int j2 = 0; j2 < strata; ++j2) {
      Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(j1 * StratifiedBox::kStrata + j2)));
      MixingPairTerm t;
      t.j1 = j1;
      t.j2 = j2;
      t.face_integral = face_integral(kernel, b1, j1, b2, j2, options.nodes_per_panel);
      t.constant = mixing_constant_detail(kernel, b1, j1, b2, j2, options.n_mc, rng, options.mixing).value;
      sum += t.constant * t.face_integral;
      rep.terms.push_back(t);
    }
  rep.bound = c_d * sum;
  return rep;
}

EnvelopeFit fit_envelope(const std::vector<double>& x, const std::vector<double>& y, const StationaryKernel& kernel,
                         double power, const std::vector<double>& c4_grid) {
  require(x.size() == y.size() && !x.empty(), ErrorKind::Validation, "fit_envelope: x and y must match");
  EnvelopeFit best;
  best.spread = std::numeric_limits<double>::infinity();
  for (double c4 : c4_grid) {
    double hi = 0.0, lo = std::numeric_limits<double>::infinity();
    bool ok = true;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double shape = std::pow(x[i], power) * kappa_bar(kernel, c4 * x[i]);
      if (!(shape > 0.0)) {
        ok = ok && y[i] <= 0.0;
        continue;
      }
      double r = y[i] / shape;
      hi = std::max(hi, r);
      if (y[i] > 0.0) lo = std::min(lo, r);
    }
    if (!ok) continue;
    double spread = lo > 0.0 && std::isfinite(lo) ? hi / lo : std::numeric_limits<double>::infinity();
    if (spread < best.spread || best.c4 == 0.0) {
      best = {hi, c4, spread};
    }
  }
  return best;
}

// ---------------------------------------------------------------- empirical alpha

std::vector<EventSpec> crossing_family(const Rect& box, double level) {
  return {EventSpec::crossing(box, Direction::LeftRight, EventSign::Geq, level),
          EventSpec::crossing(box, Direction::BottomTop, EventSign::Geq, level),
          EventSpec::crossing(box, Direction::LeftRight, EventSign::Leq, level),
          EventSpec::crossing(box, Direction::BottomTop, EventSign::Leq, level)};
}

std::vector<EventSpec> default_event_family(const Rect& box, double level) {
  auto out = crossing_family(box, level);
  for (EventSign s : {EventSign::Geq, EventSign::Leq})
    for (int thr : {1, 2}) out.push_back(EventSpec::count_at_least(box, thr, s, level));
  return out;
}

AlphaEstimate empirical_alpha(KernelPtr kernel, const std::vector<EventSpec>& family1,
                              const std::vector<EventSpec>& family2, long n, std::uint64_t seed, double h,
                              int workers, MeanFunction mean) {
  require(!family1.empty() && !family2.empty(), ErrorKind::Validation, "empirical_alpha: empty event family");
  require(n >= kBatches, ErrorKind::Validation, "empirical_alpha: too few draws");
  auto rects = distinct_rects({&family1, &family2});
  MultiBoxDraw draw(kernel, rects, h, mean);
  FamilyEvaluator ev1(family1, rects), ev2(family2, rects);
  const std::size_t m1 = family1.size(), m2 = family2.size();
  std::vector<std::vector<IndicatorCounts>> batches(kBatches);
  parallel_for(kBatches, workers, [&](long b) {
    long nb = n / kBatches + (b < n % kBatches ? 1 : 0);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
    std::vector<FieldSample> samples;
    std::vector<double> scratch;
    std::vector<char> bits1, bits2;
    std::vector<IndicatorCounts> counts(m1 * m2);
    for (long d = 0; d < nb; ++d) {
      draw.draw(rng, samples, scratch);
      ev1.evaluate(samples, bits1);
      ev2.evaluate(samples, bits2);
      for (std::size_t a = 0; a < m1; ++a)
        for (std::size_t c = 0; c < m2; ++c) counts[a * m2 + c].add(bits1[a], bits2[c]);
    }
    batches[b] = std::move(counts);
  });
  AlphaEstimate out;
  out.n = n;
  out.pairs.resize(m1 * m2);
  std::vector<IndicatorCounts> per(kBatches);
  for (std::size_t p = 0; p < m1 * m2; ++p) {
    for (int b = 0; b < kBatches; ++b) per[b] = batches[b][p];
    out.pairs[p] = batch_covariance(per);
    if (std::abs(out.pairs[p].value) > out.value || p == 0) {
      out.value = std::abs(out.pairs[p].value);
      out.se = out.pairs[p].se;
      out.best1 = static_cast<int>(p / m2);
      out.best2 = static_cast<int>(p % m2);
    }
  }
  return out;
}

// ---------------------------------------------------------------- concentration

double concentration_envelope(const StationaryKernel& kernel, double s, double r, double C, double c_B) {
  double q = (s / r) * (s / r);
  return std::exp(-C * q) + std::exp(c_B * q) * (r * s) * (r * s) * kappa_bar(kernel, r);
}

ConcentrationTable concentration_experiment(KernelPtr kernel, const Rect& box, const std::vector<double>& scales,
                                            long n, std::uint64_t seed, const ConcentrationOptions& opt,
                                            MeanFunction mean) {
  require(!scales.empty(), ErrorKind::Validation, "concentration: no scales");
  for (std::size_t k = 0; k < scales.size(); ++k) {
    require(scales[k] >= 1.0, ErrorKind::Validation, "concentration: scales must be at least 1");
    require(k == 0 || scales[k] > scales[k - 1], ErrorKind::Validation, "concentration: scales must increase");
  }
  require(n >= 2 * kBatches, ErrorKind::Validation, "concentration: too few draws");
  ConcentrationTable tab;
  tab.n = n;
  tab.C = opt.C;
  tab.c_B = opt.c_B;
  std::vector<std::vector<double>> normalised(scales.size());
  for (std::size_t k = 0; k < scales.size(); ++k) {
    const double s = scales[k];
    Rect rs = box.scaled(s);
    Grid2D g = Grid2D::covering(rs, opt.h);
    GridSampler sampler(kernel, {g}, mean);
    std::vector<std::vector<int>> counts(kBatches);
    parallel_for(kBatches, opt.workers, [&](long b) {
      long nb = n / kBatches + (b < n % kBatches ? 1 : 0);
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(b)}));
      std::vector<double> v1(g.size()), v2(g.size());
      std::vector<signed char> mask(g.size());
      auto count = [&](const std::vector<double>& v) {
        for (int p = 0; p < g.size(); ++p) mask[p] = v[p] >= 0.0;
        return count_components(label_mask(mask, g.nx, g.ny));
      };
      for (long d = 0; d < nb; d += 2) {
        sampler.draw_values_pair(rng, v1.data(), v2.data());
        counts[b].push_back(count(v1));
        if (d + 1 < nb) counts[b].push_back(count(v2));
      }
    });
    const double vol = s * s * box.area();
    ConcentrationRow row;
    row.s = s;
    for (const auto& cb : counts)
      for (int c : cb) {
        normalised[k].push_back(c / vol);
        row.mean_count += c;
      }
    row.mean_count /= n;
    row.mean_normalised = row.mean_count / vol;
    tab.rows.push_back(row);
  }
  tab.c_hat = tab.rows.back().mean_normalised;
  tab.epsilon = opt.epsilon >= 0.0 ? opt.epsilon : opt.epsilon_fraction * tab.c_hat;
  tab.threshold = tab.c_hat - tab.epsilon;
  for (std::size_t k = 0; k < scales.size(); ++k) {
    auto& row = tab.rows[k];
    long hits = 0;
    for (double v : normalised[k]) hits += v <= tab.threshold;
    row.frequency = static_cast<double>(hits) / n;
    row.se = std::sqrt(row.frequency * (1.0 - row.frequency) / n);
    row.r = std::clamp(opt.r_coef * std::pow(row.s, opt.r_power), 1.0, row.s);
    row.envelope = concentration_envelope(*kernel, row.s, row.r, opt.C, opt.c_B);
  }
  return tab;
}

bool frequencies_non_increasing(const ConcentrationTable& table, double z) {
  for (std::size_t k = 1; k < table.rows.size(); ++k) {
    const auto& a = table.rows[k - 1];
    const auto& b = table.rows[k];
    if (b.frequency > a.frequency + z * std::hypot(a.se, b.se)) return false;
  }
  return true;
}

ChainCheck chain_bound_check(KernelPtr kernel, const std::vector<EventSpec>& events, long n, std::uint64_t seed,
                             double h, MeanFunction mean) {
  require(events.size() >= 2, ErrorKind::Validation, "chain_bound_check: at least two events required");
  require(n >= 1, ErrorKind::Validation, "chain_bound_check: at least one draw required");
  for (std::size_t a = 0; a < events.size(); ++a)
    for (std::size_t b = a + 1; b < events.size(); ++b)
      if (!rects_disjoint(events[a].box.rect, events[b].box.rect))
        fail(ErrorKind::NonDisjoint, "chain_bound_check: event boxes must be disjoint");
  auto rects = distinct_rects({&events});
  MultiBoxDraw draw(kernel, rects, h, mean);
  FamilyEvaluator ev(events, rects);
  const std::size_t m = events.size();
  std::vector<long> marg(m, 0), tail(m, 0), head_tail(m, 0);
  long joint = 0;
  Rng rng(seed);
  std::vector<FieldSample> samples;
  std::vector<double> scratch;
  std::vector<char> bits;
  for (long d = 0; d < n; ++d) {
    draw.draw(rng, samples, scratch);
    ev.evaluate(samples, bits);
    bool all_after = true;  // cap_{j > i} A_j, built from the back
    for (std::size_t i = m; i-- > 0;) {
      marg[i] += bits[i];
      tail[i] += all_after;
      head_tail[i] += bits[i] && all_after;
      all_after = all_after && bits[i];
    }
    joint += all_after;
  }
  ChainCheck out;
  out.n = n;
  const double dn = static_cast<double>(n);
  out.product = 1.0;
  for (std::size_t i = 0; i < m; ++i) {
    out.marginals.push_back(marg[i] / dn);
    out.product *= marg[i] / dn;
    out.h = std::max(out.h, marg[i] / dn);
  }
  out.joint = joint / dn;
  out.lhs = std::abs(out.joint - out.product);
  for (std::size_t i = 0; i + 1 < m; ++i)
    out.sup_alpha = std::max(out.sup_alpha, std::abs(head_tail[i] / dn - (marg[i] / dn) * (tail[i] / dn)));
  out.rhs = out.h < 1.0 ? out.sup_alpha / (1.0 - out.h) : std::numeric_limits<double>::infinity();
  return out;
}

// ---------------------------------------------------------------- Kostlan

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap(double a) {
  double r = std::fmod(a, kTwoPi);
  return r < 0.0 ? r + kTwoPi : r;
}

void check_arcs(Arc c1, Arc c2) {
  for (const Arc& c : {c1, c2})
    require(c.b > c.a && c.b - c.a < std::numbers::pi, ErrorKind::Validation,
            "kostlan: each arc needs a < b and length below pi");
  double a1 = wrap(c1.a), a2 = wrap(c2.a);
  double l1 = c1.b - c1.a, l2 = c2.b - c2.a;
  double gap12 = wrap(a2 - a1) - l1;  // from the end of arc 1 to the start of arc 2
  double gap21 = wrap(a1 - a2) - l2;
  if (!(gap12 > 0.0 && gap21 > 0.0)) fail(ErrorKind::NonDisjoint, "kostlan: arcs must be disjoint");
  double cover = kTwoPi - std::max(gap12, gap21);
  require(cover < std::numbers::pi, ErrorKind::Validation,
          "kostlan: arcs are not inside an open half circle (they contain an antipodal pair)");
}

std::vector<int> arc_nodes(const std::vector<double>& xs, Arc c) {
  std::vector<int> out;
  const int n = static_cast<int>(xs.size());
  double a = wrap(c.a), len = c.b - c.a;
  int start = static_cast<int>(std::ceil(a / kTwoPi * n - 1e-9));
  for (int k = start;; ++k) {
    double th = kTwoPi * k / n;
    if (th - a > len + 1e-12) break;
    out.push_back(((k % n) + n) % n);
  }
  return out;
}

constexpr int kArcEvents = 5;

void arc_events(const double* v, const std::vector<int>& idx, char* bits) {
  bool pos = true, neg = true;
  int changes = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    double x = v[idx[k]];
    pos = pos && x > 0.0;
    neg = neg && x < 0.0;
    if (k > 0) changes += (v[idx[k - 1]] >= 0.0) != (x >= 0.0);
  }
  bits[0] = pos;
  bits[1] = neg;
  bits[2] = changes >= 1;
  bits[3] = changes >= 2;
  bits[4] = v[idx.front()] > 0.0;
}

}  // namespace

std::vector<std::string> arc_event_names() { return {"positive", "negative", "zeros>=1", "zeros>=2", "left>0"}; }

KostlanDecay kostlan_mixing_experiment(const std::vector<int>& degrees, Arc cap1, Arc cap2, long n,
                                       std::uint64_t seed, int resolution, int workers) {
  require(!degrees.empty(), ErrorKind::Validation, "kostlan: no degrees");
  require(n >= kBatches, ErrorKind::Validation, "kostlan: too few draws");
  for (int d : degrees) require(d >= 0, ErrorKind::Validation, "kostlan: degrees must be non-negative");
  check_arcs(cap1, cap2);
  KostlanDecay out;
  out.n = n;
  out.rows.resize(degrees.size());
  const long tasks = static_cast<long>(degrees.size()) * kBatches;
  std::vector<std::vector<IndicatorCounts>> counts(tasks);
  parallel_for(tasks, workers, [&](long t) {
    const int k = static_cast<int>(t / kBatches), b = static_cast<int>(t % kBatches);
    KostlanSampler sampler(degrees[k], KostlanDomain::Circle, resolution);
    auto i1 = arc_nodes(sampler.xs(), cap1), i2 = arc_nodes(sampler.xs(), cap2);
    require(i1.size() >= 2 && i2.size() >= 2, ErrorKind::Validation, "kostlan: arcs hold fewer than two nodes");
    long nb = n / kBatches + (b < n % kBatches ? 1 : 0);
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(b)}));
    std::vector<double> v(sampler.size());
    char e1[kArcEvents], e2[kArcEvents];
    std::vector<IndicatorCounts> c(kArcEvents * kArcEvents);
    for (long d = 0; d < nb; ++d) {
      sampler.draw_values(rng, v.data());
      arc_events(v.data(), i1, e1);
      arc_events(v.data(), i2, e2);
      for (int a = 0; a < kArcEvents; ++a)
        for (int q = 0; q < kArcEvents; ++q) c[a * kArcEvents + q].add(e1[a], e2[q]);
    }
    counts[t] = std::move(c);
  });
  for (std::size_t k = 0; k < degrees.size(); ++k) {
    KostlanRow& row = out.rows[k];
    row.degree = degrees[k];
    std::vector<IndicatorCounts> per(kBatches);
    for (int p = 0; p < kArcEvents * kArcEvents; ++p) {
      for (int b = 0; b < kBatches; ++b) per[b] = counts[k * kBatches + b][p];
      Estimate e = batch_covariance(per);
      if (std::abs(e.value) > row.alpha || p == 0) {
        row.alpha = std::abs(e.value);
        row.se = e.se;
        row.best1 = p / kArcEvents;
        row.best2 = p % kArcEvents;
      }
    }
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (const auto& r : out.rows)
    if (r.alpha > 0.0) {
      double y = std::log(r.alpha);
      sx += r.degree;
      sy += y;
      sxx += static_cast<double>(r.degree) * r.degree;
      sxy += r.degree * y;
      ++m;
    }
  if (m >= 2 && m * sxx - sx * sx > 0.0) {
    out.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    out.intercept = (sy - out.slope * sx) / m;
  }
  return out;
}

std::vector<KostlanZeroRow> kostlan_zero_counts(const std::vector<int>& degrees, long n, std::uint64_t seed,
                                                int resolution, int workers) {
  require(n >= 2, ErrorKind::Validation, "kostlan zeros: at least 2 draws required");
  std::vector<KostlanZeroRow> rows(degrees.size());
  parallel_for(static_cast<long>(degrees.size()), workers, [&](long k) {
    require(degrees[k] >= 1, ErrorKind::Validation, "kostlan zeros: degree must be positive");
    KostlanSampler sampler(degrees[k], KostlanDomain::Circle, resolution);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    std::vector<double> v(sampler.size());
    double sum = 0.0, sq = 0.0;
    for (long d = 0; d < n; ++d) {
      sampler.draw_values(rng, v.data());
      double c = count_zero_sign_changes(v.data(), sampler.size());
      sum += c;
      sq += c * c;
    }
    KostlanZeroRow& r = rows[k];
    r.degree = degrees[k];
    r.mean = sum / n;
    r.se = std::sqrt(std::max(0.0, (sq - n * r.mean * r.mean) / (n - 1)) / n);
    r.expected = 2.0 * std::sqrt(static_cast<double>(degrees[k]));
  });
  return rows;
}

// ---------------------------------------------------------------- decorrelation and Harris

double decorrelation_bound(double c, double delta, double alpha) {
  require(c > 0.0, ErrorKind::Validation, "decorrelation_bound: c must be positive");
  require(delta > 0.0, ErrorKind::Validation, "decorrelation_bound: delta must be positive");
  require(alpha >= 0.0, ErrorKind::Validation, "decorrelation_bound: alpha must be non-negative");
  return 8.0 * std::pow(c, 2.0 / (2.0 + delta)) * std::pow(alpha, delta / (2.0 + delta));
}

namespace {

// Lag rule for u = x - y with x in [a1, b1], y in [a2, b2]; weights carry the
// overlap length of [a1, b1] and [a2 + u, b2 + u].
QuadRule lag_rule(double a1, double b1, double a2, double b2, double clip, int nodes, double panel) {
  double lo = std::max(a1 - b2, -clip), hi = std::min(b1 - a2, clip);
  QuadRule out;
  if (!(hi > lo)) return out;
  std::vector<double> br{lo, hi};
  for (double p : {a1 - a2, b1 - b2})
    if (p > lo && p < hi) br.push_back(p);
  std::sort(br.begin(), br.end());
  std::vector<double> fine{br.front()};
  for (std::size_t k = 1; k < br.size(); ++k) {
    int m = std::max(1, static_cast<int>(std::ceil((br[k] - br[k - 1]) / panel)));
    for (int q = 1; q <= m; ++q) fine.push_back(br[k - 1] + (br[k] - br[k - 1]) * q / m);
  }
  QuadRule q = composite_gauss_legendre(nodes, fine);
  for (int k = 0; k < q.size(); ++k) {
    double u = q.nodes[k];
    double len = std::min(b1, b2 + u) - std::max(a1, a2 + u);
    if (len <= 0.0) continue;
    out.nodes.push_back(u);
    out.weights.push_back(q.weights[k] * len);
  }
  return out;
}

}  // namespace

double box_pair_integral(const StationaryKernel& kernel, const Rect& r1, const Rect& r2, int nodes_per_panel,
                         double panel) {
  require(nodes_per_panel >= 1 && panel > 0.0, ErrorKind::Validation, "box_pair_integral: bad quadrature sizes");
  double clip = kernel.envelope_cutoff();
  QuadRule qx = lag_rule(r1.x0, r1.x1, r2.x0, r2.x1, clip, nodes_per_panel, panel);
  QuadRule qy = lag_rule(r1.y0, r1.y1, r2.y0, r2.y1, clip, nodes_per_panel, panel);
  double sum = 0.0;
  for (int b = 0; b < qy.size(); ++b) {
    double inner = 0.0;
    for (int a = 0; a < qx.size(); ++a) inner += qx.weights[a] * kernel.value({qx.nodes[a], qy.nodes[b]});
    sum += qy.weights[b] * inner;
  }
  return sum;
}

HarrisTable harris_scaling(const StationaryKernel& kernel, double nu, const std::vector<double>& scales,
                           const Rect& box, const Rect& box1, const Rect& box2) {
  require(nu > 0.0, ErrorKind::Validation, "harris_scaling: nu must be positive");
  const double d = 2.0;
  HarrisTable tab;
  tab.nu = nu;
  tab.zeta4 = d - 1.0 / nu;
  tab.self_exponent = 2.0 / nu - 2.0 * d;
  tab.cross_exponent = -2.0 * tab.zeta4;
  for (double s : scales) {
    require(s > 0.0, ErrorKind::Validation, "harris_scaling: scales must be positive");
    HarrisRow row;
    row.s = s;
    row.self_integral = box_pair_integral(kernel, box.scaled(s), box.scaled(s));
    row.self_scaled = std::pow(s, tab.self_exponent) * row.self_integral;
    row.cross_integral = box_pair_integral(kernel, box1.scaled(s), box2.scaled(s));
    row.cross_scaled = std::pow(s, tab.cross_exponent) * row.cross_integral;
    tab.rows.push_back(row);
  }
  return tab;
}

}  // namespace topocov
