#include "topocov/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "topocov/bounds.hpp"
#include "topocov/formula.hpp"
#include "topocov/gaussian.hpp"
#include "topocov/quadrature.hpp"
#include "topocov/rng.hpp"
#include "topocov/sampler.hpp"

namespace topocov {

namespace {

using nlohmann::json;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string join(const std::vector<std::string>& cells) {
  std::string out;
  for (const auto& c : cells) out += (out.empty() ? "" : ",") + c;
  return out;
}

std::string prefix(const RunConfig& cfg) {
  return std::to_string(kFormatVersion) + "," + cfg.experiment + "," + cfg.hash_hex() + "," +
         std::to_string(cfg.require_seed());
}

json base_json(const RunConfig& cfg) {
  json j;
  j["format_version"] = kFormatVersion;
  j["experiment"] = cfg.experiment;
  j["config_hash"] = cfg.hash_hex();
  j["seed"] = cfg.require_seed();
  j["config"] = cfg.values;
  return j;
}

MeanFunction config_mean(const RunConfig& cfg) { return {cfg.real("mean.level")}; }

std::vector<double> broadcast(std::vector<double> v, int m, const std::string& key) {
  if (v.size() == 1) v.assign(m, v[0]);
  require(static_cast<int>(v.size()) == m, ErrorKind::Validation,
          "config key '" + key + "' needs 1 or " + std::to_string(m) + " entries");
  return v;
}

// ---------------------------------------------------------------- sample

RunResult run_sample(const RunConfig& cfg) {
  const std::uint64_t seed = cfg.require_seed();
  KernelPtr kernel = config_kernel(cfg);
  const std::string m = cfg.str("sample.method");
  SamplingMethod method = m == "exact" ? SamplingMethod::Exact : m == "fft" ? SamplingMethod::Fft : SamplingMethod::Auto;
  const Grid2D grid = Grid2D::covering(cfg.rect("sample.box"), cfg.real("grid.h"));
  GridSampler sampler(kernel, {grid}, config_mean(cfg), method);
  const std::string used = sampler.method() == SamplingMethod::Exact ? "exact" : "fft";
  const bool binary = cfg.str("sample.format") == "binary";

  RunResult r;
  json draws = json::array();
  for (long k = 0; k < cfg.integer("sample.draws"); ++k) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    FieldSample f = sampler.draw(rng).front();
    f.seed = derive_seed(seed, static_cast<std::uint64_t>(k));
    double mean = 0.0, lo = f.values.front(), hi = f.values.front();
    for (double v : f.values) {
      mean += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    mean /= static_cast<double>(f.values.size());
    double var = 0.0;
    for (double v : f.values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(f.values.size());
    r.rows.push_back(join({prefix(cfg), std::to_string(k), used, std::to_string(f.values.size()), num(mean), num(var),
                           num(lo), num(hi)}));
    std::ostringstream out;
    if (binary)
      write_field_binary(f, out);
    else
      write_field_csv(f, out);
    r.files.emplace_back("field" + std::to_string(k) + (binary ? ".bin" : ".csv"), out.str());
    draws.push_back({{"draw", k}, {"seed", f.seed}, {"mean", mean}, {"variance", var}, {"min", lo}, {"max", hi}});
  }
  json j = base_json(cfg);
  j["results"] = {{"method", used}, {"nx", grid.nx}, {"ny", grid.ny}, {"draws", draws}};
  r.json = j.dump(2);
  return r;
}

// ---------------------------------------------------------------- piterbarg

RunResult run_piterbarg(const RunConfig& cfg) {
  const int m = static_cast<int>(cfg.integer("piterbarg.m"));
  HalfSpaceOrBox A = HalfSpaceOrBox::box(broadcast(cfg.reals("piterbarg.a_lo"), m, "piterbarg.a_lo"),
                                         broadcast(cfg.reals("piterbarg.a_hi"), m, "piterbarg.a_hi"));
  HalfSpaceOrBox B = HalfSpaceOrBox::box(broadcast(cfg.reals("piterbarg.b_lo"), m, "piterbarg.b_lo"),
                                         broadcast(cfg.reals("piterbarg.b_hi"), m, "piterbarg.b_hi"));
  auto mv = broadcast(cfg.reals("piterbarg.mean"), m, "piterbarg.mean");
  Eigen::VectorXd mean = Eigen::Map<const Eigen::VectorXd>(mv.data(), m);
  Rng rng(cfg.require_seed());
  const QuadRule rule = sine_substituted_unit(static_cast<int>(cfg.integer("piterbarg.t_nodes")));
  PiterbargCheck c = piterbarg_check(m, A, B, mean, cfg.integer("piterbarg.n"), rng, rule);
  const double resid = c.mc_se > 0 ? (c.lhs - c.rhs) / c.mc_se : 0.0;

  RunResult r;
  r.rows.push_back(join({prefix(cfg), std::to_string(m), num(c.rhs), num(c.lhs), num(c.mc_se), num(resid)}));
  json j = base_json(cfg);
  j["results"] = {{"rhs", c.rhs}, {"lhs", c.lhs}, {"mc_se", c.mc_se}, {"n", c.n}, {"residual", resid}};
  r.json = j.dump(2);
  return r;
}

// ---------------------------------------------------------------- formula

RunResult run_formula_cmd(const RunConfig& cfg) {
  KernelPtr kernel = config_kernel(cfg);
  const EventSign sign = cfg.str("events.sign") == "leq" ? EventSign::Leq : EventSign::Geq;
  const double level = cfg.real("events.level");
  auto event = [&](const Rect& box) {
    if (cfg.str("events.kind") == "count")
      return EventSpec::count_at_least(box, static_cast<int>(cfg.integer("events.threshold")), sign, level);
    return EventSpec::crossing(box, cfg.str("events.direction") == "tb" ? Direction::BottomTop : Direction::LeftRight,
                               sign, level);
  };
  FormulaOptions o;
  o.h = cfg.real("grid.h");
  o.spatial_nodes = static_cast<int>(cfg.integer("formula.spatial_nodes"));
  o.t_nodes = static_cast<int>(cfg.integer("formula.t_nodes"));
  o.n_mc = cfg.integer("formula.n_mc");
  o.n_lhs = cfg.integer("formula.n_lhs");
  o.delta = cfg.real("formula.delta");
  const std::string st = cfg.str("formula.stencil");
  o.stencil = st == "block" ? PivotStencil::Block : st == "plus" ? PivotStencil::Plus : PivotStencil::Node;
  o.corner_strata = cfg.flag("formula.corner_strata");
  o.workers = cfg.workers;
  FormulaReport rep = run_formula(kernel, config_mean(cfg), event(cfg.rect("events.box1")),
                                  event(cfg.rect("events.box2")), o, cfg.require_seed(), cfg.flag("formula.with_lhs"));

  RunResult r;
  r.rows.push_back(prefix(cfg) + "," + formula_csv_row(rep));
  json j = base_json(cfg);
  j["results"] = json::parse(formula_json(rep));
  r.json = j.dump(2);
  r.plots.push_back({"t_integrand", "t", "integrand", rep.t_nodes, rep.t_integrand});
  PlotSeries bd{"breakdown", "stratum_pair", "contribution", {}, {}};
  for (const auto& c : rep.breakdown)
    if (c.node_pairs > 0) {
      bd.x.push_back(c.j1 * 9 + c.j2);
      bd.y.push_back(c.value);
    }
  r.plots.push_back(bd);
  return r;
}

// ---------------------------------------------------------------- mixing

RunResult run_mixing(const RunConfig& cfg) {
  const std::uint64_t seed = cfg.require_seed();
  KernelPtr kernel = config_kernel(cfg);
  const double level = 0.0;
  const bool crossing = cfg.str("mixing.family") == "crossing";
  const auto seps = cfg.reals("mixing.separations");

  struct Point {
    double R, side, shape, bound;
    AlphaEstimate alpha;
    MixingBoundReport report;
  };
  std::vector<Point> pts;
  for (std::size_t k = 0; k < seps.size(); ++k) {
    const double R = seps[k];
    const double L = cfg.real("mixing.side") > 0 ? cfg.real("mixing.side") : R;
    const Rect b1{0.0, L, 0.0, L}, b2{L + R, 2 * L + R, 0.0, L};
    auto f1 = crossing ? crossing_family(b1, level) : default_event_family(b1, level);
    auto f2 = crossing ? crossing_family(b2, level) : default_event_family(b2, level);
    Point p{R, L, std::pow(R, 4) * kappa_bar(*kernel, R), 0.0, {}, {}};
    p.alpha = empirical_alpha(kernel, f1, f2, cfg.integer("mixing.n"), derive_seed(seed, {1, k}), cfg.real("grid.h"),
                              cfg.workers, config_mean(cfg));
    if (cfg.flag("mixing.with_bound")) {
      MixingBoundOptions mo;
      mo.n_mc = cfg.integer("mixing.n_mc");
      mo.seed = derive_seed(seed, {2, k});
      p.report = mixing_bound(*kernel, b1, b2, cfg.real("mixing.c_d"), mo);
      p.bound = p.report.bound;
    }
    pts.push_back(std::move(p));
  }
  // One constant fitted at the smallest separation, then checked at the rest.
  const double c_shape = pts.front().shape > 0 ? pts.front().alpha.value / pts.front().shape : 0.0;
  const double c_bound = pts.front().bound > 0 ? pts.front().alpha.value / pts.front().bound : 0.0;

  RunResult r;
  json rows = json::array();
  PlotSeries pa{"alpha", "s", "alpha", {}, {}}, pb{"bound", "s", "bound", {}, {}}, pe{"envelope", "s", "envelope", {}, {}};
  for (const auto& p : pts) {
    r.rows.push_back(join({prefix(cfg), num(p.R), num(p.side), num(p.alpha.value), num(p.alpha.se), num(p.shape),
                           num(c_shape * p.shape), num(p.bound), num(c_bound * p.bound)}));
    pa.x.push_back(p.R);
    pa.y.push_back(p.alpha.value);
    pe.x.push_back(p.R);
    pe.y.push_back(c_shape * p.shape);
    if (cfg.flag("mixing.with_bound")) {
      pb.x.push_back(p.R);
      pb.y.push_back(p.bound);
    }
    json terms = json::array();
    for (const auto& t : p.report.terms)
      terms.push_back({{"stratum1", StratifiedBox::stratum_name(t.j1)},
                       {"stratum2", StratifiedBox::stratum_name(t.j2)},
                       {"constant", t.constant},
                       {"face_integral", t.face_integral}});
    rows.push_back({{"separation", p.R},
                    {"side", p.side},
                    {"alpha", p.alpha.value},
                    {"alpha_se", p.alpha.se},
                    {"best_pair", {p.alpha.best1, p.alpha.best2}},
                    {"shape", p.shape},
                    {"bound", p.bound},
                    {"terms", terms}});
  }
  json j = base_json(cfg);
  j["results"] = {{"rows", rows}, {"shape_constant", c_shape}, {"bound_calibration", c_bound},
                  {"kappa_bar_approximate", kappa_bar_is_approximate(*kernel)}};
  r.json = j.dump(2);
  r.plots = {pa, pb, pe};
  return r;
}

// ---------------------------------------------------------------- concentration

RunResult run_concentration(const RunConfig& cfg) {
  KernelPtr kernel = config_kernel(cfg);
  ConcentrationOptions o;
  o.epsilon = cfg.real("concentration.epsilon");
  o.epsilon_fraction = cfg.real("concentration.epsilon_fraction");
  o.h = cfg.real("grid.h");
  o.r_coef = cfg.real("concentration.r_coef");
  o.r_power = cfg.real("concentration.r_power");
  o.C = cfg.real("concentration.C");
  o.c_B = cfg.real("concentration.c_B");
  o.workers = cfg.workers;
  ConcentrationTable t = concentration_experiment(kernel, cfg.rect("concentration.box"),
                                                  cfg.reals("concentration.scales"), cfg.integer("concentration.n"),
                                                  cfg.require_seed(), o, config_mean(cfg));
  RunResult r;
  json rows = json::array();
  PlotSeries pf{"frequency", "s", "frequency", {}, {}}, pe{"envelope", "s", "envelope", {}, {}};
  for (const auto& w : t.rows) {
    r.rows.push_back(join({prefix(cfg), num(w.s), num(w.mean_count), num(w.mean_normalised), num(w.frequency),
                           num(w.se), num(w.r), num(w.envelope)}));
    pf.x.push_back(w.s);
    pf.y.push_back(w.frequency);
    pe.x.push_back(w.s);
    pe.y.push_back(w.envelope);
    rows.push_back({{"s", w.s},
                    {"mean_count", w.mean_count},
                    {"mean_normalised", w.mean_normalised},
                    {"frequency", w.frequency},
                    {"se", w.se},
                    {"r", w.r},
                    {"envelope", w.envelope}});
  }
  json j = base_json(cfg);
  j["results"] = {{"rows", rows},       {"c_hat", t.c_hat}, {"epsilon", t.epsilon},
                  {"threshold", t.threshold}, {"n", t.n},
                  {"non_increasing", frequencies_non_increasing(t)}};
  r.json = j.dump(2);
  r.plots = {pf, pe};
  return r;
}

// ---------------------------------------------------------------- kostlan

RunResult run_kostlan(const RunConfig& cfg) {
  const std::uint64_t seed = cfg.require_seed();
  auto arc = [&](const std::string& key) {
    auto v = cfg.reals(key);
    require(v.size() == 2 && v[0] < v[1], ErrorKind::Validation, "config key '" + key + "' needs two angles a < b");
    return Arc{v[0], v[1]};
  };
  const auto degrees = cfg.integers("kostlan.degrees");
  KostlanDecay d = kostlan_mixing_experiment(degrees, arc("kostlan.cap1"), arc("kostlan.cap2"),
                                             cfg.integer("kostlan.n"), derive_seed(seed, 1),
                                             static_cast<int>(cfg.integer("kostlan.resolution")), cfg.workers);
  auto zeros = kostlan_zero_counts(degrees, cfg.integer("kostlan.zero_n"), derive_seed(seed, 2),
                                   static_cast<int>(cfg.integer("kostlan.zero_resolution")), cfg.workers);
  RunResult r;
  json rows = json::array();
  PlotSeries pa{"alpha", "degree", "alpha", {}, {}}, pz{"zeros", "degree", "mean_zeros", {}, {}};
  for (std::size_t k = 0; k < d.rows.size(); ++k) {
    const auto& a = d.rows[k];
    const auto& z = zeros[k];
    r.rows.push_back(join({prefix(cfg), std::to_string(a.degree), num(a.alpha), num(a.se), num(z.mean), num(z.se),
                           num(z.expected)}));
    pa.x.push_back(a.degree);
    pa.y.push_back(a.alpha);
    pz.x.push_back(z.degree);
    pz.y.push_back(z.mean);
    rows.push_back({{"degree", a.degree},
                    {"alpha", a.alpha},
                    {"alpha_se", a.se},
                    {"best_pair", {arc_event_names()[a.best1], arc_event_names()[a.best2]}},
                    {"zeros_mean", z.mean},
                    {"zeros_se", z.se},
                    {"zeros_expected", z.expected}});
  }
  json j = base_json(cfg);
  j["results"] = {{"rows", rows}, {"log_slope", d.slope}, {"log_intercept", d.intercept}, {"n", d.n}};
  r.json = j.dump(2);
  r.plots = {pa, pz};
  return r;
}

// ---------------------------------------------------------------- harris

RunResult run_harris(const RunConfig& cfg) {
  cfg.require_seed();
  KernelPtr kernel = config_kernel(cfg);
  HarrisTable t = harris_scaling(*kernel, cfg.real("harris.nu"), cfg.reals("harris.scales"), cfg.rect("harris.box"),
                                 cfg.rect("harris.box1"), cfg.rect("harris.box2"));
  RunResult r;
  json rows = json::array();
  PlotSeries ps{"self", "s", "self_scaled", {}, {}}, pc{"cross", "s", "cross_scaled", {}, {}};
  for (const auto& w : t.rows) {
    r.rows.push_back(join({prefix(cfg), num(w.s), num(w.self_integral), num(w.self_scaled), num(w.cross_integral),
                           num(w.cross_scaled)}));
    ps.x.push_back(w.s);
    ps.y.push_back(w.self_scaled);
    pc.x.push_back(w.s);
    pc.y.push_back(w.cross_scaled);
    rows.push_back({{"s", w.s},
                    {"self_integral", w.self_integral},
                    {"self_scaled", w.self_scaled},
                    {"cross_integral", w.cross_integral},
                    {"cross_scaled", w.cross_scaled}});
  }
  json j = base_json(cfg);
  j["results"] = {{"rows", rows},
                  {"nu", t.nu},
                  {"zeta4", t.zeta4},
                  {"self_exponent", t.self_exponent},
                  {"cross_exponent", t.cross_exponent}};
  r.json = j.dump(2);
  r.plots = {ps, pc};
  return r;
}

}  // namespace

std::string summary_header(const std::string& experiment) {
  static const std::map<std::string, std::string> cols = {
      {"sample", "draw,method,nodes,mean,variance,min,max"},
      {"piterbarg", "m,rhs,lhs,mc_se,residual"},
      {"formula", formula_csv_header()},
      {"mixing", "separation,side,alpha,alpha_se,shape,envelope,bound,calibrated_bound"},
      {"concentration", "s,mean_count,mean_normalised,frequency,se,r,envelope"},
      {"kostlan", "degree,alpha,alpha_se,zeros_mean,zeros_se,zeros_expected"},
      {"harris", "s,self_integral,self_scaled,cross_integral,cross_scaled"},
  };
  auto it = cols.find(experiment);
  require(it != cols.end(), ErrorKind::Validation, "unknown experiment '" + experiment + "'");
  return "format_version,experiment,config_hash,seed," + it->second;
}

RunResult run_experiment(const RunConfig& cfg) {
  cfg.require_seed();
  require(cfg.workers >= 1, ErrorKind::Validation, "workers must be >= 1");
  const std::string& e = cfg.experiment;
  RunResult r = e == "sample"          ? run_sample(cfg)
                : e == "piterbarg"     ? run_piterbarg(cfg)
                : e == "formula"       ? run_formula_cmd(cfg)
                : e == "mixing"        ? run_mixing(cfg)
                : e == "concentration" ? run_concentration(cfg)
                : e == "kostlan"       ? run_kostlan(cfg)
                : e == "harris"        ? run_harris(cfg)
                                       : (fail(ErrorKind::Validation, "unknown experiment '" + e + "'"), RunResult{});
  r.experiment = e;
  r.header = summary_header(e);
  return r;
}

std::vector<std::string> emit_outputs(const RunResult& result, const RunConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  const std::string stem = result.experiment + "_" + cfg.hash_hex() + "_" + std::to_string(cfg.require_seed());
  std::vector<std::string> written;

  const std::string summary = (dir / (result.experiment + "_summary.csv")).string();
  if (result.rows.empty()) append_summary(summary, result.header, "");
  for (const auto& row : result.rows) append_summary(summary, result.header, row);
  written.push_back(summary);

  const std::string js = (dir / (stem + ".json")).string();
  write_text_file(js, result.json + "\n");
  written.push_back(js);

  for (const auto& p : result.plots) {
    const std::string path = (dir / (stem + "_" + p.name + ".dat")).string();
    write_plot_data(path, p.xname, p.yname, p.x, p.y);
    written.push_back(path);
  }
  for (const auto& [suffix, content] : result.files) {
    const std::string path = (dir / (stem + "_" + suffix)).string();
    write_text_file(path, content);
    written.push_back(path);
  }
  return written;
}

}  // namespace topocov
