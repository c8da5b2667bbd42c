#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topocov/gaussian.hpp"
#include "topocov/kernels.hpp"
#include "topocov/topology.hpp"

namespace topocov {

struct FormulaOptions {
  double h = 0.25;            // grid spacing
  int spatial_nodes = 6;      // Gauss-Legendre nodes per stratum dimension
  int t_nodes = 16;           // sine-substituted nodes in t
  long n_mc = 2000;           // conditional draws per spatial node pair
  long n_lhs = 200000;        // unconditioned draws for the covariance itself
  double delta = 0.0;         // diagonal exclusion radius (overlapping boxes)
  PivotStencil stencil = PivotStencil::Node;
  bool corner_strata = false;  // corner terms with the empty Hessian determinant 1
  int workers = 1;
};

Estimate estimate_lhs(KernelPtr kernel, MeanFunction mean, const EventSpec& event1, const EventSpec& event2, long n,
                      std::uint64_t seed, double h = 0.25, int workers = 1);

// Density at 0 of (f_t^1(x1), grad f_t^1|F1 (x1), f_t^2(x2), grad f_t^2|F2 (x2)).
double gamma_at_zero(const StationaryKernel& kernel, double t, Vec2 x1, const Stratum& F1, Vec2 x2, const Stratum& F2,
                     MeanFunction mean = {});

struct PivotalIntensityEstimate {
  double t = 0.0;
  Vec2 x1, x2;
  int dim1 = 0, dim2 = 0;
  double plus = 0.0;
  double minus = 0.0;
  double mc_se = 0.0;
  long n_samples = 0;
};

// I_t^+ and I_t^- at (x1, x2); x_i must lie on stratum j_i of event i's box.
// Zero on corner strata unless corners is set.
PivotalIntensityEstimate pivotal_intensity(KernelPtr kernel, MeanFunction mean, double t, Vec2 x1, int j1, Vec2 x2,
                                           int j2, const EventSpec& event1, const EventSpec& event2, long n_mc,
                                           std::uint64_t seed, double h = 0.25,
                                           PivotStencil stencil = PivotStencil::Node, bool corners = false);

// Per t node, the t-integrand of the Hessian weight without pivotal
// indicators: gamma_t * E_t[|det H1| |det H2|].
std::vector<double> hessian_weight_profile(KernelPtr kernel, MeanFunction mean, Vec2 x1, const Stratum& F1, Vec2 x2,
                                           const Stratum& F2, const QuadRule& t_rule, long n_mc, std::uint64_t seed);

struct StratumPairContribution {
  int j1 = 0, j2 = 0;
  double value = 0.0;
  double mc_se = 0.0;
  int node_pairs = 0;
  double kernel_min = 0.0;  // min of K over the node pairs
};

struct FormulaReport {
  Estimate lhs;
  double rhs = 0.0;
  double rhs_mc_se = 0.0;
  double rhs_quadrature_error = 0.0;
  std::vector<StratumPairContribution> breakdown;  // all 9 x 9 stratum pairs
  std::vector<double> t_nodes, t_weights;
  std::vector<double> t_integrand;  // spatially integrated I_t^+ - I_t^-
  std::string kernel;
  std::map<std::string, double> kernel_params;
  double mean = 0.0;
  Rect box1, box2;
  FormulaOptions options;
  std::uint64_t seed = 0;
  std::uint64_t lhs_seed = 0, rhs_seed = 0;
  double lhs_seconds = 0.0, rhs_seconds = 0.0;

  double rhs_se() const;
};

// The right-hand side; seeds of node pair p are derive_seed(seed, p).
FormulaReport estimate_rhs(KernelPtr kernel, MeanFunction mean, const EventSpec& event1, const EventSpec& event2,
                           const FormulaOptions& options, std::uint64_t seed);

// Both sides: lhs with derive_seed(seed, 1), rhs with derive_seed(seed, 2).
FormulaReport run_formula(KernelPtr kernel, MeanFunction mean, const EventSpec& event1, const EventSpec& event2,
                          const FormulaOptions& options, std::uint64_t seed, bool with_lhs = true);

// (lhs - rhs) / sqrt(se_lhs^2 + se_rhs^2).
double formula_residual(const FormulaReport& report);

std::string formula_json(const FormulaReport& report);
std::string formula_csv_header();
std::string formula_csv_row(const FormulaReport& report);

}  // namespace topocov
