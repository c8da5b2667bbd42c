#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "topocov/gaussian.hpp"
#include "topocov/kernels.hpp"
#include "topocov/rng.hpp"
#include "topocov/topology.hpp"

namespace topocov {

// ---------------------------------------------------------------- mixing constants

struct MixingOptions {
  int probe = 5;                    // probe points per stratum dimension, end points included
  bool condition_on_value = false;  // also condition the Hessian on f(x) = 0
};

// Law of the tangential Hessian entries (uu) or (uu, uv, vv) at x given the
// tangential gradient (and the value when asked) vanishes.
GaussianSpec conditional_hessian_law(const StationaryKernel& kernel, Vec2 x, const Stratum& F,
                                     bool condition_on_value = false);

// E ||H||_op^2 under that law; the operator norm is the largest singular value.
Estimate conditional_hessian_moment(const StationaryKernel& kernel, Vec2 x, const Stratum& F, long n_mc, Rng& rng,
                                    bool condition_on_value = false);

struct MixingConstantDetail {
  double value = 0.0;
  Estimate hessian_moment[2];
  double min_det_delta = 0.0;
  Vec2 argmin_x1, argmin_x2;
  int probe_pairs = 0;
};

MixingConstantDetail mixing_constant_detail(const StationaryKernel& kernel, const StratifiedBox& box1, int j1,
                                            const StratifiedBox& box2, int j2, long n_mc, Rng& rng,
                                            const MixingOptions& options = {});

// c_{F1,F2} for stratum j1 of box1 and stratum j2 of box2. A degenerate
// covariance of (f, df|F1, f, df|F2) at a probe pair raises a Degenerate error.
double mixing_constant(const StationaryKernel& kernel, int j1, int j2, const Rect& box1, const Rect& box2, long n_mc,
                       Rng& rng, const MixingOptions& options = {});

// int_{F1 x F2} |kappa(x1 - x2)| by tensor Gauss-Legendre on unit panels.
double face_integral(const StationaryKernel& kernel, const StratifiedBox& box1, int j1, const StratifiedBox& box2,
                     int j2, int nodes_per_panel = 8);

struct MixingPairTerm {
  int j1 = 0, j2 = 0;
  double constant = 0.0;
  double face_integral = 0.0;
};

struct MixingBoundReport {
  std::vector<MixingPairTerm> terms;
  double c_d = 1.0;
  double bound = 0.0;  // c_d * sum of constant * face_integral
};

struct MixingBoundOptions {
  long n_mc = 4000;
  std::uint64_t seed = 1;
  int nodes_per_panel = 8;
  bool corner_strata = false;
  MixingOptions mixing;
};

MixingBoundReport mixing_bound(const StationaryKernel& kernel, const Rect& box1, const Rect& box2, double c_d = 1.0,
                               const MixingBoundOptions& options = {});

// Envelope y <= c3 x^power kbar(c4 x): for each c4 in the grid, c3 is the
// smallest constant that dominates every point; the c4 kept minimises the
// spread max/min of y / (x^power kbar(c4 x)).
struct EnvelopeFit {
  double c3 = 0.0;
  double c4 = 0.0;
  double spread = 0.0;
};
EnvelopeFit fit_envelope(const std::vector<double>& x, const std::vector<double>& y, const StationaryKernel& kernel,
                         double power, const std::vector<double>& c4_grid);

// ---------------------------------------------------------------- empirical alpha

// LR and TB crossings of {f >= level} and {f <= level}.
std::vector<EventSpec> crossing_family(const Rect& box, double level = 0.0);
// The crossings plus contained-component counts >= 1 and >= 2 for both sets.
std::vector<EventSpec> default_event_family(const Rect& box, double level = 0.0);

struct AlphaEstimate {
  double value = 0.0;  // max over family pairs of |Cov|
  double se = 0.0;     // batch-means se of the maximising pair
  int best1 = 0, best2 = 0;
  std::vector<Estimate> pairs;  // row-major over (family1, family2)
  long n = 0;
};

AlphaEstimate empirical_alpha(KernelPtr kernel, const std::vector<EventSpec>& family1,
                              const std::vector<EventSpec>& family2, long n, std::uint64_t seed, double h = 0.25,
                              int workers = 1, MeanFunction mean = {});

// ---------------------------------------------------------------- concentration

struct ConcentrationOptions {
  double epsilon = -1.0;          // absolute; negative means epsilon_fraction * c_N
  double epsilon_fraction = 0.3;
  double h = 0.25;
  // Envelope of the lower tail at r(s) = r_coef * s^r_power.
  double r_coef = 1.0;
  double r_power = 0.5;
  double C = 1.0;
  double c_B = 1.0;
  int workers = 1;
};

struct ConcentrationRow {
  double s = 0.0;
  double mean_count = 0.0;
  double mean_normalised = 0.0;
  double frequency = 0.0;
  double se = 0.0;
  double r = 0.0;
  double envelope = 0.0;
};

struct ConcentrationTable {
  std::vector<ConcentrationRow> rows;
  double c_hat = 0.0;
  double epsilon = 0.0;
  double threshold = 0.0;  // c_hat - epsilon
  long n = 0;
  double C = 0.0, c_B = 0.0;
};

// Components of {f >= 0} inside sB avoiding its boundary, normalised by
// s^2 Vol(B); c_hat is the mean at the largest scale.
ConcentrationTable concentration_experiment(KernelPtr kernel, const Rect& box, const std::vector<double>& scales,
                                            long n, std::uint64_t seed, const ConcentrationOptions& options = {},
                                            MeanFunction mean = {});

// e^{-C (s/r)^d} + e^{c_B (s/r)^d} (r s)^d kbar(r) with d = 2.
double concentration_envelope(const StationaryKernel& kernel, double s, double r, double C, double c_B);

// Successive frequencies never rise by more than z combined binomial se.
bool frequencies_non_increasing(const ConcentrationTable& table, double z = 2.0);

struct ChainCheck {
  std::vector<double> marginals;
  double joint = 0.0;
  double product = 0.0;
  double lhs = 0.0;     // |joint - product|
  double h = 0.0;       // max marginal
  double sup_alpha = 0.0;  // max_n |Cov(A_n, cap_{j>n} A_j)|
  double rhs = 0.0;     // sup_alpha / (1 - h)
  long n = 0;
};

// The chain inequality |P[cap A_i] - prod P[A_i]| <= sup alpha / (1 - h) with
// empirical probabilities; boxes must be pairwise disjoint.
ChainCheck chain_bound_check(KernelPtr kernel, const std::vector<EventSpec>& events, long n, std::uint64_t seed,
                             double h = 0.25, MeanFunction mean = {});

// ---------------------------------------------------------------- Kostlan

struct Arc {
  double a = 0.0, b = 0.0;  // angles, a < b
};

struct KostlanRow {
  int degree = 0;
  double alpha = 0.0;
  double se = 0.0;
  int best1 = 0, best2 = 0;
};

struct KostlanDecay {
  std::vector<KostlanRow> rows;
  double slope = 0.0;      // least-squares slope of log alpha in the degree
  double intercept = 0.0;
  long n = 0;
};

// Events on an arc: f > 0 throughout, f < 0 throughout, at least one zero,
// at least two zeros, f > 0 at the left end point.
std::vector<std::string> arc_event_names();

// Arcs must be disjoint and fit in an open half circle; otherwise they hold
// an antipodal pair and a Validation error is raised.
KostlanDecay kostlan_mixing_experiment(const std::vector<int>& degrees, Arc cap1, Arc cap2, long n,
                                       std::uint64_t seed, int resolution = 2048, int workers = 1);

struct KostlanZeroRow {
  int degree = 0;
  double mean = 0.0;
  double se = 0.0;
  double expected = 0.0;  // 2 sqrt(n)
};

std::vector<KostlanZeroRow> kostlan_zero_counts(const std::vector<int>& degrees, long n, std::uint64_t seed,
                                                int resolution = 4096, int workers = 1);

// ---------------------------------------------------------------- decorrelation and Harris

// 8 c^{2/(2+delta)} alpha^{delta/(2+delta)}.
double decorrelation_bound(double c, double delta, double alpha);

// int_{R1 x R2} kappa(x - y) dx dy through the lag density of overlap lengths.
double box_pair_integral(const StationaryKernel& kernel, const Rect& r1, const Rect& r2, int nodes_per_panel = 8,
                         double panel = 0.5);

struct HarrisRow {
  double s = 0.0;
  double self_integral = 0.0;   // int over sB x sB
  double self_scaled = 0.0;     // s^{2/nu - 2d} times it
  double cross_integral = 0.0;  // int over sB1 x sB2
  double cross_scaled = 0.0;    // s^{-2 zeta4} times it
};

struct HarrisTable {
  double nu = 0.0;
  double zeta4 = 0.0;
  double self_exponent = 0.0;   // 2/nu - 2d
  double cross_exponent = 0.0;  // -2 zeta4
  std::vector<HarrisRow> rows;
};

HarrisTable harris_scaling(const StationaryKernel& kernel, double nu, const std::vector<double>& scales,
                           const Rect& box, const Rect& box1, const Rect& box2);

}  // namespace topocov
