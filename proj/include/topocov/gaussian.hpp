#pragma once

#include <Eigen/Dense>
#include <vector>

#include "topocov/quadrature.hpp"
#include "topocov/rng.hpp"

namespace topocov {

// Finite Gaussian vector: mean and covariance in orthonormal coordinates.
struct GaussianSpec {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  GaussianSpec() = default;
  // Checks symmetry and PSD up to 1e-10 * trace.
  GaussianSpec(Eigen::VectorXd mean_, Eigen::MatrixXd cov_);
  static GaussianSpec centred(Eigen::MatrixXd cov_);

  int size() const { return static_cast<int>(mean.size()); }
};

// Law of the free coordinates given the others: mean = offset + regression * values.
struct ConditionalDecomposition {
  std::vector<int> free_indices;
  std::vector<int> given_indices;
  Eigen::MatrixXd regression;
  Eigen::VectorXd offset;
  Eigen::MatrixXd cov;

  GaussianSpec law_given(const Eigen::VectorXd& values) const;
};

struct SymmetricInverse {
  Eigen::MatrixXd inverse;
  double log_det = 0.0;
  double min_eigenvalue = 0.0;
};

// Inverse through the symmetric eigendecomposition. Throws a Degenerate error
// when the smallest eigenvalue is at or below 1e-14 * trace.
SymmetricInverse symmetric_inverse(const Eigen::MatrixXd& cov, const char* what = "covariance");

ConditionalDecomposition decompose(const GaussianSpec& spec, const std::vector<int>& given);
GaussianSpec condition(const GaussianSpec& spec, const std::vector<int>& indices,
                       const Eigen::VectorXd& values);

double log_density_at(const GaussianSpec& spec, const Eigen::VectorXd& point);
double density_at(const GaussianSpec& spec, const Eigen::VectorXd& point);

double det_cov(const Eigen::MatrixXd& cov);
double det_cov(const GaussianSpec& spec);

// Joint law of (Y1, Y2_t) where Y2_t = t Y1' + sqrt(1-t^2) Y2~ in the cross
// structure: diagonal blocks unchanged, cross block scaled by t.
GaussianSpec interpolated_pair_cov(const Eigen::MatrixXd& block11, const Eigen::MatrixXd& block22,
                                   const Eigen::MatrixXd& cross, double t,
                                   const Eigen::VectorXd& mean1 = {}, const Eigen::VectorXd& mean2 = {});

double std_normal_cdf(double x);
// P(X > h, Y > k) for standard normals with correlation r.
double bvn_upper(double h, double k, double r);
// P(X < x, Y < y).
double bvn_cdf(double x, double y, double r);
// P(X in [a1,a2], Y in [b1,b2]); infinite endpoints allowed.
double bvn_rect(double a1, double a2, double b1, double b2, double r);

// Intersection of axis-aligned half-spaces: the box prod_k [lo_k, hi_k] with
// infinite endpoints allowed.
struct HalfSpaceOrBox {
  std::vector<double> lo;
  std::vector<double> hi;

  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(const double* x) const;

  static HalfSpaceOrBox whole(int m);
  static HalfSpaceOrBox box(std::vector<double> lo, std::vector<double> hi);
  // {x : x_axis >= threshold} when upper, else {x : x_axis <= threshold}.
  static HalfSpaceOrBox axis_halfspace(int m, int axis, double threshold, bool upper);
  // {x : <normal, x> >= offset}; only axis-aligned normals are supported.
  static HalfSpaceOrBox from_halfspace(const std::vector<double>& normal, double offset);
};

// int_0^1 int_{dA x dB} <nu_A, nu_B> gamma_t  for X, Y with unit marginals,
// Cov(X_i, Y_j) = t delta_ij and common mean.
double piterbarg_rhs(int m, const HalfSpaceOrBox& A, const HalfSpaceOrBox& B,
                     const Eigen::VectorXd& mean, const QuadRule& t_rule);

struct PiterbargCheck {
  double rhs = 0.0;
  double lhs = 0.0;
  double mc_se = 0.0;
  long n = 0;
};

PiterbargCheck piterbarg_check(int m, const HalfSpaceOrBox& A, const HalfSpaceOrBox& B,
                               const Eigen::VectorXd& mean, long n_mc, Rng& rng,
                               const QuadRule& t_rule);

// Counts of a pair of indicators.
struct IndicatorCounts {
  long n = 0, a = 0, b = 0, ab = 0;

  void add(bool ia, bool ib) {
    ++n;
    a += ia;
    b += ib;
    ab += ia && ib;
  }
  IndicatorCounts& operator+=(const IndicatorCounts& o) {
    n += o.n;
    a += o.a;
    b += o.b;
    ab += o.ab;
    return *this;
  }
  double pa() const { return n ? double(a) / n : 0.0; }
  double pb() const { return n ? double(b) / n : 0.0; }
  double cov() const { return n ? double(ab) / n - pa() * pb() : 0.0; }
};

struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

// Pooled covariance with the batch-means standard error over the given batches.
Estimate batch_covariance(const std::vector<IndicatorCounts>& batches);

}  // namespace topocov
