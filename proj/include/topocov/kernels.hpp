#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "topocov/core.hpp"
#include "topocov/gaussian.hpp"
#include "topocov/jet.hpp"

namespace topocov {

// Constant mean of the field.
struct MeanFunction {
  double level = 0.0;
};

struct MultiIndex {
  int a = 0;  // order in the first coordinate
  int b = 0;  // order in the second coordinate

  int order() const { return a + b; }
};

// Stationary covariance kappa(h) = Cov(f(x + h), f(x)) with exact partial
// derivatives up to total order 4.
class StationaryKernel {
 public:
  virtual ~StationaryKernel() = default;

  virtual std::string name() const = 0;
  virtual std::map<std::string, double> params() const = 0;
  // 2 for planar kernels; 1 for kernels of a single angle (Kostlan circle).
  virtual int dimension() const { return 2; }
  virtual int max_order() const { return Jet::kOrder; }
  virtual double value(Vec2 h) const = 0;
  // Taylor expansion of kappa about the lag h, truncated at total degree 4.
  virtual Jet jet(Vec2 h) const = 0;
  // True when |kappa| is non-increasing along every ray, so kappa_bar(r) = |kappa(r e1)|.
  virtual bool radially_monotone() const { return false; }
  virtual bool isotropic() const { return false; }
  // Radius past which |kappa| is below 1e-17 * kappa(0) (or zero).
  virtual double envelope_cutoff() const = 0;

  double variance() const { return value({0.0, 0.0}); }
  double derivative(MultiIndex alpha, Vec2 h) const;
};

using KernelPtr = std::shared_ptr<const StationaryKernel>;

// kappa(h) = g(|h|^2); subclasses give g and its first four derivatives.
class RadialKernel : public StationaryKernel {
 public:
  double value(Vec2 h) const override;
  Jet jet(Vec2 h) const override;
  bool isotropic() const override { return true; }
  virtual void radial_derivatives(double s, std::array<double, 5>& g) const = 0;
  virtual double radial_value(double s) const = 0;
};

// sigma^2 exp(-|h|^2 / (2 l^2)).
class BargmannFockKernel final : public RadialKernel {
 public:
  explicit BargmannFockKernel(double variance = 1.0, double length = 1.0);
  std::string name() const override { return "bargmann-fock"; }
  std::map<std::string, double> params() const override;
  bool radially_monotone() const override { return true; }
  double envelope_cutoff() const override;
  void radial_derivatives(double s, std::array<double, 5>& g) const override;
  double radial_value(double s) const override;

 private:
  double variance_, length_;
};

// sigma^2 (1 + |h|^2 / l^2)^(-p).
class RationalKernel final : public RadialKernel {
 public:
  RationalKernel(double variance, double length, double power);
  std::string name() const override { return "rational"; }
  std::map<std::string, double> params() const override;
  bool radially_monotone() const override { return true; }
  double envelope_cutoff() const override;
  void radial_derivatives(double s, std::array<double, 5>& g) const override;
  double radial_value(double s) const override;

 private:
  double variance_, length_, power_;
};

// Isotropic field whose spectral density is the standard Gaussian restricted
// to |k| <= k_max: kappa(r) = sigma^2 int_0^kmax e^{-k^2/2} J0(k r) k dk / Z.
class TruncatedSpectrumKernel final : public RadialKernel {
 public:
  TruncatedSpectrumKernel(double variance, double k_max, int nodes = 64);
  std::string name() const override { return "truncated-spectrum"; }
  std::map<std::string, double> params() const override;
  double envelope_cutoff() const override;
  void radial_derivatives(double s, std::array<double, 5>& g) const override;
  double radial_value(double s) const override;

 private:
  double variance_, k_max_, norm_;
  QuadRule rule_;
};

// Compactly supported product sigma^2 psi(h1/rho) psi(h2/rho) with the C^4
// Wendland function psi(r) = (1-|r|)_+^5 (8 r^2 + 5|r| + 1).
class WendlandProductKernel final : public StationaryKernel {
 public:
  WendlandProductKernel(double variance, double support);
  std::string name() const override { return "wendland-product"; }
  std::map<std::string, double> params() const override;
  double value(Vec2 h) const override;
  Jet jet(Vec2 h) const override;
  double envelope_cutoff() const override;

 private:
  double variance_, support_;
};

// Degree-n Kostlan covariance along a great circle: kappa(theta) = cos(theta)^n.
class KostlanCircleKernel final : public StationaryKernel {
 public:
  explicit KostlanCircleKernel(int degree);
  std::string name() const override { return "kostlan-circle"; }
  std::map<std::string, double> params() const override;
  int dimension() const override { return 1; }
  double value(Vec2 h) const override;
  Jet jet(Vec2 h) const override;
  double envelope_cutoff() const override { return 3.141592653589793; }
  int degree() const { return degree_; }

 private:
  int degree_;
};

// kappa == sigma^2: the constant field.
class ConstantKernel final : public StationaryKernel {
 public:
  explicit ConstantKernel(double variance = 1.0) : variance_(variance) {}
  std::string name() const override { return "constant"; }
  std::map<std::string, double> params() const override { return {{"variance", variance_}}; }
  double value(Vec2) const override { return variance_; }
  Jet jet(Vec2) const override { return Jet::constant(variance_); }
  bool radially_monotone() const override { return true; }
  double envelope_cutoff() const override { return 1e300; }

 private:
  double variance_;
};

// lambda * base.
class ScaledKernel final : public StationaryKernel {
 public:
  ScaledKernel(KernelPtr base, double lambda);
  std::string name() const override { return base_->name(); }
  std::map<std::string, double> params() const override;
  int dimension() const override { return base_->dimension(); }
  double value(Vec2 h) const override { return lambda_ * base_->value(h); }
  Jet jet(Vec2 h) const override { return lambda_ * base_->jet(h); }
  bool radially_monotone() const override { return base_->radially_monotone(); }
  bool isotropic() const override { return base_->isotropic(); }
  double envelope_cutoff() const override { return base_->envelope_cutoff(); }

 private:
  KernelPtr base_;
  double lambda_;
};

// Builds a kernel from its name and parameter map; unknown names raise an
// UnknownKernel error and unknown parameters a Validation error.
KernelPtr make_kernel(const std::string& name, const std::map<std::string, double>& params);
std::vector<std::string> kernel_names();

// d^ax_x d^ay_y K(x, y) = (-1)^{|ay|} d^{ax+ay} kappa(x - y).
double eval_kernel_derivative(const StationaryKernel& kernel, MultiIndex ax, MultiIndex ay, Vec2 x, Vec2 y);

// sup_{|h| >= r} |kappa(h)|.
double kappa_bar(const StationaryKernel& kernel, double r);
// Whether kappa_bar for this kernel comes from a grid search.
inline bool kappa_bar_is_approximate(const StationaryKernel& kernel) { return !kernel.radially_monotone(); }

// Orthonormal tangent frame of a stratum of an affine stratified set in the plane.
struct Stratum {
  int dim = 2;
  Vec2 tangent[2] = {{1.0, 0.0}, {0.0, 1.0}};

  static Stratum interior() { return {}; }
  static Stratum edge(Vec2 direction) {
    Stratum s;
    s.dim = 1;
    double n = norm(direction);
    s.tangent[0] = {direction.x / n, direction.y / n};
    s.tangent[1] = {0.0, 0.0};
    return s;
  }
  static Stratum corner() {
    Stratum s;
    s.dim = 0;
    s.tangent[0] = s.tangent[1] = {0.0, 0.0};
    return s;
  }
  // Number of independent Hessian entries along the stratum.
  int hessian_size() const { return dim * (dim + 1) / 2; }
};

// A linear functional of the field: f(p), a first or a second directional derivative at p.
// `copy` tags which field of an interpolated pair it reads (0 or 1).
struct Functional {
  Vec2 point;
  int order = 0;
  Vec2 dir[2] = {};
  int copy = 0;

  static Functional value(Vec2 p, int copy = 0) { return {p, 0, {}, copy}; }
  static Functional first(Vec2 p, Vec2 u, int copy = 0) { return {p, 1, {u, {}}, copy}; }
  static Functional second(Vec2 p, Vec2 u, Vec2 v, int copy = 0) { return {p, 2, {u, v}, copy}; }
};

// Cov(a f, b f) from the Taylor jet of kappa at the lag a.point - b.point.
double functional_cov(const Jet& jet_at_lag, const Functional& a, const Functional& b);
double functional_cov(const StationaryKernel& kernel, const Functional& a, const Functional& b);
// Covariance matrix between two functional lists. Entries between different
// copies are multiplied by t (the interpolated-pair structure).
Eigen::MatrixXd functional_cov_matrix(const StationaryKernel& kernel, std::span<const Functional> a,
                                      std::span<const Functional> b, double t = 1.0);

// (f(x), tangential gradient along the stratum).
std::vector<Functional> constraint_functionals(Vec2 x, const Stratum& F, int copy = 0);
// Upper-triangular tangential Hessian entries: (uu) for edges, (uu, uv, vv) for interiors.
std::vector<Functional> hessian_functionals(Vec2 x, const Stratum& F, int copy = 0);

// Covariance of (f(x1), grad f|F1 (x1), f(x2), grad f|F2 (x2)).
GaussianSpec build_delta_matrix(const StationaryKernel& kernel, Vec2 x1, const Stratum& F1, Vec2 x2,
                                const Stratum& F2);

struct NondegeneracyCheck {
  double det = 0.0;
  bool pass = false;
};

NondegeneracyCheck check_nondegeneracy(const StationaryKernel& kernel, Vec2 x1, Vec2 x2, double floor = 1e-12);

// Covariance of the degree-n Kostlan field on the unit sphere: <x, y>^n.
class SphericalKostlanKernel {
 public:
  SphericalKostlanKernel(int degree, int ambient_dimension);
  int degree() const { return degree_; }
  int ambient_dimension() const { return ambient_; }
  double operator()(std::span<const double> x, std::span<const double> y) const;
  // The same covariance along a great circle, as a function of the angle.
  KernelPtr circle_kernel() const;

 private:
  int degree_, ambient_;
};

}  // namespace topocov
