#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "topocov/kernels.hpp"
#include "topocov/rng.hpp"

namespace topocov {

struct Grid2D {
  Vec2 origin;
  double h = 0.25;
  int nx = 1;
  int ny = 1;

  Vec2 node(int i, int j) const { return {origin.x + i * h, origin.y + j * h}; }
  int size() const { return nx * ny; }
  // Grid whose nodes run over the rectangle with spacing h; the rectangle's
  // sides must be multiples of h.
  static Grid2D covering(const Rect& box, double h);
};

// Exact jet of a realization at a marked point, in the stratum's tangent frame.
struct MarkedJet {
  Vec2 point;
  Stratum stratum;
  int i = -1, j = -1;  // grid node carrying the point
  double value = 0.0;
  double grad[2] = {0.0, 0.0};
  double hess[3] = {0.0, 0.0, 0.0};  // (uu) or (uu, uv, vv)
  bool zero_constrained = false;

  // Determinant of the tangential Hessian (1 on a corner).
  double hessian_det() const;
};

// A realization on a rectilinear grid; values are row-major, x fastest.
struct FieldSample {
  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<double> values;
  std::optional<Grid2D> grid;  // set when the axes are uniform
  std::vector<MarkedJet> jets;
  std::uint64_t seed = 0;

  int nx() const { return static_cast<int>(xs.size()); }
  int ny() const { return static_cast<int>(ys.size()); }
  double at(int i, int j) const { return values[static_cast<std::size_t>(j) * xs.size() + i]; }
  double& at(int i, int j) { return values[static_cast<std::size_t>(j) * xs.size() + i]; }
  Vec2 node(int i, int j) const { return {xs[i], ys[j]}; }

  static FieldSample on_grid(const Grid2D& g);
  static FieldSample on_axes(std::vector<double> xs, std::vector<double> ys);
};

// Index of the axis entry equal to v within tol, or -1.
int axis_index(const std::vector<double>& axis, double v, double tol = 1e-9);

// Export: "# topocov-field v1" header, then nx,ny,h,origin, axes, values.
void write_field_csv(const FieldSample& s, std::ostream& out);
FieldSample read_field_csv(std::istream& in);
void write_field_binary(const FieldSample& s, std::ostream& out);
FieldSample read_field_binary(std::istream& in);

// Factor G (n x r) with G G^T = cov up to a Schur-complement remainder whose
// largest diagonal is below rel_tol * max diag(cov); pivoted Cholesky.
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& cov, double rel_tol = 1e-14);

enum class SamplingMethod { Auto, Exact, Fft };

// Periodic embedding of a uniform grid covariance, synthesised by FFT.
class CirculantEmbedding {
 public:
  CirculantEmbedding(const StationaryKernel& kernel, const Grid2D& grid, double padding);
  ~CirculantEmbedding();
  CirculantEmbedding(const CirculantEmbedding&) = delete;
  CirculantEmbedding& operator=(const CirculantEmbedding&) = delete;

  // Two independent centred realizations on the grid (row-major).
  void draw_pair(Rng& rng, double* out1, double* out2) const;
  int m1() const { return m1_; }
  int m2() const { return m2_; }
  double min_eigenvalue() const { return min_eig_; }

 private:
  Grid2D grid_;
  int m1_ = 0, m2_ = 0;
  std::vector<double> sqrt_eig_;
  double min_eig_ = 0.0;
  void* plan_ = nullptr;
};

// Joint sampler of a stationary field on one or several grids.
class GridSampler {
 public:
  GridSampler(KernelPtr kernel, std::vector<Grid2D> grids, MeanFunction mean = {},
              SamplingMethod method = SamplingMethod::Auto);
  ~GridSampler();

  std::vector<FieldSample> draw(Rng& rng) const;
  // Values of all grids concatenated, mean included.
  void draw_values(Rng& rng, double* out) const;
  // Two independent realizations (one FFT synthesis on the FFT path).
  void draw_values_pair(Rng& rng, double* out1, double* out2) const;

  int total_nodes() const { return total_; }
  const std::vector<Grid2D>& grids() const { return grids_; }
  SamplingMethod method() const { return method_; }
  int factor_rank() const { return static_cast<int>(factor_.cols()); }

 private:
  KernelPtr kernel_;
  std::vector<Grid2D> grids_;
  MeanFunction mean_;
  SamplingMethod method_;
  int total_ = 0;
  Eigen::MatrixXd factor_;
  std::unique_ptr<CirculantEmbedding> fft_;
};

FieldSample sample_stationary(KernelPtr kernel, const Grid2D& grid, MeanFunction mean, Rng& rng,
                              SamplingMethod method = SamplingMethod::Auto);

// (f_t^1, f_t^2) with f_t^2 = t (f - mu) + sqrt(1 - t^2) (f~ - mu) + mu.
std::pair<FieldSample, FieldSample> sample_interpolated_pair(KernelPtr kernel, const Grid2D& grid, double t,
                                                             MeanFunction mean, Rng& rng);
std::pair<FieldSample, FieldSample> interpolate_pair(const FieldSample& f, const FieldSample& ftilde, double t,
                                                     MeanFunction mean);

struct ConstraintPoint {
  Vec2 x;
  Stratum stratum;
};

// Axis lines of [a, b] at spacing h with the line nearest to c moved onto c,
// or c inserted when the nearest line is an end point.
std::vector<double> snapped_axis(double a, double b, double h, std::optional<double> c);

// Conditional law of the interpolated pair (f_t^1 on box1, f_t^2 on box2)
// given (f_t^1(x1), grad f_t^1|F1 (x1), f_t^2(x2), grad f_t^2|F2 (x2)) = 0,
// together with the tangential Hessians at x1 and x2. One unconditioned base
// draw serves every t in the list: conditioning subtracts the regression of
// the draw's own constraint vector.
class ConditionalPairSampler {
 public:
  ConditionalPairSampler(KernelPtr kernel, std::vector<double> t_values, const Rect& box1, ConstraintPoint c1,
                         const Rect& box2, ConstraintPoint c2, double h, MeanFunction mean = {});

  struct BaseDraw {
    Eigen::VectorXd f;
    Eigen::VectorXd ftilde;
  };

  BaseDraw draw_base(Rng& rng) const;
  void draw_base(Rng& rng, BaseDraw& out, Eigen::VectorXd& scratch1, Eigen::VectorXd& scratch2) const;
  std::pair<FieldSample, FieldSample> realize(const BaseDraw& base, int t_index) const;
  std::pair<FieldSample, FieldSample> draw(Rng& rng, int t_index = 0) const;

  // Constraint residual of the base draw at t (centred constraint minus target).
  void residual(const BaseDraw& base, int t_index, double* r) const;
  // Grid values of box `which` (0 or 1), row-major, with the constrained node set to 0.
  void realize_grid(const BaseDraw& base, int t_index, int which, const double* r, double* values) const;
  // Tangential Hessian entries at the constrained point of box `which`.
  void realize_hessian(const BaseDraw& base, int t_index, int which, const double* r, double* hess) const;

  int t_count() const { return static_cast<int>(t_values_.size()); }
  double t(int k) const { return t_values_[k]; }
  // Density at 0 of the raw constraint vector.
  double gamma(int t_index) const { return gamma_[t_index]; }
  const GaussianSpec& constraint_law(int t_index) const { return constraint_law_[t_index]; }
  const std::vector<double>& xs(int which) const { return which == 0 ? xs1_ : xs2_; }
  const std::vector<double>& ys(int which) const { return which == 0 ? ys1_ : ys2_; }
  // Grid node (i, j) of the constrained point of box `which`.
  std::pair<int, int> marked_node(int which) const { return which == 0 ? node1_ : node2_; }
  const ConstraintPoint& constraint(int which) const { return which == 0 ? c1_ : c2_; }
  int constraint_size() const { return nc_; }

 private:
  KernelPtr kernel_;
  std::vector<double> t_values_;
  ConstraintPoint c1_, c2_;
  MeanFunction mean_;
  std::vector<double> xs1_, ys1_, xs2_, ys2_;
  std::pair<int, int> node1_, node2_;
  int n_g1_ = 0, n_g2_ = 0, nc1_ = 0, nh1_ = 0, nc2_ = 0, nh2_ = 0, nc_ = 0;
  // Offsets into the base vectors.
  int off_c1_ = 0, off_h1_ = 0, off_c2_ = 0, off_h2_ = 0, offt_c2_ = 0, offt_h2_ = 0;
  Eigen::MatrixXd factor_f_, factor_ft_;
  std::vector<Eigen::MatrixXd> regression_;  // per t: rows [G1 | G2 | H1 | H2], cols = constraint
  std::vector<double> gamma_;
  std::vector<GaussianSpec> constraint_law_;
  std::vector<double> target_;
};

std::pair<FieldSample, FieldSample> sample_conditional_pair(const ConditionalPairSampler& sampler, Rng& rng,
                                                            int t_index = 0);

enum class KostlanDomain { Circle, Sphere };

// Degree-n Kostlan polynomial sum_a sqrt(multinomial(n, a)) g_a x^a on a
// discretized circle (resolution angles) or sphere (resolution polar x
// 2 resolution azimuthal nodes).
class KostlanSampler {
 public:
  KostlanSampler(int degree, KostlanDomain domain, int resolution);

  FieldSample draw(Rng& rng) const;
  void draw_values(Rng& rng, double* out) const;
  int size() const { return static_cast<int>(xs_.size() * ys_.size()); }
  const std::vector<double>& xs() const { return xs_; }
  const std::vector<double>& ys() const { return ys_; }

 private:
  int degree_;
  KostlanDomain domain_;
  std::vector<double> xs_, ys_;
  // azimuthal_[m](i, k) = sqrt(C(m, k)) cos^k sin^(m-k) of angle xs[i]
  std::vector<Eigen::MatrixXd> azimuthal_;
  // polar_(j, k) = sqrt(C(n, k)) cos^k sin^(n-k) of polar angle ys[j]
  Eigen::MatrixXd polar_;
};

FieldSample sample_kostlan(int degree, KostlanDomain domain, int resolution, Rng& rng);

}  // namespace topocov
