#include "topocov/kernels.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace topocov {

double StationaryKernel::derivative(MultiIndex alpha, Vec2 h) const {
  require(alpha.a >= 0 && alpha.b >= 0, ErrorKind::Validation, "negative multi-index");
  if (alpha.order() > max_order()) {
    std::ostringstream msg;
    msg << "unsupported derivative order " << alpha.order() << " for kernel " << name() << " (max "
        << max_order() << ")";
    fail(ErrorKind::Unsupported, msg.str());
  }
  return jet(h).derivative(alpha.a, alpha.b);
}

double RadialKernel::value(Vec2 h) const { return radial_value(h.x * h.x + h.y * h.y); }

Jet RadialKernel::jet(Vec2 h) const {
  Jet s;
  s.at(0, 0) = h.x * h.x + h.y * h.y;
  s.at(1, 0) = 2.0 * h.x;
  s.at(0, 1) = 2.0 * h.y;
  s.at(2, 0) = 1.0;
  s.at(0, 2) = 1.0;
  std::array<double, 5> g;
  radial_derivatives(s.at(0, 0), g);
  return compose(g, s);
}

// ---------------------------------------------------------------- Bargmann-Fock

BargmannFockKernel::BargmannFockKernel(double variance, double length)
    : variance_(variance), length_(length) {
  require(variance > 0.0 && length > 0.0, ErrorKind::Validation,
          "bargmann-fock: variance and length must be positive");
}

std::map<std::string, double> BargmannFockKernel::params() const {
  return {{"variance", variance_}, {"length", length_}};
}

double BargmannFockKernel::envelope_cutoff() const { return length_ * std::sqrt(2.0 * 17.0 * std::log(10.0)); }

double BargmannFockKernel::radial_value(double s) const {
  return variance_ * std::exp(-s / (2.0 * length_ * length_));
}

void BargmannFockKernel::radial_derivatives(double s, std::array<double, 5>& g) const {
  const double a = 1.0 / (2.0 * length_ * length_);
  g[0] = variance_ * std::exp(-a * s);
  for (int k = 1; k < 5; ++k) g[k] = -a * g[k - 1];
}

// ---------------------------------------------------------------- rational

RationalKernel::RationalKernel(double variance, double length, double power)
    : variance_(variance), length_(length), power_(power) {
  require(variance > 0.0 && length > 0.0 && power > 0.0, ErrorKind::Validation,
          "rational: variance, length and power must be positive");
}

std::map<std::string, double> RationalKernel::params() const {
  return {{"variance", variance_}, {"length", length_}, {"power", power_}};
}

double RationalKernel::envelope_cutoff() const {
  return length_ * std::sqrt(std::pow(1e17, 1.0 / power_) - 1.0);
}

double RationalKernel::radial_value(double s) const {
  return variance_ * std::pow(1.0 + s / (length_ * length_), -power_);
}

void RationalKernel::radial_derivatives(double s, std::array<double, 5>& g) const {
  const double l2 = length_ * length_;
  const double base = 1.0 + s / l2;
  double coeff = variance_;
  for (int k = 0; k < 5; ++k) {
    g[k] = coeff * std::pow(base, -power_ - k);
    coeff *= (-power_ - k) / l2;
  }
}

// ---------------------------------------------------------------- truncated spectrum

namespace {

// J_n(z) / (z/2)^n, finite at z = 0 where it equals 1/n!.
double scaled_bessel(int n, double z) {
  if (z < 2.0) {
    double q = -0.25 * z * z;
    double term = 1.0;
    for (int k = 1; k <= n; ++k) term /= k;
    double sum = term;
    for (int m = 1; m < 30; ++m) {
      term *= q / (m * double(n + m));
      sum += term;
      if (std::abs(term) < 1e-18 * std::abs(sum)) break;
    }
    return sum;
  }
  return std::cyl_bessel_j(double(n), z) / std::pow(0.5 * z, n);
}

}  // namespace

TruncatedSpectrumKernel::TruncatedSpectrumKernel(double variance, double k_max, int nodes)
    : variance_(variance), k_max_(k_max) {
  require(variance > 0.0 && k_max > 0.0 && nodes >= 8, ErrorKind::Validation,
          "truncated-spectrum: variance, k_max must be positive and nodes >= 8");
  std::vector<double> breaks;
  int panels = std::max(1, nodes / 8);
  for (int p = 0; p <= panels; ++p) breaks.push_back(k_max * p / panels);
  rule_ = composite_gauss_legendre(8, breaks);
  norm_ = 1.0 - std::exp(-0.5 * k_max * k_max);
}

std::map<std::string, double> TruncatedSpectrumKernel::params() const {
  return {{"variance", variance_}, {"k_max", k_max_}, {"nodes", double(rule_.size())}};
}

double TruncatedSpectrumKernel::envelope_cutoff() const { return 60.0; }

double TruncatedSpectrumKernel::radial_value(double s) const {
  std::array<double, 5> g;
  radial_derivatives(s, g);
  return g[0];
}

void TruncatedSpectrumKernel::radial_derivatives(double s, std::array<double, 5>& g) const {
  g.fill(0.0);
  const double r = std::sqrt(std::max(s, 0.0));
  for (int i = 0; i < rule_.size(); ++i) {
    double k = rule_.nodes[i];
    double base = rule_.weights[i] * std::exp(-0.5 * k * k) * k;
    double factor = 1.0;
    for (int n = 0; n < 5; ++n) {
      g[n] += base * factor * scaled_bessel(n, k * r);
      factor *= -0.25 * k * k;
    }
  }
  for (double& v : g) v *= variance_ / norm_;
}

// ---------------------------------------------------------------- Wendland product

namespace {

// psi(r) = 1 - 7r^2 + 35r^4 - 56r^5 + 35r^6 - 8r^7 on [0,1].
constexpr double kWendland[8] = {1.0, 0.0, -7.0, 0.0, 35.0, -56.0, 35.0, -8.0};

// Taylor coefficients (k = 0..4) of r -> psi(r / rho) about r0.
std::array<double, 5> wendland_taylor(double r0, double rho) {
  std::array<double, 5> c{};
  double x = std::abs(r0) / rho;
  if (x >= 1.0) return c;
  double sign = r0 < 0.0 ? -1.0 : 1.0;
  // Coefficients of p(x + d) in d are sum_j a_j C(j,k) x^{j-k}.
  for (int k = 0; k <= 4; ++k) {
    double sum = 0.0;
    for (int j = k; j < 8; ++j) {
      double binom = 1.0;
      for (int q = 0; q < k; ++q) binom = binom * (j - q) / (q + 1);
      sum += kWendland[j] * binom * std::pow(x, j - k);
    }
    c[k] = sum * std::pow(sign / rho, k);
  }
  return c;
}

}  // namespace

WendlandProductKernel::WendlandProductKernel(double variance, double support)
    : variance_(variance), support_(support) {
  require(variance > 0.0 && support > 0.0, ErrorKind::Validation,
          "wendland-product: variance and support must be positive");
}

std::map<std::string, double> WendlandProductKernel::params() const {
  return {{"variance", variance_}, {"support", support_}};
}

double WendlandProductKernel::value(Vec2 h) const {
  return variance_ * wendland_taylor(h.x, support_)[0] * wendland_taylor(h.y, support_)[0];
}

Jet WendlandProductKernel::jet(Vec2 h) const {
  return variance_ * Jet::outer(wendland_taylor(h.x, support_), wendland_taylor(h.y, support_));
}

double WendlandProductKernel::envelope_cutoff() const { return support_ * std::numbers::sqrt2; }

// ---------------------------------------------------------------- Kostlan circle

KostlanCircleKernel::KostlanCircleKernel(int degree) : degree_(degree) {
  require(degree >= 0, ErrorKind::Validation, "kostlan: degree must be non-negative");
}

std::map<std::string, double> KostlanCircleKernel::params() const { return {{"degree", double(degree_)}}; }

double KostlanCircleKernel::value(Vec2 h) const { return std::pow(std::cos(h.x), degree_); }

Jet KostlanCircleKernel::jet(Vec2 h) const {
  const double c = std::cos(h.x), s = std::sin(h.x);
  std::array<double, 5> cu{c, -s, -0.5 * c, s / 6.0, c / 24.0};
  std::array<double, 5> one{1.0, 0.0, 0.0, 0.0, 0.0};
  Jet base = Jet::outer(cu, one);
  Jet result = Jet::constant(1.0);
  int n = degree_;
  while (n > 0) {
    if (n & 1) result = result * base;
    n >>= 1;
    if (n) base = base * base;
  }
  return result;
}

// ---------------------------------------------------------------- scaled

ScaledKernel::ScaledKernel(KernelPtr base, double lambda) : base_(std::move(base)), lambda_(lambda) {
  require(lambda > 0.0, ErrorKind::Validation, "kernel scale factor must be positive");
}

std::map<std::string, double> ScaledKernel::params() const {
  auto p = base_->params();
  p["scale"] = lambda_;
  return p;
}

// ---------------------------------------------------------------- factory

namespace {

double take(std::map<std::string, double>& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  if (it == p.end()) return fallback;
  double v = it->second;
  p.erase(it);
  return v;
}

}  // namespace

std::vector<std::string> kernel_names() {
  return {"bargmann-fock", "rational", "truncated-spectrum", "wendland-product", "kostlan-circle", "constant"};
}

KernelPtr make_kernel(const std::string& name, const std::map<std::string, double>& params) {
  auto p = params;
  KernelPtr k;
  if (name == "bargmann-fock") {
    double v = take(p, "variance", 1.0), l = take(p, "length", 1.0);
    k = std::make_shared<BargmannFockKernel>(v, l);
  } else if (name == "rational") {
    double v = take(p, "variance", 1.0), l = take(p, "length", 1.0), pw = take(p, "power", 2.0);
    k = std::make_shared<RationalKernel>(v, l, pw);
  } else if (name == "truncated-spectrum") {
    double v = take(p, "variance", 1.0), km = take(p, "k_max", 3.0), nodes = take(p, "nodes", 256.0);
    k = std::make_shared<TruncatedSpectrumKernel>(v, km, static_cast<int>(nodes));
  } else if (name == "wendland-product") {
    double v = take(p, "variance", 1.0), s = take(p, "support", 3.0);
    k = std::make_shared<WendlandProductKernel>(v, s);
  } else if (name == "kostlan-circle") {
    double d = take(p, "degree", 16.0);
    k = std::make_shared<KostlanCircleKernel>(static_cast<int>(d));
  } else if (name == "constant") {
    k = std::make_shared<ConstantKernel>(take(p, "variance", 1.0));
  } else {
    fail(ErrorKind::UnknownKernel, "unknown kernel '" + name + "'");
  }
  double scale = take(p, "scale", 1.0);
  if (!p.empty()) fail(ErrorKind::Validation, "kernel " + name + ": unknown parameter '" + p.begin()->first + "'");
  if (scale != 1.0) k = std::make_shared<ScaledKernel>(k, scale);
  return k;
}

// ---------------------------------------------------------------- derivatives

double eval_kernel_derivative(const StationaryKernel& kernel, MultiIndex ax, MultiIndex ay, Vec2 x, Vec2 y) {
  if (ax.order() > 2 || ay.order() > 2)
    fail(ErrorKind::Unsupported, "unsupported derivative: each side is limited to order 2");
  MultiIndex total{ax.a + ay.a, ax.b + ay.b};
  double sign = (ay.order() % 2) ? -1.0 : 1.0;
  return sign * kernel.derivative(total, x - y);
}

double kappa_bar(const StationaryKernel& kernel, double r) {
  require(r >= 0.0, ErrorKind::Validation, "kappa_bar: radius must be non-negative");
  if (kernel.radially_monotone()) return std::abs(kernel.value({r, 0.0}));
  const double cutoff = std::max(kernel.envelope_cutoff(), r);
  const int n_radii = 4000;
  const int n_angles = (kernel.isotropic() || kernel.dimension() == 1) ? 1 : 90;
  double best = 0.0;
  for (int i = 0; i <= n_radii; ++i) {
    double rad = r + (cutoff - r) * i / n_radii;
    for (int a = 0; a < n_angles; ++a) {
      double phi = std::numbers::pi * a / n_angles;
      best = std::max(best, std::abs(kernel.value({rad * std::cos(phi), rad * std::sin(phi)})));
    }
  }
  return best;
}

// ---------------------------------------------------------------- functionals

double functional_cov(const Jet& jet, const Functional& a, const Functional& b) {
  Vec2 dirs[4];
  int d = 0;
  for (int k = 0; k < a.order; ++k) dirs[d++] = a.dir[k];
  for (int k = 0; k < b.order; ++k) dirs[d++] = b.dir[k];
  // Coefficients of prod_k (w_k.x X + w_k.y Y), indexed by the power of X.
  double poly[5] = {1.0, 0.0, 0.0, 0.0, 0.0};
  for (int k = 0; k < d; ++k) {
    double next[5] = {0.0, 0.0, 0.0, 0.0, 0.0};
    for (int i = 0; i <= k; ++i) {
      next[i + 1] += poly[i] * dirs[k].x;
      next[i] += poly[i] * dirs[k].y;
    }
    std::copy(next, next + 5, poly);
  }
  double sum = 0.0;
  for (int i = 0; i <= d; ++i)
    if (poly[i] != 0.0) sum += poly[i] * jet.derivative(i, d - i);
  return (b.order % 2) ? -sum : sum;
}

double functional_cov(const StationaryKernel& kernel, const Functional& a, const Functional& b) {
  if (a.order + b.order > kernel.max_order())
    fail(ErrorKind::Unsupported, "functional covariance exceeds the kernel's derivative order");
  return functional_cov(kernel.jet(a.point - b.point), a, b);
}

namespace {

struct Block {
  int begin, end;
  bool all_values;
};

std::vector<Block> point_blocks(std::span<const Functional> f) {
  std::vector<Block> out;
  int n = static_cast<int>(f.size());
  int i = 0;
  while (i < n) {
    int j = i + 1;
    while (j < n && f[j].point.x == f[i].point.x && f[j].point.y == f[i].point.y && f[j].copy == f[i].copy) ++j;
    bool values = true;
    for (int k = i; k < j; ++k) values = values && f[k].order == 0;
    if (values) {
      for (int k = i; k < j; ++k) out.push_back({k, k + 1, true});
    } else {
      out.push_back({i, j, false});
    }
    i = j;
  }
  return out;
}

}  // namespace

Eigen::MatrixXd functional_cov_matrix(const StationaryKernel& kernel, std::span<const Functional> a,
                                      std::span<const Functional> b, double t) {
  Eigen::MatrixXd m(a.size(), b.size());
  const bool same = a.data() == b.data() && a.size() == b.size();
  auto ba = point_blocks(a), bb = point_blocks(b);
  for (std::size_t p = 0; p < ba.size(); ++p) {
    for (std::size_t q = same ? p : 0; q < bb.size(); ++q) {
      const Block &u = ba[p], &v = bb[q];
      double factor = a[u.begin].copy == b[v.begin].copy ? 1.0 : t;
      Vec2 lag = a[u.begin].point - b[v.begin].point;
      if (u.all_values && v.all_values) {
        m(u.begin, v.begin) = factor * kernel.value(lag);
      } else {
        Jet jet = kernel.jet(lag);
        for (int i = u.begin; i < u.end; ++i)
          for (int j = v.begin; j < v.end; ++j) {
            if (a[i].order + b[j].order > kernel.max_order())
              fail(ErrorKind::Unsupported, "functional covariance exceeds the kernel's derivative order");
            m(i, j) = factor * functional_cov(jet, a[i], b[j]);
          }
      }
      if (same && q != p)
        for (int i = u.begin; i < u.end; ++i)
          for (int j = v.begin; j < v.end; ++j) m(j, i) = m(i, j);
    }
  }
  return m;
}

std::vector<Functional> constraint_functionals(Vec2 x, const Stratum& F, int copy) {
  std::vector<Functional> out{Functional::value(x, copy)};
  for (int k = 0; k < F.dim; ++k) out.push_back(Functional::first(x, F.tangent[k], copy));
  return out;
}

std::vector<Functional> hessian_functionals(Vec2 x, const Stratum& F, int copy) {
  std::vector<Functional> out;
  for (int i = 0; i < F.dim; ++i)
    for (int j = i; j < F.dim; ++j) out.push_back(Functional::second(x, F.tangent[i], F.tangent[j], copy));
  return out;
}

GaussianSpec build_delta_matrix(const StationaryKernel& kernel, Vec2 x1, const Stratum& F1, Vec2 x2,
                                const Stratum& F2) {
  if (x1.x == x2.x && x1.y == x2.y)
    fail(ErrorKind::Degenerate, "build_delta_matrix: x1 = x2 gives a degenerate vector by construction");
  auto f = constraint_functionals(x1, F1);
  auto g = constraint_functionals(x2, F2);
  f.insert(f.end(), g.begin(), g.end());
  Eigen::MatrixXd cov = functional_cov_matrix(kernel, f, f);
  GaussianSpec out;
  out.mean = Eigen::VectorXd::Zero(cov.rows());
  out.cov = 0.5 * (cov + cov.transpose());
  return out;
}

NondegeneracyCheck check_nondegeneracy(const StationaryKernel& kernel, Vec2 x1, Vec2 x2, double floor) {
  Stratum full = kernel.dimension() == 1 ? Stratum::edge({1.0, 0.0}) : Stratum::interior();
  NondegeneracyCheck out;
  out.det = det_cov(build_delta_matrix(kernel, x1, full, x2, full).cov);
  out.pass = out.det > floor;
  return out;
}

// ---------------------------------------------------------------- spherical Kostlan

SphericalKostlanKernel::SphericalKostlanKernel(int degree, int ambient_dimension)
    : degree_(degree), ambient_(ambient_dimension) {
  require(degree >= 0 && ambient_dimension >= 2, ErrorKind::Validation,
          "kostlan: degree >= 0 and ambient dimension >= 2 required");
}

double SphericalKostlanKernel::operator()(std::span<const double> x, std::span<const double> y) const {
  require(static_cast<int>(x.size()) == ambient_ && static_cast<int>(y.size()) == ambient_,
          ErrorKind::Validation, "kostlan: point dimension mismatch");
  double ip = 0.0;
  for (int k = 0; k < ambient_; ++k) ip += x[k] * y[k];
  return std::pow(ip, degree_);
}

KernelPtr SphericalKostlanKernel::circle_kernel() const { return std::make_shared<KostlanCircleKernel>(degree_); }

}  // namespace topocov
