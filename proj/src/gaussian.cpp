#include "topocov/gaussian.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "topocov/core.hpp"

namespace topocov {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<int> complement(int n, const std::vector<int>& idx) {
  std::vector<char> used(n, 0);
  for (int i : idx) {
    require(i >= 0 && i < n, ErrorKind::Validation, "conditioning index out of range");
    require(!used[i], ErrorKind::Validation, "repeated conditioning index");
    used[i] = 1;
  }
  std::vector<int> out;
  for (int i = 0; i < n; ++i)
    if (!used[i]) out.push_back(i);
  return out;
}

Eigen::MatrixXd sub(const Eigen::MatrixXd& m, const std::vector<int>& r, const std::vector<int>& c) {
  Eigen::MatrixXd out(r.size(), c.size());
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < c.size(); ++j) out(i, j) = m(r[i], c[j]);
  return out;
}

Eigen::VectorXd sub(const Eigen::VectorXd& v, const std::vector<int>& r) {
  Eigen::VectorXd out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) out(i) = v(r[i]);
  return out;
}

}  // namespace

GaussianSpec::GaussianSpec(Eigen::VectorXd mean_, Eigen::MatrixXd cov_)
    : mean(std::move(mean_)), cov(std::move(cov_)) {
  require(cov.rows() == cov.cols() && cov.rows() == mean.size(), ErrorKind::Validation,
          "Gaussian spec: mean and covariance sizes differ");
  if (cov.size() == 0) return;
  double scale = std::max(cov.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  require((cov - cov.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale, ErrorKind::Validation,
          "Gaussian spec: covariance is not symmetric");
  cov = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  require(es.eigenvalues().minCoeff() >= -1e-10 * std::abs(cov.trace()), ErrorKind::Validation,
          "Gaussian spec: covariance is not positive semidefinite");
}

GaussianSpec GaussianSpec::centred(Eigen::MatrixXd cov_) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(cov_.rows());
  return GaussianSpec(std::move(m), std::move(cov_));
}

GaussianSpec ConditionalDecomposition::law_given(const Eigen::VectorXd& values) const {
  GaussianSpec out;
  out.mean = offset + regression * values;
  out.cov = cov;
  return out;
}

SymmetricInverse symmetric_inverse(const Eigen::MatrixXd& cov, const char* what) {
  SymmetricInverse out;
  const int n = static_cast<int>(cov.rows());
  if (n == 0) {
    out.inverse.resize(0, 0);
    return out;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (cov + cov.transpose()));
  const Eigen::VectorXd& ev = es.eigenvalues();
  double floor = 1e-14 * std::abs(cov.trace());
  out.min_eigenvalue = ev.minCoeff();
  if (!(out.min_eigenvalue > floor)) {
    std::ostringstream msg;
    msg << "degenerate " << what << ": smallest eigenvalue " << out.min_eigenvalue
        << " is below 1e-14 * trace";
    fail(ErrorKind::Degenerate, msg.str());
  }
  Eigen::VectorXd inv = ev.cwiseInverse();
  out.inverse = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  out.log_det = ev.array().log().sum();
  return out;
}

ConditionalDecomposition decompose(const GaussianSpec& spec, const std::vector<int>& given) {
  ConditionalDecomposition d;
  d.given_indices = given;
  d.free_indices = complement(spec.size(), given);
  Eigen::MatrixXd s_ff = sub(spec.cov, d.free_indices, d.free_indices);
  Eigen::MatrixXd s_fg = sub(spec.cov, d.free_indices, given);
  Eigen::MatrixXd s_gg = sub(spec.cov, given, given);
  Eigen::VectorXd m_f = sub(spec.mean, d.free_indices);
  Eigen::VectorXd m_g = sub(spec.mean, given);
  if (given.empty()) {
    d.regression = Eigen::MatrixXd::Zero(d.free_indices.size(), 0);
    d.offset = m_f;
    d.cov = s_ff;
    return d;
  }
  SymmetricInverse inv = symmetric_inverse(s_gg, "conditioning block");
  d.regression = s_fg * inv.inverse;
  d.offset = m_f - d.regression * m_g;
  d.cov = s_ff - d.regression * s_fg.transpose();
  d.cov = 0.5 * (d.cov + d.cov.transpose());
  return d;
}

GaussianSpec condition(const GaussianSpec& spec, const std::vector<int>& indices,
                       const Eigen::VectorXd& values) {
  require(static_cast<int>(values.size()) == static_cast<int>(indices.size()), ErrorKind::Validation,
          "condition: one value per conditioning index is required");
  return decompose(spec, indices).law_given(values);
}

double log_density_at(const GaussianSpec& spec, const Eigen::VectorXd& point) {
  require(point.size() == spec.mean.size(), ErrorKind::Validation, "density: dimension mismatch");
  const int k = spec.size();
  if (k == 0) return 0.0;
  SymmetricInverse inv = symmetric_inverse(spec.cov, "density covariance");
  Eigen::VectorXd d = point - spec.mean;
  double q = d.dot(inv.inverse * d);
  return -0.5 * (k * std::log(2.0 * std::numbers::pi) + inv.log_det + q);
}

double density_at(const GaussianSpec& spec, const Eigen::VectorXd& point) {
  return std::exp(log_density_at(spec, point));
}

double det_cov(const Eigen::MatrixXd& cov) {
  if (cov.size() == 0) return 1.0;
  return std::max(0.0, cov.partialPivLu().determinant());
}

double det_cov(const GaussianSpec& spec) { return det_cov(spec.cov); }

GaussianSpec interpolated_pair_cov(const Eigen::MatrixXd& block11, const Eigen::MatrixXd& block22,
                                   const Eigen::MatrixXd& cross, double t,
                                   const Eigen::VectorXd& mean1, const Eigen::VectorXd& mean2) {
  require(t >= 0.0 && t <= 1.0, ErrorKind::Validation, "interpolation parameter t must lie in [0,1]");
  const Eigen::Index n1 = block11.rows(), n2 = block22.rows();
  require(block11.cols() == n1 && block22.cols() == n2 && cross.rows() == n1 && cross.cols() == n2,
          ErrorKind::Validation, "interpolated pair: inconsistent block sizes");
  Eigen::MatrixXd cov(n1 + n2, n1 + n2);
  cov.topLeftCorner(n1, n1) = block11;
  cov.bottomRightCorner(n2, n2) = block22;
  cov.topRightCorner(n1, n2) = t * cross;
  cov.bottomLeftCorner(n2, n1) = t * cross.transpose();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n1 + n2);
  if (mean1.size() == n1) mean.head(n1) = mean1;
  if (mean2.size() == n2) mean.tail(n2) = mean2;
  return GaussianSpec(std::move(mean), std::move(cov));
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double bvn_upper(double h, double k, double r) {
  if (h == kInf || k == kInf) return 0.0;
  if (h == -kInf) return k == -kInf ? 1.0 : std_normal_cdf(-k);
  if (k == -kInf) return std_normal_cdf(-h);
  if (r == 0.0) return std_normal_cdf(-h) * std_normal_cdf(-k);
  const double two_pi = 2.0 * std::numbers::pi;
  const double ar = std::abs(r);
  int n = ar < 0.3 ? 6 : (ar < 0.75 ? 12 : 20);
  static const QuadRule rules[3] = {gauss_legendre(6), gauss_legendre(12), gauss_legendre(20)};
  const QuadRule& gl = rules[n == 6 ? 0 : (n == 12 ? 1 : 2)];
  double hk = h * k;
  double bvn = 0.0;
  if (ar < 0.925) {
    double hs = 0.5 * (h * h + k * k);
    double asr = 0.5 * std::asin(r);
    for (int i = 0; i < gl.size(); ++i) {
      double sn = std::sin(asr * (1.0 + gl.nodes[i]));
      bvn += gl.weights[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
    }
    return std::clamp(bvn * asr / two_pi + std_normal_cdf(-h) * std_normal_cdf(-k), 0.0, 1.0);
  }
  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  if (ar < 1.0) {
    double as = 1.0 - r * r;
    double a = std::sqrt(as);
    double bs = (h - k) * (h - k);
    double asr = -0.5 * (bs / as + hk);
    double c = (4.0 - hk) / 8.0;
    double d = (12.0 - hk) / 80.0;
    if (asr > -100.0) bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
    if (hk > -100.0) {
      double b = std::sqrt(bs);
      double sp = std::sqrt(two_pi) * std_normal_cdf(-b / a);
      bvn -= std::exp(-0.5 * hk) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
    }
    a *= 0.5;
    double sum = 0.0;
    for (int i = 0; i < gl.size(); ++i) {
      double xs = a * (1.0 + gl.nodes[i]);
      xs *= xs;
      double e = -0.5 * (bs / xs + hk);
      if (e > -100.0) {
        double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
        double rs = std::sqrt(1.0 - xs);
        double ep = std::exp(-0.5 * hk * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
        sum += gl.weights[i] * std::exp(e) * (sp - ep);
      }
    }
    bvn = (a * sum - bvn) / two_pi;
  }
  if (r > 0.0) {
    bvn += std_normal_cdf(-std::max(h, k));
  } else if (h >= k) {
    bvn = -bvn;
  } else {
    double L = h < 0.0 ? std_normal_cdf(k) - std_normal_cdf(h) : std_normal_cdf(-h) - std_normal_cdf(-k);
    bvn = L - bvn;
  }
  return std::clamp(bvn, 0.0, 1.0);
}

double bvn_cdf(double x, double y, double r) { return bvn_upper(-x, -y, r); }

double bvn_rect(double a1, double a2, double b1, double b2, double r) {
  double p = bvn_cdf(a2, b2, r) - bvn_cdf(a1, b2, r) - bvn_cdf(a2, b1, r) + bvn_cdf(a1, b1, r);
  return std::max(0.0, p);
}

bool HalfSpaceOrBox::contains(const double* x) const {
  for (int k = 0; k < dim(); ++k)
    if (x[k] < lo[k] || x[k] > hi[k]) return false;
  return true;
}

HalfSpaceOrBox HalfSpaceOrBox::whole(int m) {
  return {std::vector<double>(m, -kInf), std::vector<double>(m, kInf)};
}

HalfSpaceOrBox HalfSpaceOrBox::box(std::vector<double> lo, std::vector<double> hi) {
  require(lo.size() == hi.size(), ErrorKind::Validation, "box: bound vectors differ in length");
  for (std::size_t k = 0; k < lo.size(); ++k)
    require(lo[k] < hi[k], ErrorKind::Validation, "box: empty interior");
  return {std::move(lo), std::move(hi)};
}

HalfSpaceOrBox HalfSpaceOrBox::axis_halfspace(int m, int axis, double threshold, bool upper) {
  require(axis >= 0 && axis < m, ErrorKind::Validation, "half-space axis out of range");
  HalfSpaceOrBox s = whole(m);
  if (upper)
    s.lo[axis] = threshold;
  else
    s.hi[axis] = threshold;
  return s;
}

HalfSpaceOrBox HalfSpaceOrBox::from_halfspace(const std::vector<double>& normal, double offset) {
  int axis = -1;
  for (std::size_t k = 0; k < normal.size(); ++k) {
    if (normal[k] == 0.0) continue;
    require(axis < 0, ErrorKind::Unsupported, "Piterbarg formula: only axis-aligned half-spaces are supported");
    axis = static_cast<int>(k);
  }
  require(axis >= 0, ErrorKind::Validation, "half-space normal is zero");
  double a = normal[axis];
  return axis_halfspace(static_cast<int>(normal.size()), axis, offset / a, a > 0.0);
}

namespace {

struct Face {
  double value;
  double normal;  // +1 or -1 along the face axis
};

std::vector<Face> faces_on_axis(const HalfSpaceOrBox& s, int k) {
  std::vector<Face> out;
  if (std::isfinite(s.lo[k])) out.push_back({s.lo[k], -1.0});
  if (std::isfinite(s.hi[k])) out.push_back({s.hi[k], 1.0});
  return out;
}

// Bivariate normal density at (u, v) with correlation t, multiplied by
// sqrt(1 - t^2) = cos(theta) from the sine substitution.
double scaled_phi2(double u, double v, double t) {
  double q = (u - v) * (u - v) / (2.0 * (1.0 - t * t)) + u * v / (1.0 + t);
  return std::exp(-q) / (2.0 * std::numbers::pi);
}

}  // namespace

double piterbarg_rhs(int m, const HalfSpaceOrBox& A, const HalfSpaceOrBox& B,
                     const Eigen::VectorXd& mean, const QuadRule& t_rule) {
  require(A.dim() == m && B.dim() == m && mean.size() == m, ErrorKind::Validation,
          "Piterbarg: set dimensions must match m");
  double total = 0.0;
  for (int i = 0; i < t_rule.size(); ++i) {
    double t = t_rule.nodes[i];
    double cos_theta = std::sqrt(std::max(0.0, 1.0 - t * t));
    if (cos_theta <= 0.0) continue;
    double integrand = 0.0;
    for (int k = 0; k < m; ++k) {
      std::vector<Face> fa = faces_on_axis(A, k), fb = faces_on_axis(B, k);
      if (fa.empty() || fb.empty()) continue;
      double others = 1.0;
      for (int j = 0; j < m && others != 0.0; ++j) {
        if (j == k) continue;
        others *= bvn_rect(A.lo[j] - mean[j], A.hi[j] - mean[j], B.lo[j] - mean[j], B.hi[j] - mean[j], t);
      }
      if (others == 0.0) continue;
      for (const Face& a : fa)
        for (const Face& b : fb)
          integrand += a.normal * b.normal * scaled_phi2(a.value - mean[k], b.value - mean[k], t) * others;
    }
    // t_rule weights already carry cos(theta); scaled_phi2 carries the other cos(theta).
    total += t_rule.weights[i] / cos_theta * integrand;
  }
  return total;
}

PiterbargCheck piterbarg_check(int m, const HalfSpaceOrBox& A, const HalfSpaceOrBox& B,
                               const Eigen::VectorXd& mean, long n_mc, Rng& rng,
                               const QuadRule& t_rule) {
  require(n_mc >= 1000, ErrorKind::Validation, "piterbarg_check needs at least 1000 draws");
  PiterbargCheck out;
  out.rhs = piterbarg_rhs(m, A, B, mean, t_rule);
  const int n_batches = 20;
  std::vector<IndicatorCounts> batches(n_batches);
  std::vector<double> x(m);
  for (long s = 0; s < n_mc; ++s) {
    for (int k = 0; k < m; ++k) x[k] = mean[k] + rng.normal();
    batches[s * n_batches / n_mc].add(A.contains(x.data()), B.contains(x.data()));
  }
  Estimate e = batch_covariance(batches);
  out.lhs = e.value;
  out.mc_se = e.se;
  out.n = n_mc;
  return out;
}

Estimate batch_covariance(const std::vector<IndicatorCounts>& batches) {
  IndicatorCounts pooled;
  for (const auto& b : batches) pooled += b;
  Estimate e;
  e.value = pooled.cov();
  const int nb = static_cast<int>(batches.size());
  if (nb < 2) return e;
  double mean = 0.0;
  for (const auto& b : batches) mean += b.cov();
  mean /= nb;
  double ss = 0.0;
  for (const auto& b : batches) ss += (b.cov() - mean) * (b.cov() - mean);
  e.se = std::sqrt(ss / (nb - 1) / nb);
  return e;
}

}  // namespace topocov
