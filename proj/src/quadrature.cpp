#include "topocov/quadrature.hpp"

#include <cmath>
#include <numbers>

#include "topocov/core.hpp"

namespace topocov {

namespace {

// Legendre P_n(x) and its derivative by the three-term recurrence.
void legendre(int n, double x, double& p, double& dp) {
  double p0 = 1.0, p1 = x;
  if (n == 0) {
    p = 1.0;
    dp = 0.0;
    return;
  }
  for (int k = 2; k <= n; ++k) {
    double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = pk;
  }
  p = p1;
  dp = n * (x * p1 - p0) / (x * x - 1.0);
}

}  // namespace

QuadRule gauss_legendre(int n, double a, double b) {
  require(n >= 1, ErrorKind::Validation, "Gauss-Legendre rule needs at least one node");
  QuadRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double p = 0.0, dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      legendre(n, x, p, dp);
      double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    legendre(n, x, p, dp);
    double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = mid - half * x;
    rule.nodes[n - 1 - i] = mid + half * x;
    rule.weights[i] = rule.weights[n - 1 - i] = half * w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = mid;
  return rule;
}

QuadRule composite_gauss_legendre(int n, const std::vector<double>& breaks) {
  QuadRule out;
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    if (!(breaks[k + 1] > breaks[k])) continue;
    QuadRule panel = gauss_legendre(n, breaks[k], breaks[k + 1]);
    out.nodes.insert(out.nodes.end(), panel.nodes.begin(), panel.nodes.end());
    out.weights.insert(out.weights.end(), panel.weights.begin(), panel.weights.end());
  }
  return out;
}

QuadRule sine_substituted_unit(int n) {
  QuadRule theta = gauss_legendre(n, 0.0, std::numbers::pi / 2.0);
  QuadRule rule;
  for (int i = 0; i < n; ++i) {
    rule.nodes.push_back(std::sin(theta.nodes[i]));
    rule.weights.push_back(theta.weights[i] * std::cos(theta.nodes[i]));
  }
  return rule;
}

double legendre_tail_estimate(const QuadRule& rule, const std::vector<double>& values, double a,
                              double b) {
  const int n = rule.size();
  if (n < 3 || static_cast<int>(values.size()) != n) return 0.0;
  double tail = 0.0;
  for (int k = n - 2; k < n; ++k) {
    double coeff = 0.0;
    for (int i = 0; i < n; ++i) {
      double x = (2.0 * rule.nodes[i] - a - b) / (b - a);
      double p = 0.0, dp = 0.0;
      legendre(k, x, p, dp);
      coeff += rule.weights[i] * values[i] * p;
    }
    coeff *= (2.0 * k + 1.0) / (b - a);
    tail += std::abs(coeff);
  }
  return 0.5 * tail * (b - a);
}

}  // namespace topocov
