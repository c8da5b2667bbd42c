#pragma once

#include <vector>

namespace topocov {

struct QuadRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  int size() const { return static_cast<int>(nodes.size()); }
};

// n-point Gauss-Legendre rule on [a, b].
QuadRule gauss_legendre(int n, double a = -1.0, double b = 1.0);

// Gauss-Legendre with n points on each panel [breaks[k], breaks[k+1]].
QuadRule composite_gauss_legendre(int n, const std::vector<double>& breaks);

// Rule for integrals over t in [0,1] after t = sin(theta): nodes are t values,
// weights absorb cos(theta) dtheta.
QuadRule sine_substituted_unit(int n);

// Rough size of the content an n-point rule cannot see, from the two highest
// Legendre coefficients of the sampled integrand.
double legendre_tail_estimate(const QuadRule& rule, const std::vector<double>& values, double a,
                              double b);

}  // namespace topocov
