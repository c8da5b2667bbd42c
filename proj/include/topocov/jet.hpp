#pragma once

#include <array>

namespace topocov {

// Bivariate Taylor polynomial truncated at total degree 4:
// p(u, v) = sum_{i+j<=4} c(i,j) u^i v^j.
class Jet {
 public:
  static constexpr int kOrder = 4;

  Jet() { c_.fill(0.0); }

  static Jet constant(double v) {
    Jet j;
    j.at(0, 0) = v;
    return j;
  }
  // The coordinate function (axis 0 -> u, axis 1 -> v) expanded about `value`.
  static Jet variable(int axis, double value) {
    Jet j;
    j.at(0, 0) = value;
    if (axis == 0)
      j.at(1, 0) = 1.0;
    else
      j.at(0, 1) = 1.0;
    return j;
  }

  double& at(int i, int j) { return c_[i * 5 + j]; }
  double at(int i, int j) const { return c_[i * 5 + j]; }

  // d^{i+j} p / du^i dv^j at the expansion point.
  double derivative(int i, int j) const { return kFactorial[i] * kFactorial[j] * at(i, j); }

  Jet& operator+=(const Jet& o) {
    for (int k = 0; k < 25; ++k) c_[k] += o.c_[k];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    for (int k = 0; k < 25; ++k) c_[k] -= o.c_[k];
    return *this;
  }
  Jet& operator*=(double s) {
    for (double& v : c_) v *= s;
    return *this;
  }
  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator*(double s, Jet a) { return a *= s; }
  friend Jet operator*(const Jet& a, const Jet& b) {
    Jet r;
    for (int i1 = 0; i1 <= kOrder; ++i1)
      for (int j1 = 0; i1 + j1 <= kOrder; ++j1) {
        double av = a.at(i1, j1);
        if (av == 0.0) continue;
        for (int i2 = 0; i1 + j1 + i2 <= kOrder; ++i2)
          for (int j2 = 0; i1 + j1 + i2 + j2 <= kOrder; ++j2) r.at(i1 + i2, j1 + j2) += av * b.at(i2, j2);
      }
    return r;
  }

  // Product of a jet in u alone and a jet in v alone, given as 1D coefficient arrays.
  static Jet outer(const std::array<double, 5>& cu, const std::array<double, 5>& cv) {
    Jet r;
    for (int i = 0; i <= kOrder; ++i)
      for (int j = 0; i + j <= kOrder; ++j) r.at(i, j) = cu[i] * cv[j];
    return r;
  }

  static constexpr std::array<double, 5> kFactorial{1.0, 1.0, 2.0, 6.0, 24.0};

 private:
  std::array<double, 25> c_;
};

// g(s(u,v)) for a scalar function g given its derivatives g^(k)(s0), k = 0..4,
// where s0 is the constant term of s.
inline Jet compose(const std::array<double, 5>& g, const Jet& s) {
  Jet u = s;
  u.at(0, 0) = 0.0;
  Jet out = Jet::constant(g[0]);
  Jet power = u;
  for (int k = 1; k <= Jet::kOrder; ++k) {
    out += (g[k] / Jet::kFactorial[k]) * power;
    if (k < Jet::kOrder) power = power * u;
  }
  return out;
}

}  // namespace topocov
