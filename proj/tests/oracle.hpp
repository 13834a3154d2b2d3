#pragma once

// Reference computations written directly from the definitions, kept apart
// from the library so tests do not check the code against itself.

#include <cmath>
#include <numbers>

namespace oracle {

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
inline double std_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

// E max(0, 1 - (r + s Z)) with s = sigma sqrt(r).
inline double hinge_phi(double r, double sigma) {
  const double a = 1.0 - r;
  const double s = sigma * std::sqrt(r);
  if (s == 0.0) return std::max(a, 0.0);
  return a * std_normal_cdf(a / s) + s * std_normal_pdf(a / s);
}

// E log(1 + exp(-(r + s Z))) by composite Simpson on [-12, 12].
inline double logistic_phi(double r, double sigma) {
  const double s = sigma * std::sqrt(r);
  const int n = 4000;
  const double lo = -12.0, hi = 12.0, h = (hi - lo) / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double z = lo + i * h;
    const double t = r + s * z;
    const double v = t > 0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t));
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * v * std_normal_pdf(z);
  }
  return acc * h / 3.0;
}

struct Minimum {
  double r = 0.0;
  double h = 0.0;
};

// Brute-force grid minimizer of h(r) = phi(r) + beta r on [0, r_max].
template <class Phi>
Minimum grid_minimize(Phi phi, double beta, double r_max, double step) {
  Minimum best{0.0, phi(0.0)};
  for (double r = step; r <= r_max; r += step) {
    const double h = phi(r) + beta * r;
    if (h < best.h) best = {r, h};
  }
  return best;
}

inline Minimum hinge_r_star(double sigma, double beta, double step = 1e-4) {
  return grid_minimize([sigma](double r) { return hinge_phi(r, sigma); }, beta, 20.0, step);
}

}  // namespace oracle
