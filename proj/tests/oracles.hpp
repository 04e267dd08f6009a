#pragma once

// Independent numerical oracles for the tests. Nothing here calls into the
// library, so agreement with it is evidence rather than tautology.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

// Composite Simpson on [a, b]; panels must be even.
inline double simpson(const std::function<double(double)>& f, double a, double b, int panels) {
  const double dx = (b - a) / panels;
  double sum = f(a) + f(b);
  for (int i = 1; i < panels; ++i) sum += (i % 2 ? 4.0 : 2.0) * f(a + i * dx);
  return sum * dx / 3.0;
}

inline double trapezoid(const std::function<double(double)>& f, double a, double b, int panels) {
  const double dx = (b - a) / panels;
  double sum = 0.5 * (f(a) + f(b));
  for (int i = 1; i < panels; ++i) sum += f(a + i * dx);
  return sum * dx;
}

// Central difference with Richardson extrapolation (error O(dx^4)).
inline double derivative(const std::function<double(double)>& f, double x, double dx) {
  const auto d = [&](double e) { return (f(x + e) - f(x - e)) / (2.0 * e); };
  return (4.0 * d(dx / 2.0) - d(dx)) / 3.0;
}

inline double factorial(int n) {
  double v = 1.0;
  for (int i = 2; i <= n; ++i) v *= i;
  return v;
}

// varphi_k(h) = int_0^1 e^{(1-u)h} u^{k-1}/(k-1)! du, k >= 1.
inline double varphi_quadrature(int k, double h, int panels = 10000) {
  return simpson([&](double u) { return std::exp((1.0 - u) * h) * std::pow(u, k - 1) / factorial(k - 1); },
                 0.0, 1.0, panels);
}

// psi_k(h) = int_0^1 e^{(u-1)h} u^{k-1}/(k-1)! du, k >= 1.
inline double psi_quadrature(int k, double h, int panels = 10000) {
  return simpson([&](double u) { return std::exp((u - 1.0) * h) * std::pow(u, k - 1) / factorial(k - 1); },
                 0.0, 1.0, panels);
}

// Gauss-Jordan inverse with full pivot search per column; small matrices only.
inline std::vector<double> invert(std::vector<double> a, std::size_t n) {
  std::vector<double> inv(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) inv[i * n + i] = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
    }
    for (std::size_t k = 0; k < n; ++k) {
      std::swap(a[c * n + k], a[piv * n + k]);
      std::swap(inv[c * n + k], inv[piv * n + k]);
    }
    const double d = a[c * n + c];
    for (std::size_t k = 0; k < n; ++k) {
      a[c * n + k] /= d;
      inv[c * n + k] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r * n + c];
      for (std::size_t k = 0; k < n; ++k) {
        a[r * n + k] -= f * a[c * n + k];
        inv[r * n + k] -= f * inv[c * n + k];
      }
    }
  }
  return inv;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= x.size();
  my /= y.size();
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
  }
  return sxy / sxx;
}

// Seeded generator for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : eng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }
  std::vector<double> normals(std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = normal();
    return v;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace oracle
