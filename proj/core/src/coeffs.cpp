#include "unipc/coeffs.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "unipc/errors.hpp"

namespace unipc {

namespace {

double inv_factorial(int n) {
  double v = 1.0;
  for (int i = 2; i <= n; ++i) v /= static_cast<double>(i);
  return v;
}

double factorial(int n) {
  double v = 1.0;
  for (int i = 2; i <= n; ++i) v *= static_cast<double>(i);
  return v;
}

void check_basis_args(int k, double h) {
  if (k < 0 || k > kMaxVarphiIndex) {
    throw ArgumentError("basis index k = " + std::to_string(k) +
                        " outside [0, " + std::to_string(kMaxVarphiIndex) + "]");
  }
  if (!std::isfinite(h) || h < 0.0) {
    throw ArgumentError("basis functions need a finite h >= 0");
  }
}

// sum_j sign^j h^j / (j + k)!. With sign = +1 every term is positive so
// there is no cancellation; with sign = -1 the alternating sum loses about
// log10(e^h) digits, which is harmless below kSeriesThreshold.
double basis_series(int k, double h, double sign) {
  double term = inv_factorial(k);
  double sum = term;
  for (int j = 0; j < 400; ++j) {
    term *= sign * h / static_cast<double>(j + k + 1);
    sum += term;
    if (static_cast<double>(j) > h && std::abs(term) <= 1e-18 * std::abs(sum)) {
      break;
    }
  }
  return sum;
}

void check_nodes(std::span<const double> r) {
  for (double v : r) {
    if (!std::isfinite(v)) throw ArgumentError("nonfinite node r");
    if (v == 0.0) throw SingularSystemError("node r = 0 makes the system singular");
  }
  std::vector<double> sorted(r.begin(), r.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw SingularSystemError("duplicate nodes r make the system singular");
  }
}

}  // namespace

namespace detail {

double varphi_series(int k, double h) { return basis_series(k, h, 1.0); }
double psi_series(int k, double h) { return basis_series(k, h, -1.0); }

double varphi_recursion(int k, double h) {
  double v = std::exp(h);
  for (int n = 0; n < k; ++n) v = (v - inv_factorial(n)) / h;
  return v;
}

double psi_recursion(int k, double h) {
  double v = std::exp(-h);
  for (int n = 0; n < k; ++n) v = (inv_factorial(n) - v) / h;
  return v;
}

std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b,
                                std::size_t n) {
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t row = col + 1; row < n; ++row) {
      if (std::abs(a[row * n + col]) > std::abs(a[pivot * n + col])) pivot = row;
    }
    if (a[pivot * n + col] == 0.0 || !std::isfinite(a[pivot * n + col])) {
      throw SingularSystemError("zero pivot in column " + std::to_string(col));
    }
    if (pivot != col) {
      for (std::size_t k = 0; k < n; ++k) std::swap(a[col * n + k], a[pivot * n + k]);
      std::swap(b[col], b[pivot]);
    }
    for (std::size_t row = col + 1; row < n; ++row) {
      const double factor = a[row * n + col] / a[col * n + col];
      if (factor == 0.0) continue;
      for (std::size_t k = col; k < n; ++k) a[row * n + k] -= factor * a[col * n + k];
      b[row] -= factor * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i * n + k] * x[k];
    x[i] = s / a[i * n + i];
  }
  return x;
}

}  // namespace detail

double varphi(int k, double h) {
  check_basis_args(k, h);
  if (k == 0) return std::exp(h);
  if (h < kSeriesThreshold) return detail::varphi_series(k, h);
  return detail::varphi_recursion(k, h);
}

double psi(int k, double h) {
  check_basis_args(k, h);
  if (k == 0) return std::exp(-h);
  if (h < kSeriesThreshold) return detail::psi_series(k, h);
  return detail::psi_recursion(k, h);
}

std::vector<double> phi_vector(std::size_t p, double h) {
  if (p < 1 || p > kMaxSolveOrder) {
    throw RangeError("phi_vector order " + std::to_string(p) + " outside [1, 9]");
  }
  std::vector<double> out(p);
  for (std::size_t n = 1; n <= p; ++n) {
    const int k = static_cast<int>(n);
    out[n - 1] = std::pow(h, k) * factorial(k) * varphi(k + 1, h);
  }
  return out;
}

std::vector<double> g_vector(std::size_t p, double h) {
  if (p < 1 || p > kMaxSolveOrder) {
    throw RangeError("g_vector order " + std::to_string(p) + " outside [1, 9]");
  }
  std::vector<double> out(p);
  for (std::size_t n = 1; n <= p; ++n) {
    const int k = static_cast<int>(n);
    out[n - 1] = std::pow(h, k) * factorial(k) * psi(k + 1, h);
  }
  return out;
}

double b_of_h(Bh bh, double h) {
  switch (bh) {
    case Bh::b1: return h;
    case Bh::b2: return std::expm1(h);
  }
  return h;
}

double CoefficientSystem::residual_l1() const {
  const auto rhs = prediction == Prediction::noise ? phi_vector(p, h) : g_vector(p, h);
  const double b = b_of_h(bh, h);
  double total = 0.0;
  for (std::size_t n = 0; n < p; ++n) {
    double row = 0.0;
    for (std::size_t m = 0; m < p; ++m) {
      row += std::pow(r[m] * h, static_cast<double>(n)) * weights[m];
    }
    total += std::abs(row * b - rhs[n]);
  }
  return total;
}

CoefficientSystem solve_weights(std::span<const double> r, double h, Bh bh,
                                Prediction prediction, CoefficientOptions options) {
  const std::size_t p = r.size();
  if (p < 1 || p > kMaxSolveOrder) {
    throw RangeError("coefficient system size " + std::to_string(p) +
                     " outside [1, 9]");
  }
  if (!std::isfinite(h) || !(h > 0.0)) {
    throw ArgumentError("coefficient solve needs h > 0");
  }
  check_nodes(r);

  CoefficientSystem sys;
  sys.p = p;
  sys.h = h;
  sys.r.assign(r.begin(), r.end());
  sys.bh = bh;
  sys.prediction = prediction;

  if (p == 1 && options.a1_shortcut) {
    sys.weights = {0.5};
    return sys;
  }

  // R_p(h) = diag(1, h, ..., h^{p-1}) V(r), so the scaled right-hand side
  // is rhs_n / h^{n-1} = h n! basis_{n+1}(h).
  const double b = b_of_h(bh, h);
  std::vector<double> rhs(p);
  for (std::size_t n = 1; n <= p; ++n) {
    const int k = static_cast<int>(n);
    const double basis = prediction == Prediction::noise ? varphi(k + 1, h) : psi(k + 1, h);
    rhs[n - 1] = h * factorial(k) * basis / b;
  }
  std::vector<double> vander(p * p);
  for (std::size_t m = 0; m < p; ++m) {
    double power = 1.0;
    for (std::size_t n = 0; n < p; ++n) {
      vander[n * p + m] = power;
      power *= r[m];
    }
  }
  sys.weights = detail::solve_dense(std::move(vander), std::move(rhs), p);
  return sys;
}

std::vector<double> VaryingCoefficientMatrix::c_matrix() const {
  std::vector<double> c(p * p);
  for (std::size_t m = 0; m < p; ++m) {
    double power = 1.0;
    for (std::size_t n = 0; n < p; ++n) {
      c[n * p + m] = power * inv_factorial(static_cast<int>(n + 1));
      power *= r[m];
    }
  }
  return c;
}

VaryingCoefficientMatrix varying_coefficient_matrix(std::span<const double> r) {
  const std::size_t p = r.size();
  if (p < 1 || p > kMaxVaryingOrder) {
    throw RangeError("varying-coefficient order " + std::to_string(p) +
                     " outside [1, 5]");
  }
  check_nodes(r);

  VaryingCoefficientMatrix out;
  out.p = p;
  out.r.assign(r.begin(), r.end());
  const auto c = out.c_matrix();
  out.a.assign(p * p, 0.0);
  for (std::size_t col = 0; col < p; ++col) {
    std::vector<double> unit(p, 0.0);
    unit[col] = 1.0;
    const auto x = detail::solve_dense(c, std::move(unit), p);
    for (std::size_t row = 0; row < p; ++row) out.a[row * p + col] = x[row];
  }
  return out;
}

std::string_view to_string(Bh bh) noexcept {
  return bh == Bh::b1 ? "b1" : "b2";
}

std::string_view to_string(Prediction p) noexcept {
  return p == Prediction::noise ? "noise" : "data";
}

Bh parse_bh(std::string_view s) {
  if (s == "b1") return Bh::b1;
  if (s == "b2") return Bh::b2;
  throw ValidationError("unknown B(h) variant '" + std::string(s) + "'");
}

Prediction parse_prediction(std::string_view s) {
  if (s == "noise") return Prediction::noise;
  if (s == "data") return Prediction::data;
  throw ValidationError("unknown prediction '" + std::string(s) + "'");
}

}  // namespace unipc
