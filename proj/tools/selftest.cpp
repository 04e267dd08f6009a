#include "selftest.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>

#include "unipc/coeffs.hpp"
#include "unipc/schedule.hpp"

namespace unipc::tools {

namespace {

// Composite Simpson on [0, 1] with an even panel count.
double simpson(const std::function<double(double)>& f, int panels) {
  const double dx = 1.0 / panels;
  double sum = f(0.0) + f(1.0);
  for (int i = 1; i < panels; ++i) sum += (i % 2 ? 4.0 : 2.0) * f(i * dx);
  return sum * dx / 3.0;
}

// varphi_k(h) = int_0^1 e^{(1-u)h} u^{k-1} / (k-1)! du, psi_k with -h.
double basis_quadrature(int k, double h, double sign) {
  const double fact = std::tgamma(static_cast<double>(k));
  return simpson([&](double u) { return std::exp(sign * (1.0 - u) * h) * std::pow(u, k - 1) / fact; },
                 10000);
}

struct Tally {
  std::ostream& out;
  int failures = 0;

  void check(bool ok, const std::string& line) {
    out << (ok ? "ok    " : "FAIL  ") << line << '\n';
    if (!ok) ++failures;
  }
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

}  // namespace

int run_selftest(std::ostream& out) {
  Tally t{out};

  for (double h : {0.1, 0.5, 1.0, 2.0}) {
    double worst = 0.0;
    for (int k = 1; k <= 5; ++k) {
      worst = std::max(worst, std::abs(varphi(k, h) - basis_quadrature(k, h, 1.0)));
      worst = std::max(worst, std::abs(psi(k, h) - basis_quadrature(k, h, -1.0)));
    }
    t.check(worst < 1e-9, fmt("basis vs Simpson  h=%.1f  max |diff| = %.2e", h, worst));
  }

  const auto sched = NoiseSchedule::vp_linear();
  for (std::size_t steps : {10u, 20u, 40u}) {
    const auto grid = make_time_grid(sched, steps);
    const double h = grid.h(1);
    double worst = 0.0;
    for (int p = 1; p <= 3; ++p) {
      std::vector<double> r;
      for (int m = 1; m < p; ++m) r.push_back(-static_cast<double>(m));
      r.push_back(1.0);
      for (Prediction pred : {Prediction::noise, Prediction::data}) {
        for (Bh bh : {Bh::b1, Bh::b2}) {
          const auto sys = solve_weights(r, h, bh, pred, {.a1_shortcut = false});
          worst = std::max(worst, sys.residual_l1());
        }
      }
    }
    t.check(worst < 1e-12, fmt("coefficient residual  M=%.0f  h=%.4f  max = %.2e",
                               static_cast<double>(steps), h, worst));
  }

  double worst = 0.0;
  for (std::size_t p = 1; p <= kMaxVaryingOrder; ++p) {
    std::vector<double> r;
    for (std::size_t m = 1; m < p; ++m) r.push_back(-static_cast<double>(m));
    r.push_back(1.0);
    const auto a = varying_coefficient_matrix(r);
    const auto c = a.c_matrix();
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < p; ++j) {
        double v = 0.0;
        for (std::size_t k = 0; k < p; ++k) v += c[i * p + k] * a(k, j);
        worst = std::max(worst, std::abs(v - (i == j ? 1.0 : 0.0)));
      }
    }
  }
  t.check(worst < 1e-12, fmt("C_p A_p = I  p<=5  max |diff| = %.2e", worst));

  out << (t.failures == 0 ? "selftest passed\n" : "selftest FAILED\n");
  return t.failures;
}

}  // namespace unipc::tools
