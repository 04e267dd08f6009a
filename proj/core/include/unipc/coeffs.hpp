#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace unipc {

enum class Prediction { noise, data };

/// Normalizer B(h) in the coefficient solve. Both variants are O(h).
enum class Bh {
  b1,  // B(h) = h
  b2,  // B(h) = e^h - 1
};

inline constexpr int kMaxVarphiIndex = 12;
inline constexpr std::size_t kMaxSolveOrder = 9;
inline constexpr std::size_t kMaxVaryingOrder = 5;

/// Below this step the basis functions come from their power series.
/// The upward recursions divide by h once per index and lose roughly
/// k * log10(1/h) digits, which is unacceptable for h < ~1 at k >= 4.
inline constexpr double kSeriesThreshold = 4.0;

/// varphi_k(h) = int_0^1 e^{(1-r) h} r^{k-1} / (k-1)! dr, varphi_0 = e^h.
double varphi(int k, double h);

/// psi_k(h) = int_0^1 e^{(r-1) h} r^{k-1} / (k-1)! dr, psi_0 = e^{-h}.
double psi(int k, double h);

namespace detail {
// Exposed for the crossover-continuity tests.
double varphi_series(int k, double h);
double varphi_recursion(int k, double h);
double psi_series(int k, double h);
double psi_recursion(int k, double h);

// Dense partial-pivot Gaussian elimination; `a` is row-major n x n and is
// overwritten. Throws SingularSystemError on a zero pivot.
std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b,
                                std::size_t n);
}  // namespace detail

/// (phi_1(h), ..., phi_p(h)) with phi_n(h) = h^n n! varphi_{n+1}(h).
std::vector<double> phi_vector(std::size_t p, double h);

/// (g_1(h), ..., g_p(h)) with g_n(h) = h^n n! psi_{n+1}(h).
std::vector<double> g_vector(std::size_t p, double h);

double b_of_h(Bh bh, double h);

struct CoefficientOptions {
  // Use a_1 = 1/2 for single-weight systems (UniP-2 predictor, UniC-1
  // corrector) instead of solving. Valid for both B variants.
  bool a1_shortcut = true;
};

/// A solved R_p(h) w B(h) = phi_p(h) (noise) or = g_p(h) (data) system.
struct CoefficientSystem {
  std::size_t p = 0;
  double h = 0.0;
  std::vector<double> r;
  Bh bh = Bh::b1;
  Prediction prediction = Prediction::noise;
  std::vector<double> weights;

  /// |R_p(h) w B(h) - rhs_p(h)|_1 evaluated directly, without the
  /// diagonal scaling used by the solve.
  double residual_l1() const;
};

/// Solves for the predictor/corrector weights given nodes r (distinct and
/// nonzero, any order). Powers of h are factored out of R_p so the system
/// actually solved is the plain Vandermonde in r.
CoefficientSystem solve_weights(std::span<const double> r, double h, Bh bh,
                                Prediction prediction,
                                CoefficientOptions options = {});

/// A_p = C_p^{-1} with C_p(n, m) = r_m^{n-1} / n!.
struct VaryingCoefficientMatrix {
  std::size_t p = 0;
  std::vector<double> r;
  std::vector<double> a;  // row-major p x p

  double operator()(std::size_t row, std::size_t col) const { return a[row * p + col]; }
  /// C_p itself, row-major.
  std::vector<double> c_matrix() const;
};

VaryingCoefficientMatrix varying_coefficient_matrix(std::span<const double> r);

std::string_view to_string(Bh bh) noexcept;
std::string_view to_string(Prediction p) noexcept;
Bh parse_bh(std::string_view s);
Prediction parse_prediction(std::string_view s);

}  // namespace unipc
