#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "unipc/coeffs.hpp"
#include "unipc/schedule.hpp"

namespace unipc {

/// Flat dense state. Solver math is elementwise, so no image shapes.
using StateVector = std::vector<double>;

bool all_finite(std::span<const double> v) noexcept;

/// Black-box model contract: eps_theta(x, t) or x_theta(x, t).
///
/// Copies are handles onto the same counter, so an evaluator wrapped by
/// another (see convert_parameterization) still reports every call.
class ModelEvaluator {
 public:
  using EvalFn = std::function<StateVector(std::span<const double> x, double t)>;

  ModelEvaluator(Prediction prediction, EvalFn fn);

  StateVector operator()(std::span<const double> x, double t) const;

  Prediction prediction() const noexcept { return prediction_; }
  std::uint64_t eval_count() const noexcept { return count_->load(std::memory_order_relaxed); }

 private:
  Prediction prediction_;
  std::shared_ptr<const EvalFn> fn_;
  std::shared_ptr<std::atomic<std::uint64_t>> count_;
};

/// Wraps m in the other parameterization via x = alpha_t x_theta + sigma_t eps_theta.
/// One call to the wrapper costs exactly one call to m.
ModelEvaluator convert_parameterization(const ModelEvaluator& m,
                                        const NoiseSchedule& sched);

enum class SyntheticFamily { x_free_poly, linear_in_x };

/// Noise-prediction models with known structure.
///
/// x-free-poly: eps(x, t) = sum_k c_{d,k} lambda_t^k per dimension d,
/// independent of x, so the ODE solution has a closed form.
/// linear-in-x: eps(x, t) = kappa_d x_d.
struct SyntheticModel {
  SyntheticFamily family = SyntheticFamily::x_free_poly;
  std::size_t dim = 1;
  // x-free-poly: one coefficient row per dimension (a single row is shared).
  std::vector<std::vector<double>> coeffs;
  // linear-in-x: one gain per dimension (a single gain is shared).
  std::vector<double> gains;

  static SyntheticModel x_free_poly(std::vector<double> coeffs, std::size_t dim);
  static SyntheticModel x_free_poly(std::vector<std::vector<double>> per_dim);
  static SyntheticModel linear_in_x(double gain, std::size_t dim);
  static SyntheticModel linear_in_x(std::vector<double> gains);

  bool has_closed_form() const noexcept { return family == SyntheticFamily::x_free_poly; }
  const std::vector<double>& poly_for(std::size_t d) const;
  double gain_for(std::size_t d) const;
  void validate() const;

  /// eps_theta at (x, lambda); x-free-poly ignores x.
  StateVector noise_at_lambda(std::span<const double> x, double lambda) const;
};

/// Noise-prediction evaluator for a synthetic model.
ModelEvaluator make_evaluator(const SyntheticModel& model, const NoiseSchedule& sched);

/// Exact x_t from x_s for an x-free-poly model (t < s in time). Uses the
/// antiderivative of lambda^k e^{-lambda}: -e^{-lambda} sum_{j<=k} k!/j! lambda^j.
StateVector exact_solution_xfree(const SyntheticModel& model, const NoiseSchedule& sched,
                                 std::span<const double> x_s, double s, double t);

inline constexpr double kDefaultThresholdRatio = 0.995;
inline constexpr double kDefaultThresholdFloor = 1.0;

/// Quantile clipping of a data prediction: s = max(floor, ratio-quantile of
/// |x0|) using the nearest-rank quantile, output = clip(x0, -s, s) / s.
StateVector dynamic_threshold(std::span<const double> x0,
                              double ratio = kDefaultThresholdRatio,
                              double floor = kDefaultThresholdFloor);

std::string_view to_string(SyntheticFamily f) noexcept;
SyntheticFamily parse_family(std::string_view s);

}  // namespace unipc
