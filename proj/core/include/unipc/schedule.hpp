#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

namespace unipc {

enum class ScheduleKind { vp_linear, vp_cosine };

/// Variance-preserving forward process on unit-interval time.
///
/// alpha_t^2 + sigma_t^2 = 1 for both families. The usable time range is
/// [t_end, t_start]; t_end > 0 keeps sigma_t away from zero so that the
/// half log-SNR lambda_t = log(alpha_t / sigma_t) stays finite.
class NoiseSchedule {
 public:
  static NoiseSchedule vp_linear(double beta_min = 0.1, double beta_max = 20.0,
                                 double t_start = 1.0, double t_end = 1e-3);
  static NoiseSchedule vp_cosine(double s = 0.008, double t_start = 0.9946,
                                 double t_end = 1e-3);

  ScheduleKind kind() const noexcept { return kind_; }
  double beta_min() const noexcept { return beta_min_; }
  double beta_max() const noexcept { return beta_max_; }
  double cosine_s() const noexcept { return cosine_s_; }
  double t_start() const noexcept { return t_start_; }
  double t_end() const noexcept { return t_end_; }

  double lambda_start() const noexcept { return lambda_start_; }
  double lambda_end() const noexcept { return lambda_end_; }

  bool contains(double t) const noexcept { return t >= t_end_ && t <= t_start_; }

  // Unchecked closed forms. Callers that take user input go through the
  // free functions below, which validate the range.
  double log_alpha(double t) const noexcept;
  double d_log_alpha_dt(double t) const noexcept;
  double lambda(double t) const noexcept;

 private:
  NoiseSchedule() = default;
  void finish();

  ScheduleKind kind_ = ScheduleKind::vp_linear;
  double beta_min_ = 0.1;
  double beta_max_ = 20.0;
  double cosine_s_ = 0.008;
  double t_start_ = 1.0;
  double t_end_ = 1e-3;
  double lambda_start_ = 0.0;
  double lambda_end_ = 0.0;
};

struct AlphaSigmaLambda {
  double alpha;
  double sigma;
  double lambda;
};

struct DriftDiffusion {
  double f;   // d log(alpha_t) / dt
  double g2;  // d sigma_t^2 / dt - 2 f sigma_t^2
};

/// Throws DomainError when t is outside [t_end, t_start].
AlphaSigmaLambda alpha_sigma_lambda(const NoiseSchedule& sched, double t);

/// Inverse of lambda_t. VP-linear uses the closed-form quadratic root,
/// VP-cosine uses bisection. Endpoints map back to t_end / t_start exactly.
double t_of_lambda(const NoiseSchedule& sched, double lambda);

/// Generic safeguarded bisection inverse, usable for any family.
double t_of_lambda_bisect(const NoiseSchedule& sched, double lambda);

DriftDiffusion drift_diffusion(const NoiseSchedule& sched, double t);

enum class SkipKind { uniform_lambda, uniform_time, quadratic_time };

struct TimeGrid {
  std::vector<double> times;    // t_0 = t_start > ... > t_M = t_end
  std::vector<double> lambdas;  // strictly increasing
  SkipKind skip_kind = SkipKind::uniform_lambda;

  std::size_t steps() const noexcept { return times.empty() ? 0 : times.size() - 1; }
  double h(std::size_t i) const { return lambdas.at(i) - lambdas.at(i - 1); }
};

TimeGrid make_time_grid(const NoiseSchedule& sched, std::size_t steps,
                        SkipKind skip = SkipKind::uniform_lambda);

std::string_view to_string(ScheduleKind kind) noexcept;
std::string_view to_string(SkipKind kind) noexcept;
ScheduleKind parse_schedule_kind(std::string_view s);
SkipKind parse_skip_kind(std::string_view s);

}  // namespace unipc
