#include "unipc/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "unipc/errors.hpp"

namespace unipc {

namespace {

double lambda_from_log_alpha(double log_alpha) {
  // lambda = log(alpha) - 0.5 * log(1 - alpha^2)
  return log_alpha - 0.5 * std::log(-std::expm1(2.0 * log_alpha));
}

// log(alpha) as a function of lambda for any VP schedule:
// alpha^2 = 1 / (1 + exp(-2 lambda)).
double log_alpha_from_lambda(double lambda) {
  if (lambda < -20.0) return lambda - 0.5 * std::log1p(std::exp(2.0 * lambda));
  return -0.5 * std::log1p(std::exp(-2.0 * lambda));
}

void check_lambda_range(const NoiseSchedule& sched, double lambda) {
  const double tol = 1e-12 * std::max(1.0, std::abs(lambda));
  if (!std::isfinite(lambda) || lambda < sched.lambda_start() - tol ||
      lambda > sched.lambda_end() + tol) {
    throw DomainError("lambda = " + std::to_string(lambda) + " outside [" +
                      std::to_string(sched.lambda_start()) + ", " +
                      std::to_string(sched.lambda_end()) + "]");
  }
}

}  // namespace

NoiseSchedule NoiseSchedule::vp_linear(double beta_min, double beta_max,
                                       double t_start, double t_end) {
  if (!(beta_min >= 0.0) || !(beta_max > beta_min)) {
    throw ArgumentError("vp-linear requires 0 <= beta_min < beta_max");
  }
  NoiseSchedule s;
  s.kind_ = ScheduleKind::vp_linear;
  s.beta_min_ = beta_min;
  s.beta_max_ = beta_max;
  s.t_start_ = t_start;
  s.t_end_ = t_end;
  s.finish();
  return s;
}

NoiseSchedule NoiseSchedule::vp_cosine(double cosine_s, double t_start,
                                       double t_end) {
  if (!(cosine_s > 0.0)) throw ArgumentError("vp-cosine requires s > 0");
  NoiseSchedule s;
  s.kind_ = ScheduleKind::vp_cosine;
  s.cosine_s_ = cosine_s;
  s.t_start_ = t_start;
  s.t_end_ = t_end;
  // alpha reaches zero at t = 1; keep strictly below.
  if (!(t_start < 1.0)) throw ArgumentError("vp-cosine requires t_start < 1");
  s.finish();
  return s;
}

void NoiseSchedule::finish() {
  if (!(t_end_ > 0.0) || !(t_start_ > t_end_) || !std::isfinite(t_start_)) {
    throw ArgumentError("schedule requires 0 < t_end < t_start");
  }
  lambda_start_ = lambda(t_start_);
  lambda_end_ = lambda(t_end_);
  if (!std::isfinite(lambda_start_) || !std::isfinite(lambda_end_)) {
    throw ArgumentError("schedule lambda is not finite on [t_end, t_start]");
  }
}

double NoiseSchedule::log_alpha(double t) const noexcept {
  switch (kind_) {
    case ScheduleKind::vp_linear:
      return -0.25 * t * t * (beta_max_ - beta_min_) - 0.5 * t * beta_min_;
    case ScheduleKind::vp_cosine: {
      const double k = std::numbers::pi / 2.0 / (1.0 + cosine_s_);
      return std::log(std::cos((t + cosine_s_) * k)) -
             std::log(std::cos(cosine_s_ * k));
    }
  }
  return 0.0;
}

double NoiseSchedule::d_log_alpha_dt(double t) const noexcept {
  switch (kind_) {
    case ScheduleKind::vp_linear:
      return -0.5 * (beta_min_ + (beta_max_ - beta_min_) * t);
    case ScheduleKind::vp_cosine: {
      const double k = std::numbers::pi / 2.0 / (1.0 + cosine_s_);
      return -k * std::tan((t + cosine_s_) * k);
    }
  }
  return 0.0;
}

double NoiseSchedule::lambda(double t) const noexcept {
  return lambda_from_log_alpha(log_alpha(t));
}

AlphaSigmaLambda alpha_sigma_lambda(const NoiseSchedule& sched, double t) {
  if (!sched.contains(t)) {
    throw DomainError("t = " + std::to_string(t) + " outside [" +
                      std::to_string(sched.t_end()) + ", " +
                      std::to_string(sched.t_start()) + "]");
  }
  const double la = sched.log_alpha(t);
  return {std::exp(la), std::sqrt(-std::expm1(2.0 * la)),
          lambda_from_log_alpha(la)};
}

double t_of_lambda_bisect(const NoiseSchedule& sched, double lambda) {
  check_lambda_range(sched, lambda);
  if (lambda >= sched.lambda_end()) return sched.t_end();
  if (lambda <= sched.lambda_start()) return sched.t_start();

  // lambda is strictly decreasing in t.
  double lo = sched.t_end();
  double hi = sched.t_start();
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (sched.lambda(mid) > lambda) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double err_lo = std::abs(sched.lambda(lo) - lambda);
  const double err_hi = std::abs(sched.lambda(hi) - lambda);
  return err_lo <= err_hi ? lo : hi;
}

double t_of_lambda(const NoiseSchedule& sched, double lambda) {
  if (sched.kind() != ScheduleKind::vp_linear) {
    return t_of_lambda_bisect(sched, lambda);
  }
  check_lambda_range(sched, lambda);
  if (lambda >= sched.lambda_end()) return sched.t_end();
  if (lambda <= sched.lambda_start()) return sched.t_start();

  // Solve a t^2 + b t + c = 0 with c = log(alpha) <= 0, in the form that
  // avoids cancellation for small t.
  const double a = 0.25 * (sched.beta_max() - sched.beta_min());
  const double b = 0.5 * sched.beta_min();
  const double c = log_alpha_from_lambda(lambda);
  const double t = -2.0 * c / (b + std::sqrt(b * b - 4.0 * a * c));
  return std::clamp(t, sched.t_end(), sched.t_start());
}

DriftDiffusion drift_diffusion(const NoiseSchedule& sched, double t) {
  const auto [alpha, sigma, lambda] = alpha_sigma_lambda(sched, t);
  (void)lambda;
  const double f = sched.d_log_alpha_dt(t);
  // sigma^2 = 1 - alpha^2, so d sigma^2/dt = -2 alpha^2 f.
  const double dsigma2 = -2.0 * alpha * alpha * f;
  return {f, dsigma2 - 2.0 * f * sigma * sigma};
}

TimeGrid make_time_grid(const NoiseSchedule& sched, std::size_t steps,
                        SkipKind skip) {
  if (steps == 0) throw ArgumentError("time grid needs at least one step");

  TimeGrid grid;
  grid.skip_kind = skip;
  grid.times.resize(steps + 1);
  const double n = static_cast<double>(steps);
  const double t0 = sched.t_start();
  const double t1 = sched.t_end();

  for (std::size_t i = 0; i <= steps; ++i) {
    const double frac = static_cast<double>(i) / n;
    switch (skip) {
      case SkipKind::uniform_lambda: {
        const double lam = sched.lambda_start() +
                           frac * (sched.lambda_end() - sched.lambda_start());
        grid.times[i] = t_of_lambda(sched, lam);
        break;
      }
      case SkipKind::uniform_time:
        grid.times[i] = t0 - frac * (t0 - t1);
        break;
      case SkipKind::quadratic_time: {
        const double r = std::sqrt(t0) + frac * (std::sqrt(t1) - std::sqrt(t0));
        grid.times[i] = r * r;
        break;
      }
    }
  }
  grid.times.front() = t0;
  grid.times.back() = t1;
  for (std::size_t i = 1; i < steps; ++i) {
    grid.times[i] = std::clamp(grid.times[i], t1, t0);
  }

  grid.lambdas.resize(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) {
    grid.lambdas[i] = sched.lambda(grid.times[i]);
  }
  for (std::size_t i = 1; i <= steps; ++i) {
    if (!(grid.times[i] < grid.times[i - 1]) ||
        !(grid.lambdas[i] > grid.lambdas[i - 1])) {
      throw ArgumentError("time grid with " + std::to_string(steps) +
                          " steps is not strictly monotone");
    }
  }
  return grid;
}

std::string_view to_string(ScheduleKind kind) noexcept {
  switch (kind) {
    case ScheduleKind::vp_linear: return "vp-linear";
    case ScheduleKind::vp_cosine: return "vp-cosine";
  }
  return "?";
}

std::string_view to_string(SkipKind kind) noexcept {
  switch (kind) {
    case SkipKind::uniform_lambda: return "uniform-lambda";
    case SkipKind::uniform_time: return "uniform-time";
    case SkipKind::quadratic_time: return "quadratic-time";
  }
  return "?";
}

ScheduleKind parse_schedule_kind(std::string_view s) {
  if (s == "vp-linear") return ScheduleKind::vp_linear;
  if (s == "vp-cosine") return ScheduleKind::vp_cosine;
  throw ValidationError("unknown schedule kind '" + std::string(s) + "'");
}

SkipKind parse_skip_kind(std::string_view s) {
  if (s == "uniform-lambda") return SkipKind::uniform_lambda;
  if (s == "uniform-time") return SkipKind::uniform_time;
  if (s == "quadratic-time") return SkipKind::quadratic_time;
  throw ValidationError("unknown skip kind '" + std::string(s) + "'");
}

}  // namespace unipc
