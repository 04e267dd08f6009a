#include "unipc/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "unipc/errors.hpp"

namespace unipc {

bool all_finite(std::span<const double> v) noexcept {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

ModelEvaluator::ModelEvaluator(Prediction prediction, EvalFn fn)
    : prediction_(prediction),
      fn_(std::make_shared<const EvalFn>(std::move(fn))),
      count_(std::make_shared<std::atomic<std::uint64_t>>(0)) {
  if (!*fn_) throw ArgumentError("model evaluator needs a callable");
}

StateVector ModelEvaluator::operator()(std::span<const double> x, double t) const {
  count_->fetch_add(1, std::memory_order_relaxed);
  return (*fn_)(x, t);
}

ModelEvaluator convert_parameterization(const ModelEvaluator& m,
                                        const NoiseSchedule& sched) {
  if (m.prediction() == Prediction::noise) {
    return ModelEvaluator(Prediction::data, [m, sched](std::span<const double> x, double t) {
      const auto [alpha, sigma, lambda] = alpha_sigma_lambda(sched, t);
      (void)lambda;
      StateVector out = m(x, t);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x[i] - sigma * out[i]) / alpha;
      return out;
    });
  }
  return ModelEvaluator(Prediction::noise, [m, sched](std::span<const double> x, double t) {
    const auto [alpha, sigma, lambda] = alpha_sigma_lambda(sched, t);
    (void)lambda;
    StateVector out = m(x, t);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x[i] - alpha * out[i]) / sigma;
    return out;
  });
}

SyntheticModel SyntheticModel::x_free_poly(std::vector<double> coeffs, std::size_t dim) {
  SyntheticModel m;
  m.family = SyntheticFamily::x_free_poly;
  m.dim = dim;
  m.coeffs = {std::move(coeffs)};
  m.validate();
  return m;
}

SyntheticModel SyntheticModel::x_free_poly(std::vector<std::vector<double>> per_dim) {
  SyntheticModel m;
  m.family = SyntheticFamily::x_free_poly;
  m.dim = per_dim.size();
  m.coeffs = std::move(per_dim);
  m.validate();
  return m;
}

SyntheticModel SyntheticModel::linear_in_x(double gain, std::size_t dim) {
  SyntheticModel m;
  m.family = SyntheticFamily::linear_in_x;
  m.dim = dim;
  m.gains = {gain};
  m.validate();
  return m;
}

SyntheticModel SyntheticModel::linear_in_x(std::vector<double> gains) {
  SyntheticModel m;
  m.family = SyntheticFamily::linear_in_x;
  m.dim = gains.size();
  m.gains = std::move(gains);
  m.validate();
  return m;
}

void SyntheticModel::validate() const {
  if (dim < 1) throw ValidationError("synthetic model needs dim >= 1");
  if (family == SyntheticFamily::x_free_poly) {
    if (coeffs.empty() || (coeffs.size() != 1 && coeffs.size() != dim)) {
      throw ValidationError("x-free-poly needs one coefficient row or one per dimension");
    }
    for (const auto& row : coeffs) {
      if (row.empty()) throw ValidationError("x-free-poly coefficient row is empty");
      if (!all_finite(row)) throw ValidationError("x-free-poly coefficients must be finite");
    }
  } else {
    if (gains.empty() || (gains.size() != 1 && gains.size() != dim)) {
      throw ValidationError("linear-in-x needs one gain or one per dimension");
    }
    if (!all_finite(gains)) throw ValidationError("linear-in-x gains must be finite");
  }
}

const std::vector<double>& SyntheticModel::poly_for(std::size_t d) const {
  return coeffs.size() == 1 ? coeffs.front() : coeffs.at(d);
}

double SyntheticModel::gain_for(std::size_t d) const {
  return gains.size() == 1 ? gains.front() : gains.at(d);
}

StateVector SyntheticModel::noise_at_lambda(std::span<const double> x, double lambda) const {
  if (x.size() != dim) {
    throw ArgumentError("state has dimension " + std::to_string(x.size()) +
                        ", model expects " + std::to_string(dim));
  }
  StateVector out(dim);
  if (family == SyntheticFamily::x_free_poly) {
    for (std::size_t d = 0; d < dim; ++d) {
      const auto& c = poly_for(d);
      double acc = 0.0;  // Horner
      for (std::size_t k = c.size(); k-- > 0;) acc = acc * lambda + c[k];
      out[d] = acc;
    }
  } else {
    for (std::size_t d = 0; d < dim; ++d) out[d] = gain_for(d) * x[d];
  }
  return out;
}

ModelEvaluator make_evaluator(const SyntheticModel& model, const NoiseSchedule& sched) {
  model.validate();
  return ModelEvaluator(Prediction::noise, [model, sched](std::span<const double> x, double t) {
    return model.noise_at_lambda(x, alpha_sigma_lambda(sched, t).lambda);
  });
}

namespace {

// Antiderivative of lambda^k e^{-lambda}.
double poly_exp_antiderivative(std::size_t k, double lambda) {
  // -e^{-lambda} sum_{j<=k} k!/j! lambda^j
  double sum = 0.0;
  double ratio = 1.0;  // k!/j! for j = k, k-1, ...
  double power = std::pow(lambda, static_cast<double>(k));
  sum += power;
  for (std::size_t j = k; j-- > 0;) {
    ratio *= static_cast<double>(j + 1);
    power = std::pow(lambda, static_cast<double>(j));
    sum += ratio * power;
  }
  return -std::exp(-lambda) * sum;
}

}  // namespace

StateVector exact_solution_xfree(const SyntheticModel& model, const NoiseSchedule& sched,
                                 std::span<const double> x_s, double s, double t) {
  if (model.family != SyntheticFamily::x_free_poly) {
    throw ArgumentError("closed-form solution requires an x-free-poly model");
  }
  if (x_s.size() != model.dim) throw ArgumentError("state dimension mismatch");
  const auto at_s = alpha_sigma_lambda(sched, s);
  const auto at_t = alpha_sigma_lambda(sched, t);
  if (!(t <= s)) throw ArgumentError("exact solution integrates backward in time (t <= s)");

  StateVector out(model.dim);
  const double ratio = at_t.alpha / at_s.alpha;
  for (std::size_t d = 0; d < model.dim; ++d) {
    const auto& c = model.poly_for(d);
    double integral = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (c[k] == 0.0) continue;
      integral += c[k] * (poly_exp_antiderivative(k, at_t.lambda) -
                          poly_exp_antiderivative(k, at_s.lambda));
    }
    out[d] = ratio * x_s[d] - at_t.alpha * integral;
  }
  return out;
}

StateVector dynamic_threshold(std::span<const double> x0, double ratio, double floor) {
  if (x0.empty()) throw ArgumentError("dynamic threshold of an empty vector");
  if (!(ratio > 0.5 && ratio <= 1.0)) throw ArgumentError("threshold ratio must be in (0.5, 1]");
  if (!(floor >= 1.0)) throw ArgumentError("threshold floor must be >= 1");

  std::vector<double> mags(x0.size());
  std::transform(x0.begin(), x0.end(), mags.begin(), [](double v) { return std::abs(v); });
  // Nearest rank: the smallest value with at least ratio * n entries at or below it.
  const auto n = mags.size();
  auto rank = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(rank - 1), mags.end());
  const double s = std::max(floor, mags[rank - 1]);

  StateVector out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = std::clamp(x0[i], -s, s) / s;
  return out;
}

std::string_view to_string(SyntheticFamily f) noexcept {
  return f == SyntheticFamily::x_free_poly ? "x-free-poly" : "linear-in-x";
}

SyntheticFamily parse_family(std::string_view s) {
  if (s == "x-free-poly") return SyntheticFamily::x_free_poly;
  if (s == "linear-in-x") return SyntheticFamily::linear_in_x;
  throw ValidationError("unknown synthetic model family '" + std::string(s) + "'");
}

}  // namespace unipc
