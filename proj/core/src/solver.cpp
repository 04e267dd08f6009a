#include "unipc/solver.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "unipc/errors.hpp"

namespace unipc {

using Evaluate = std::function<StateVector(std::span<const double>, double)>;

// ---------------------------------------------------------------------------
// SolverConfig

void SolverConfig::validate() const {
  if (order < 1 || order > static_cast<int>(kMaxSolveOrder)) {
    throw ValidationError("order " + std::to_string(order) + " outside [1, 9]");
  }
  if (base == BaseSolver::ddim) {
    if (order != 1) throw ValidationError("the ddim base solver is first order; set order = 1");
    if (varying_coefficients) throw ValidationError("varying coefficients need the unip base solver");
    if (!order_schedule.empty()) throw ValidationError("order schedules need the unip base solver");
  }
  if (varying_coefficients) {
    if (order > static_cast<int>(kMaxVaryingOrder)) {
      throw ValidationError("varying coefficients support order <= 5");
    }
    if (prediction != Prediction::noise) {
      throw ValidationError("varying coefficients are defined for noise prediction only");
    }
  }
  for (std::size_t i = 0; i < order_schedule.size(); ++i) {
    const char c = order_schedule[i];
    if (c < '1' || c > '9') {
      throw ValidationError("order schedule '" + order_schedule + "' has a non-digit entry at position " +
                            std::to_string(i + 1));
    }
    if (c - '0' > order) {
      throw ValidationError("order schedule '" + order_schedule + "' entry " + std::to_string(i + 1) +
                            " = " + c + " exceeds the maximum order " + std::to_string(order));
    }
  }
  if (thresholding) {
    if (prediction != Prediction::data) {
      throw ValidationError("dynamic thresholding applies to data prediction only");
    }
    if (!(thresholding->ratio > 0.5 && thresholding->ratio <= 1.0) || !(thresholding->floor >= 1.0)) {
      throw ValidationError("thresholding needs ratio in (0.5, 1] and floor >= 1");
    }
  }
}

void SolverConfig::validate_for_steps(std::size_t steps) const {
  validate();
  if (steps == 0) throw ValidationError("sampling needs at least one step");
  if (order_schedule.empty()) return;
  if (order_schedule.size() != steps) {
    throw ValidationError("order schedule '" + order_schedule + "' has length " +
                          std::to_string(order_schedule.size()) + " but the grid has " +
                          std::to_string(steps) + " steps");
  }
  for (std::size_t i = 1; i <= steps; ++i) {
    const auto entry = static_cast<std::size_t>(order_schedule[i - 1] - '0');
    if (entry > i) {
      throw ValidationError("order schedule '" + order_schedule + "' asks for order " +
                            std::to_string(entry) + " at step " + std::to_string(i) +
                            ", but only " + std::to_string(i) + " points are available");
    }
  }
}

int SolverConfig::step_order(std::size_t i) const {
  if (base == BaseSolver::ddim) return 1;
  if (!order_schedule.empty()) return order_schedule.at(i - 1) - '0';
  if (variant == Variant::singlestep) return order;
  return std::min(order, static_cast<int>(i));
}

std::string SolverConfig::label() const {
  if (!name.empty()) return name;
  std::string out;
  if (base == BaseSolver::ddim) {
    out = corrector == CorrectorMode::off ? "ddim" : "ddim+unic";
  } else {
    out = corrector == CorrectorMode::off ? "unip" : "unipc";
    if (varying_coefficients) out += "_v";
    out += "-" + std::to_string(order);
  }
  if (corrector == CorrectorMode::oracle) out += "-oracle";
  if (!order_schedule.empty()) out += "[" + order_schedule + "]";
  return out;
}

// ---------------------------------------------------------------------------
// State and stencils

void SolverState::push(HistoryEntry entry) {
  if (!buffer.empty() && !(entry.t < buffer.back().t)) {
    throw PreconditionError("buffer timesteps must be strictly decreasing");
  }
  buffer.push_back(std::move(entry));
  while (buffer.size() > std::max<std::size_t>(capacity, 1)) buffer.pop_front();
}

const HistoryEntry& SolverState::latest() const {
  if (buffer.empty()) throw PreconditionError("model-output buffer is empty");
  return buffer.back();
}

void Stencil::add_point(double r_m, double t_m, std::span<const double> output) {
  if (output.size() != base_output.size()) {
    throw PreconditionError("model output dimension changed within a step");
  }
  StateVector d(output.size());
  for (std::size_t j = 0; j < d.size(); ++j) d[j] = output[j] - base_output[j];
  r.push_back(r_m);
  diffs.push_back(std::move(d));
  aux_times.push_back(t_m);
}

Stencil multistep_stencil(const SolverState& state, StepPoint next, int order) {
  if (order < 1) throw PreconditionError("step order must be >= 1");
  const auto needed = static_cast<std::size_t>(order);
  if (state.buffer.size() < needed) {
    throw PreconditionError("order " + std::to_string(order) + " step needs " +
                            std::to_string(needed) + " buffered outputs, have " +
                            std::to_string(state.buffer.size()));
  }
  const auto& base = state.buffer.back();
  Stencil st;
  st.prev = {base.t, base.lambda};
  st.next = next;
  st.base_output = base.output;
  const double h = st.h();
  if (!(h > 0.0)) throw PreconditionError("step must increase lambda");
  for (std::size_t m = 2; m <= needed; ++m) {
    const auto& e = state.buffer[state.buffer.size() - m];
    st.add_point((e.lambda - base.lambda) / h, e.t, e.output);
  }
  return st;
}

// ---------------------------------------------------------------------------
// Updates

StateVector unified_update(const Stencil& st, std::span<const double> x_prev,
                           const NoiseSchedule& sched, Prediction prediction, Bh bh,
                           CoefficientOptions options) {
  const auto at_prev = alpha_sigma_lambda(sched, st.prev.t);
  const auto at_next = alpha_sigma_lambda(sched, st.next.t);
  const double h = st.h();
  const std::size_t n = x_prev.size();
  if (st.base_output.size() != n) throw PreconditionError("state/output dimension mismatch");

  StateVector out(n);
  if (prediction == Prediction::noise) {
    const double x_coef = at_next.alpha / at_prev.alpha;
    const double o_coef = at_next.sigma * std::expm1(h);
    for (std::size_t j = 0; j < n; ++j) out[j] = x_coef * x_prev[j] - o_coef * st.base_output[j];
  } else {
    const double x_coef = at_next.sigma / at_prev.sigma;
    const double o_coef = at_next.alpha * -std::expm1(-h);
    for (std::size_t j = 0; j < n; ++j) out[j] = x_coef * x_prev[j] + o_coef * st.base_output[j];
  }
  if (st.size() == 0) return out;

  const auto sys = solve_weights(st.r, h, bh, prediction, options);
  const double b = b_of_h(bh, h);
  StateVector acc(n, 0.0);
  for (std::size_t m = 0; m < st.size(); ++m) {
    const double w = sys.weights[m] / st.r[m];
    for (std::size_t j = 0; j < n; ++j) acc[j] += w * st.diffs[m][j];
  }
  if (prediction == Prediction::noise) {
    const double scale = at_next.sigma * b;
    for (std::size_t j = 0; j < n; ++j) out[j] -= scale * acc[j];
  } else {
    const double scale = at_next.alpha * b;
    for (std::size_t j = 0; j < n; ++j) out[j] += scale * acc[j];
  }
  return out;
}

StateVector varying_update(const Stencil& st, std::span<const double> x_prev,
                           const NoiseSchedule& sched) {
  const auto at_prev = alpha_sigma_lambda(sched, st.prev.t);
  const auto at_next = alpha_sigma_lambda(sched, st.next.t);
  const double h = st.h();
  const std::size_t n = x_prev.size();
  if (st.base_output.size() != n) throw PreconditionError("state/output dimension mismatch");

  const double x_coef = at_next.alpha / at_prev.alpha;
  const double o_coef = at_next.sigma * std::expm1(h);
  StateVector out(n);
  for (std::size_t j = 0; j < n; ++j) out[j] = x_coef * x_prev[j] - o_coef * st.base_output[j];
  if (st.size() == 0) return out;

  // (D_m / r_m)_m = C_p^T (h^n eps^(n))_n, so the n-th derivative term is
  // recovered by column n of A_p = C_p^{-1}.
  const auto a = varying_coefficient_matrix(st.r);
  const std::size_t p = st.size();
  StateVector acc(n, 0.0);
  for (std::size_t row = 0; row < p; ++row) {
    const double basis = h * varphi(static_cast<int>(row) + 2, h);
    for (std::size_t m = 0; m < p; ++m) {
      const double w = basis * a(m, row) / st.r[m];
      for (std::size_t j = 0; j < n; ++j) acc[j] += w * st.diffs[m][j];
    }
  }
  for (std::size_t j = 0; j < n; ++j) out[j] -= at_next.sigma * acc[j];
  return out;
}

StateVector ddim_step(std::span<const double> x_prev, std::span<const double> output_prev,
                      const NoiseSchedule& sched, StepPoint prev, StepPoint next,
                      Prediction prediction) {
  if (x_prev.size() != output_prev.size()) throw PreconditionError("state/output dimension mismatch");
  const auto s = alpha_sigma_lambda(sched, prev.t);
  const auto t = alpha_sigma_lambda(sched, next.t);
  const double h = next.lambda - prev.lambda;
  StateVector out(x_prev.size());
  if (prediction == Prediction::noise) {
    const double x_coef = t.alpha / s.alpha;
    const double o_coef = t.sigma * std::expm1(h);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = x_coef * x_prev[j] - o_coef * output_prev[j];
  } else {
    const double x_coef = t.sigma / s.sigma;
    const double o_coef = t.alpha * -std::expm1(-h);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = x_coef * x_prev[j] + o_coef * output_prev[j];
  }
  return out;
}

namespace {

StateVector apply_update(const Stencil& st, std::span<const double> x_prev,
                         const NoiseSchedule& sched, const StepOptions& options) {
  if (options.varying_coefficients) return varying_update(st, x_prev, sched);
  return unified_update(st, x_prev, sched, options.prediction, options.bh, options.coefficients);
}

Stencil singlestep_stencil_impl(const SolverState& state, const Evaluate& evaluate,
                                const NoiseSchedule& sched, StepPoint next,
                                std::span<const double> nodes, const StepOptions& options) {
  const auto& base = state.latest();
  Stencil st;
  st.prev = {base.t, base.lambda};
  st.next = next;
  st.base_output = base.output;
  const double h = st.h();
  if (!(h > 0.0)) throw PreconditionError("step must increase lambda");

  double last = 0.0;
  for (double node : nodes) {
    if (!(node > last && node < 1.0)) {
      throw PreconditionError("singlestep nodes must increase strictly inside (0, 1)");
    }
    last = node;
  }

  for (double node : nodes) {
    const double t_m = t_of_lambda(sched, st.prev.lambda + node * h);
    const double lambda_m = sched.lambda(t_m);
    const double h_m = lambda_m - st.prev.lambda;
    if (!(h_m > 0.0) || !(lambda_m < next.lambda)) {
      throw PreconditionError("singlestep node collapses onto an endpoint; step too small");
    }

    // Lower-order singlestep estimate at s_m over the nodes already placed.
    Stencil sub;
    sub.prev = st.prev;
    sub.next = {t_m, lambda_m};
    sub.base_output = st.base_output;
    sub.diffs = st.diffs;
    sub.aux_times = st.aux_times;
    for (double r_prev : st.r) sub.r.push_back(r_prev * h / h_m);
    const StateVector x_m = apply_update(sub, state.x, sched, options);
    const StateVector out_m = evaluate(x_m, t_m);
    st.add_point(h_m / h, t_m, out_m);
  }
  return st;
}

}  // namespace

StateVector unip_step(const SolverState& state, const NoiseSchedule& sched, StepPoint next,
                      int order, const StepOptions& options) {
  return apply_update(multistep_stencil(state, next, order), state.x, sched, options);
}

CorrectorResult unic_step(const SolverState& state, const ModelEvaluator& model,
                          const NoiseSchedule& sched, StepPoint next, int order,
                          std::span<const double> predictor_result, const StepOptions& options) {
  Stencil st = multistep_stencil(state, next, order);
  CorrectorResult res;
  res.output_at_next = model(predictor_result, next.t);
  st.add_point(1.0, next.t, res.output_at_next);
  res.corrected = apply_update(st, state.x, sched, options);
  return res;
}

Stencil singlestep_stencil(SolverState& state, const ModelEvaluator& model,
                           const NoiseSchedule& sched, StepPoint next,
                           std::span<const double> nodes, const StepOptions& options) {
  Evaluate counted = [&](std::span<const double> x, double t) {
    ++state.nfe;
    return model(x, t);
  };
  return singlestep_stencil_impl(state, counted, sched, next, nodes, options);
}

std::vector<double> uniform_singlestep_nodes(int order) {
  std::vector<double> nodes;
  for (int m = 1; m < order; ++m) nodes.push_back(static_cast<double>(m) / order);
  return nodes;
}

// ---------------------------------------------------------------------------
// Driver

SampleResult sample(const ModelEvaluator& model, const NoiseSchedule& sched,
                    const TimeGrid& grid, const SolverConfig& config,
                    std::span<const double> x_init, const SampleOptions& options) {
  const std::size_t steps = grid.steps();
  config.validate_for_steps(steps);
  if (grid.lambdas.size() != grid.times.size()) {
    throw ValidationError("time grid has mismatched times and lambdas");
  }
  if (model.prediction() != config.prediction) {
    throw ValidationError("model predicts " + std::string(to_string(model.prediction())) +
                          " but the solver is configured for " +
                          std::string(to_string(config.prediction)));
  }
  if (x_init.empty() || !all_finite(x_init)) {
    throw ArgumentError("initial state must be nonempty and finite");
  }

  StepOptions step_opts;
  step_opts.bh = config.bh;
  step_opts.prediction = config.prediction;
  step_opts.coefficients.a1_shortcut = config.a1_shortcut;
  step_opts.varying_coefficients = config.varying_coefficients;

  SolverState state;
  state.capacity = static_cast<std::size_t>(config.order);
  state.x.assign(x_init.begin(), x_init.end());

  std::size_t current_step = 0;
  const Evaluate evaluate = [&](std::span<const double> x, double t) {
    StateVector out = model(x, t);
    ++state.nfe;
    if (out.size() != x.size()) {
      throw PreconditionError("model returned dimension " + std::to_string(out.size()) +
                              " for a state of dimension " + std::to_string(x.size()));
    }
    if (config.thresholding) {
      out = dynamic_threshold(out, config.thresholding->ratio, config.thresholding->floor);
    }
    if (!all_finite(out)) throw NumericError("nonfinite model output", current_step);
    return out;
  };
  const auto check = [&](const StateVector& x, const char* what) {
    if (!all_finite(x)) throw NumericError(std::string("nonfinite ") + what, current_step);
  };

  SampleResult result;
  result.trajectory.reserve(steps + 1);
  result.trajectory.push_back(state.x);
  state.push({grid.times[0], grid.lambdas[0], evaluate(state.x, grid.times[0])});

  for (std::size_t i = 1; i <= steps; ++i) {
    current_step = i;
    state.step_index = i;
    const std::uint64_t evals_before = state.nfe;
    const int p_i = config.step_order(i);
    const StepPoint next{grid.times[i], grid.lambdas[i]};

    Stencil st = config.variant == Variant::singlestep
                     ? singlestep_stencil_impl(state, evaluate, sched, next,
                                               uniform_singlestep_nodes(p_i), step_opts)
                     : multistep_stencil(state, next, p_i);

    StateVector predicted = config.base == BaseSolver::ddim
                                ? ddim_step(state.x, st.base_output, sched, st.prev, next,
                                            config.prediction)
                                : apply_update(st, state.x, sched, step_opts);
    check(predicted, "predictor state");

    StepTrace trace;
    trace.step = i;
    trace.order = p_i;
    trace.aux_times.push_back(st.prev.t);
    trace.aux_times.insert(trace.aux_times.end(), st.aux_times.begin(), st.aux_times.end());

    if (i == steps) {
      state.x = std::move(predicted);
      trace.evals = state.nfe - evals_before;
      result.trace.push_back(std::move(trace));
      result.trajectory.push_back(state.x);
      break;
    }

    bool started = false;
    if (options.starting_values && config.variant == Variant::multistep &&
        static_cast<int>(i) < config.order) {
      if (auto v = options.starting_values(i, next.t)) {
        if (v->size() != predicted.size()) throw ArgumentError("starting value has wrong dimension");
        predicted = std::move(*v);
        started = true;
      }
    }

    StateVector output_next = evaluate(predicted, next.t);
    if (config.corrector != CorrectorMode::off && !started) {
      st.add_point(1.0, next.t, output_next);
      trace.aux_times.push_back(next.t);
      StateVector corrected = apply_update(st, state.x, sched, step_opts);
      check(corrected, "corrector state");
      if (config.corrector == CorrectorMode::oracle) output_next = evaluate(corrected, next.t);
      state.x = std::move(corrected);
      trace.corrected = true;
    } else {
      state.x = std::move(predicted);
    }
    state.push({next.t, next.lambda, std::move(output_next)});

    trace.evals = state.nfe - evals_before;
    result.trace.push_back(std::move(trace));
    result.trajectory.push_back(state.x);
  }

  result.nfe = state.nfe;
  return result;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Variant v) noexcept {
  return v == Variant::multistep ? "multistep" : "singlestep";
}

std::string_view to_string(CorrectorMode c) noexcept {
  switch (c) {
    case CorrectorMode::off: return "off";
    case CorrectorMode::standard: return "standard";
    case CorrectorMode::oracle: return "oracle";
  }
  return "?";
}

std::string_view to_string(BaseSolver b) noexcept {
  return b == BaseSolver::unip ? "unip" : "ddim";
}

Variant parse_variant(std::string_view s) {
  if (s == "multistep") return Variant::multistep;
  if (s == "singlestep") return Variant::singlestep;
  throw ValidationError("unknown variant '" + std::string(s) + "'");
}

CorrectorMode parse_corrector(std::string_view s) {
  if (s == "off") return CorrectorMode::off;
  if (s == "standard") return CorrectorMode::standard;
  if (s == "oracle") return CorrectorMode::oracle;
  throw ValidationError("unknown corrector mode '" + std::string(s) + "'");
}

BaseSolver parse_base_solver(std::string_view s) {
  if (s == "unip") return BaseSolver::unip;
  if (s == "ddim") return BaseSolver::ddim;
  throw ValidationError("unknown base solver '" + std::string(s) + "'");
}

}  // namespace unipc
