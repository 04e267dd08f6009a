#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "unipc/errors.hpp"
#include "unipc/rng.hpp"
#include "unipc/solver.hpp"

using namespace unipc;

namespace {

const NoiseSchedule kSched = NoiseSchedule::vp_linear();

// Records the time of every model call.
struct Recorder {
  std::shared_ptr<std::vector<double>> times = std::make_shared<std::vector<double>>();

  ModelEvaluator wrap(const ModelEvaluator& inner) const {
    auto log = times;
    return ModelEvaluator(inner.prediction(), [inner, log](std::span<const double> x, double t) {
      log->push_back(t);
      return inner(x, t);
    });
  }
};

SolverConfig config(int order, CorrectorMode corrector) {
  SolverConfig c;
  c.order = order;
  c.corrector = corrector;
  return c;
}

// Degree-5 forcing: smooth, with no exact integration by low-order steps.
SyntheticModel rich_model() {
  return SyntheticModel::x_free_poly({0.02, -0.03, 0.01, 0.004, -0.002, 0.0003}, 3);
}

double global_error(const SyntheticModel& m, const SolverConfig& cfg, std::size_t steps, bool exact_start) {
  const auto grid = make_time_grid(kSched, steps);
  const auto x_T = gaussian_vector(5, m.dim);
  SampleOptions opts;
  if (exact_start) {
    opts.starting_values = [&](std::size_t, double t) -> std::optional<StateVector> {
      return exact_solution_xfree(m, kSched, x_T, grid.times.front(), t);
    };
  }
  ModelEvaluator eval = make_evaluator(m, kSched);
  if (cfg.prediction == Prediction::data) eval = convert_parameterization(eval, kSched);
  const auto res = sample(eval, kSched, grid, cfg, x_T, opts);
  const auto ref = exact_solution_xfree(m, kSched, x_T, kSched.t_start(), kSched.t_end());
  return oracle::max_abs_diff(res.final_state(), ref);
}

double global_slope(const SyntheticModel& m, const SolverConfig& cfg, bool exact_start,
                    std::vector<std::size_t> ms = {40, 80, 160, 320, 640}) {
  std::vector<double> xs, es;
  for (auto M : ms) {
    xs.push_back(static_cast<double>(M));
    es.push_back(global_error(m, cfg, M, exact_start));
  }
  return -oracle::loglog_slope(xs, es);
}

// One step of size h ending at lambda_end, with `history` exact buffered
// outputs spaced h apart behind the base point.
struct LocalSetup {
  SolverState state;
  StepPoint next;
  StateVector exact_next;
};

LocalSetup local_setup(const SyntheticModel& m, double lambda_base, double h, std::size_t history) {
  LocalSetup s;
  const auto x_ref = gaussian_vector(9, m.dim);
  const double t_ref = kSched.t_start();
  s.state.capacity = history;
  for (std::size_t k = history; k-- > 0;) {
    const double lam = lambda_base - static_cast<double>(k) * h;
    const double t = t_of_lambda(kSched, lam);
    s.state.push({t, kSched.lambda(t), m.noise_at_lambda(x_ref, kSched.lambda(t))});
  }
  const double t_base = s.state.latest().t;
  s.state.x = exact_solution_xfree(m, kSched, x_ref, t_ref, t_base);
  const double t_next = t_of_lambda(kSched, s.state.latest().lambda + h);
  s.next = {t_next, kSched.lambda(t_next)};
  s.exact_next = exact_solution_xfree(m, kSched, x_ref, t_ref, t_next);
  return s;
}

}  // namespace

TEST_CASE("first-order UniP is DDIM bit for bit") {
  const auto m = SyntheticModel::linear_in_x(0.4, 3);
  const auto grid = make_time_grid(kSched, 25);
  const auto x_T = gaussian_vector(1, 3);
  const auto eval = make_evaluator(m, kSched);

  const auto unip = sample(eval, kSched, grid, config(1, CorrectorMode::off), x_T);

  // Standalone DDIM loop.
  StateVector x = x_T;
  std::vector<StateVector> traj = {x};
  for (std::size_t i = 1; i <= grid.steps(); ++i) {
    const auto e = eval(x, grid.times[i - 1]);
    x = ddim_step(x, e, kSched, {grid.times[i - 1], grid.lambdas[i - 1]}, {grid.times[i], grid.lambdas[i]},
                  Prediction::noise);
    traj.push_back(x);
  }
  REQUIRE(unip.trajectory.size() == traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) CHECK(unip.trajectory[i] == traj[i]);

  SolverConfig ddim = config(1, CorrectorMode::off);
  ddim.base = BaseSolver::ddim;
  CHECK(sample(eval, kSched, grid, ddim, x_T).trajectory == traj);

  SolverConfig varying = config(1, CorrectorMode::off);
  varying.varying_coefficients = true;
  CHECK(sample(eval, kSched, grid, varying, x_T).trajectory == traj);
}

TEST_CASE("first-order update matches the closed form") {
  SolverState st;
  st.capacity = 1;
  st.x = {0.3, -0.2};
  const double t0 = 0.8, t1 = 0.6;
  st.push({t0, kSched.lambda(t0), {0.5, 1.5}});
  const StepPoint next{t1, kSched.lambda(t1)};
  const auto out = unip_step(st, kSched, next, 1, {});
  const auto a = alpha_sigma_lambda(kSched, t0);
  const auto b = alpha_sigma_lambda(kSched, t1);
  const double h = b.lambda - a.lambda;
  CHECK(out[0] == doctest::Approx(b.alpha / a.alpha * 0.3 - b.sigma * std::expm1(h) * 0.5).epsilon(1e-15));
}

TEST_CASE("zero and constant noise leave only the base update") {
  for (int p = 2; p <= 4; ++p) {
    SolverState st;
    st.capacity = static_cast<std::size_t>(p);
    st.x = {0.3, -0.2};
    for (int k = p; k-- > 0;) {
      const double t = 0.5 + 0.05 * k;
      st.push({t, kSched.lambda(t), {0.25, 0.25}});
    }
    const StepPoint next{0.45, kSched.lambda(0.45)};
    const auto pred = unip_step(st, kSched, next, p, {});
    const auto ddim = ddim_step(st.x, st.latest().output, kSched, {st.latest().t, st.latest().lambda}, next,
                                Prediction::noise);
    CHECK(oracle::max_abs_diff(pred, ddim) < 1e-15);

    auto constant = ModelEvaluator(Prediction::noise, [](std::span<const double>, double) {
      return StateVector{0.25, 0.25};
    });
    const auto corr = unic_step(st, constant, kSched, next, p, pred, {});
    CHECK(oracle::max_abs_diff(corr.corrected, ddim) < 1e-15);
  }
  auto zero = make_evaluator(SyntheticModel::x_free_poly({0.0}, 2), kSched);
  const auto grid = make_time_grid(kSched, 8);
  const StateVector x_T = {1.0, -2.0};
  const auto res = sample(zero, kSched, grid, config(2, CorrectorMode::off), x_T);
  const double ratio = alpha_sigma_lambda(kSched, kSched.t_end()).alpha / alpha_sigma_lambda(kSched, 1.0).alpha;
  CHECK(res.final_state()[0] == doctest::Approx(ratio).epsilon(1e-13));
}

TEST_CASE("first-order corrector with B2 uses a1 = 1/2") {
  SolverState st;
  st.capacity = 1;
  st.x = {0.3};
  const double t0 = 0.7, t1 = 0.6;
  st.push({t0, kSched.lambda(t0), {0.5}});
  const StepPoint next{t1, kSched.lambda(t1)};
  auto model = ModelEvaluator(Prediction::noise, [](std::span<const double> x, double) {
    return StateVector{2.0 * x[0]};
  });
  StepOptions opts;
  opts.bh = Bh::b2;
  const auto pred = unip_step(st, kSched, next, 1, opts);
  const auto corr = unic_step(st, model, kSched, next, 1, pred, opts);
  const auto a = alpha_sigma_lambda(kSched, t0);
  const auto b = alpha_sigma_lambda(kSched, t1);
  const double h = b.lambda - a.lambda;
  const double d1 = 2.0 * pred[0] - 0.5;
  const double expected = b.alpha / a.alpha * 0.3 - b.sigma * std::expm1(h) * 0.5 - b.sigma * std::expm1(h) * 0.5 * d1;
  CHECK(corr.corrected[0] == doctest::Approx(expected).epsilon(1e-14));
  CHECK(corr.output_at_next[0] == 2.0 * pred[0]);
  CHECK(model.eval_count() == 1);
}

TEST_CASE("local truncation order from exact history") {
  const auto m = rich_model();
  const double lambda_base = 0.5;

  SUBCASE("UniP-2 local error is O(h^3)") {
    std::vector<double> hs, errs;
    for (int e = 2; e <= 7; ++e) {
      const double h = std::ldexp(1.0, -e);
      auto s = local_setup(m, lambda_base, h, 2);
      const auto out = unip_step(s.state, kSched, s.next, 2, {});
      hs.push_back(h);
      errs.push_back(oracle::max_abs_diff(out, s.exact_next));
    }
    CHECK(oracle::loglog_slope(hs, errs) >= 2.6);
  }
  SUBCASE("UniC-2 local error is O(h^4)") {
    std::vector<double> hs, errs;
    const auto eval = make_evaluator(m, kSched);
    for (int e = 2; e <= 7; ++e) {
      const double h = std::ldexp(1.0, -e);
      auto s = local_setup(m, lambda_base, h, 2);
      const auto pred = unip_step(s.state, kSched, s.next, 2, {});
      const auto corr = unic_step(s.state, eval, kSched, s.next, 2, pred, {});
      hs.push_back(h);
      errs.push_back(oracle::max_abs_diff(corr.corrected, s.exact_next));
    }
    CHECK(oracle::loglog_slope(hs, errs) >= 3.6);
  }
  SUBCASE("higher orders") {
    for (int p = 3; p <= 5; ++p) {
      std::vector<double> hs, errs;
      for (int e = 2; e <= 5; ++e) {
        const double h = std::ldexp(1.0, -e);
        auto s = local_setup(m, lambda_base, h, static_cast<std::size_t>(p));
        const auto out = unip_step(s.state, kSched, s.next, p, {});
        hs.push_back(h);
        errs.push_back(oracle::max_abs_diff(out, s.exact_next));
      }
      CAPTURE(p);
      CHECK(oracle::loglog_slope(hs, errs) >= p + 0.6);
    }
  }
}

TEST_CASE("varying coefficients agree with the solved path at small h") {
  SolverState st;
  st.capacity = 1;
  st.x = {0.3, 0.1};
  const double t0 = 0.5;
  st.push({t0, kSched.lambda(t0), {0.5, -0.25}});
  const double t1 = t_of_lambda(kSched, st.latest().lambda + 1e-3);
  Stencil stencil = multistep_stencil(st, {t1, kSched.lambda(t1)}, 1);
  stencil.add_point(1.0, t1, std::vector<double>{0.6, -0.2});
  const auto v = varying_update(stencil, st.x, kSched);
  const auto w = unified_update(stencil, st.x, kSched, Prediction::noise, Bh::b1, {.a1_shortcut = false});
  for (int j = 0; j < 2; ++j) CHECK(std::abs(v[j] - w[j]) <= 1e-9 * std::abs(w[j]));
}

TEST_CASE("global convergence orders with exact starting values") {
  const auto m = rich_model();
  CHECK(global_slope(m, config(1, CorrectorMode::off), false) >= 0.8);
  CHECK(global_slope(m, config(2, CorrectorMode::off), true) >= 1.7);
  CHECK(global_slope(m, config(3, CorrectorMode::off), true) >= 2.6);
  CHECK(global_slope(m, config(1, CorrectorMode::standard), false) >= 1.7);
  CHECK(global_slope(m, config(2, CorrectorMode::standard), true) >= 2.6);
  CHECK(global_slope(m, config(3, CorrectorMode::standard), true) >= 3.6);

  SolverConfig varying = config(2, CorrectorMode::standard);
  varying.varying_coefficients = true;
  CHECK(global_slope(m, varying, true) >= 2.6);

  SolverConfig data = config(2, CorrectorMode::standard);
  data.prediction = Prediction::data;
  CHECK(global_slope(m, data, true) >= 2.6);
}

TEST_CASE("corrector lifts the order of its base solver") {
  const auto m = rich_model();
  SolverConfig ddim = config(1, CorrectorMode::off);
  ddim.base = BaseSolver::ddim;
  SolverConfig ddim_c = ddim;
  ddim_c.corrector = CorrectorMode::standard;
  CHECK(global_slope(m, ddim_c, false) - global_slope(m, ddim, false) >= 0.7);
  CHECK(global_slope(m, config(2, CorrectorMode::standard), true) -
            global_slope(m, config(2, CorrectorMode::off), true) >=
        0.7);
}

TEST_CASE("NFE accounting") {
  const auto m = SyntheticModel::linear_in_x(0.5, 2);
  const StateVector x_T = {0.3, -0.7};
  for (std::size_t steps : {1u, 2u, 5u, 10u}) {
    for (int order : {1, 2, 3}) {
      for (auto mode : {CorrectorMode::off, CorrectorMode::standard, CorrectorMode::oracle}) {
        auto eval = make_evaluator(m, kSched);
        const auto res = sample(eval, kSched, make_time_grid(kSched, steps), config(order, mode), x_T);
        const std::uint64_t expected = mode == CorrectorMode::oracle ? 2 * steps - 1 : steps;
        CAPTURE(steps);
        CAPTURE(order);
        CHECK(res.nfe == expected);
        CHECK(eval.eval_count() == res.nfe);
      }
    }
  }
}

TEST_CASE("buffer discipline and warm-up") {
  const auto m = SyntheticModel::linear_in_x(0.5, 2);
  const StateVector x_T = {0.3, -0.7};
  const std::size_t steps = 8;
  const auto grid = make_time_grid(kSched, steps);
  for (int order = 1; order <= 4; ++order) {
    Recorder rec;
    const auto eval = rec.wrap(make_evaluator(m, kSched));
    const auto res = sample(eval, kSched, grid, config(order, CorrectorMode::standard), x_T);
    REQUIRE(res.trace.size() == steps);
    for (const auto& tr : res.trace) {
      const int expected_order = std::min<int>(order, static_cast<int>(tr.step));
      CHECK(tr.order == expected_order);
      // D_m points: t_{i-1}, ..., t_{i-p_i}, plus t_i when correcting.
      std::vector<double> expected = {grid.times[tr.step - 1]};
      for (int m_ = 2; m_ <= tr.order; ++m_) expected.push_back(grid.times[tr.step - m_]);
      if (tr.step < steps) expected.push_back(grid.times[tr.step]);
      CHECK(tr.aux_times == expected);
      CHECK(tr.corrected == (tr.step < steps));
    }
    // Calls happen once per grid time except t_M.
    std::vector<double> expected_calls(grid.times.begin(), grid.times.end() - 1);
    CHECK(*rec.times == expected_calls);
  }
}

TEST_CASE("buffer keeps the output at the uncorrected predictor") {
  const auto m = SyntheticModel::linear_in_x(0.5, 1);
  const auto grid = make_time_grid(kSched, 3);
  std::vector<StateVector> seen;
  auto eval = ModelEvaluator(Prediction::noise, [&](std::span<const double> x, double) {
    seen.emplace_back(x.begin(), x.end());
    return StateVector{0.5 * x[0]};
  });
  const auto res = sample(eval, kSched, grid, config(2, CorrectorMode::standard), StateVector{1.0});
  REQUIRE(seen.size() == 3);
  // The second call is at the step-1 predictor; the corrected state differs.
  CHECK(seen[1] != res.trajectory[1]);
  // Oracle mode evaluates at the corrected state too.
  seen.clear();
  const auto oracle_res = sample(eval, kSched, grid, config(2, CorrectorMode::oracle), StateVector{1.0});
  REQUIRE(seen.size() == 5);
  CHECK(seen[2] == oracle_res.trajectory[1]);
}

TEST_CASE("single step runs DDIM") {
  const auto m = SyntheticModel::linear_in_x(0.5, 2);
  const StateVector x_T = {0.3, -0.7};
  const auto grid = make_time_grid(kSched, 1);
  const auto eval = make_evaluator(m, kSched);
  const auto res = sample(eval, kSched, grid, config(3, CorrectorMode::standard), x_T);
  const auto e = eval(x_T, grid.times[0]);
  const auto ddim = ddim_step(x_T, e, kSched, {grid.times[0], grid.lambdas[0]}, {grid.times[1], grid.lambdas[1]},
                              Prediction::noise);
  CHECK(res.final_state() == ddim);
  CHECK(res.trace.front().order == 1);
}

TEST_CASE("order schedules") {
  const auto m = SyntheticModel::linear_in_x(0.5, 2);
  const StateVector x_T = {0.3, -0.7};
  const auto eval = make_evaluator(m, kSched);

  for (const std::string sched : {"123321", "123456", "1223334", "111"}) {
    SolverConfig cfg = config(*std::max_element(sched.begin(), sched.end()) - '0', CorrectorMode::standard);
    cfg.order_schedule = sched;
    CHECK_NOTHROW(cfg.validate_for_steps(sched.size()));
    const auto res = sample(eval, kSched, make_time_grid(kSched, sched.size()), cfg, x_T);
    REQUIRE(res.trace.size() == sched.size());
    for (std::size_t i = 0; i < sched.size(); ++i) CHECK(res.trace[i].order == sched[i] - '0');
    CHECK(all_finite(res.final_state()));
  }

  SolverConfig bad = config(3, CorrectorMode::standard);
  bad.order_schedule = "132";
  CHECK_THROWS_WITH_AS(bad.validate_for_steps(3), doctest::Contains("step 2"), ValidationError);
  bad.order_schedule = "123";
  CHECK_THROWS_AS(bad.validate_for_steps(4), ValidationError);
  bad.order_schedule = "12a";
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad.order_schedule = "124";
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  CHECK_THROWS_AS(sample(eval, kSched, make_time_grid(kSched, 4), bad, x_T), ValidationError);
}

TEST_CASE("noise and data parameterizations") {
  const auto m = SyntheticModel::linear_in_x(0.3, 4);
  const auto grid = make_time_grid(kSched, 20);
  const auto x_T = gaussian_vector(3, 4);
  const auto noise = make_evaluator(m, kSched);
  const auto data = convert_parameterization(noise, kSched);

  SolverConfig n1 = config(1, CorrectorMode::off);
  SolverConfig d1 = n1;
  d1.prediction = Prediction::data;
  const auto a = sample(noise, kSched, grid, n1, x_T);
  const auto b = sample(data, kSched, grid, d1, x_T);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.trajectory.size(); ++i) {
    worst = std::max(worst, oracle::max_abs_diff(a.trajectory[i], b.trajectory[i]));
  }
  CHECK(worst < 1e-12);

  SolverConfig n2 = config(2, CorrectorMode::standard);
  SolverConfig d2 = n2;
  d2.prediction = Prediction::data;
  const auto c = sample(noise, kSched, grid, n2, x_T);
  const auto d = sample(data, kSched, grid, d2, x_T);
  CHECK(oracle::max_abs_diff(c.final_state(), d.final_state()) > 1e-6);

  SUBCASE("zero data prediction keeps the sigma ratio") {
    SolverState st;
    st.capacity = 1;
    st.x = {0.8};
    st.push({0.7, kSched.lambda(0.7), {0.0}});
    const StepPoint next{0.5, kSched.lambda(0.5)};
    StepOptions opts;
    opts.prediction = Prediction::data;
    const auto out = unip_step(st, kSched, next, 1, opts);
    CHECK(out[0] == doctest::Approx(0.8 * alpha_sigma_lambda(kSched, 0.5).sigma /
                                    alpha_sigma_lambda(kSched, 0.7).sigma).epsilon(1e-15));
  }
  SUBCASE("prediction mismatch is rejected") {
    CHECK_THROWS_AS(sample(noise, kSched, grid, d1, x_T), ValidationError);
  }
}

TEST_CASE("thresholded data prediction runs") {
  const auto m = SyntheticModel::linear_in_x(0.3, 16);
  const auto data = convert_parameterization(make_evaluator(m, kSched), kSched);
  SolverConfig cfg = config(2, CorrectorMode::standard);
  cfg.prediction = Prediction::data;
  cfg.thresholding = Thresholding{};
  const auto res = sample(data, kSched, make_time_grid(kSched, 10), cfg, gaussian_vector(4, 16));
  CHECK(all_finite(res.final_state()));
  SolverConfig noise_thr = config(2, CorrectorMode::standard);
  noise_thr.thresholding = Thresholding{};
  CHECK_THROWS_AS(noise_thr.validate(), ValidationError);
}

TEST_CASE("singlestep variant") {
  const auto m = rich_model();
  for (int order = 1; order <= 3; ++order) {
    SolverConfig cfg = config(order, CorrectorMode::off);
    cfg.variant = Variant::singlestep;
    auto eval = make_evaluator(m, kSched);
    const std::size_t steps = 6;
    const auto res = sample(eval, kSched, make_time_grid(kSched, steps), cfg, gaussian_vector(2, 3));
    CHECK(res.nfe == steps * static_cast<std::size_t>(order));
    CHECK(eval.eval_count() == res.nfe);
    CAPTURE(order);
    CHECK(global_slope(m, cfg, false, {40, 80, 160, 320}) >= order - 0.3);
  }
  CHECK(uniform_singlestep_nodes(3) == std::vector<double>{1.0 / 3.0, 2.0 / 3.0});
}

TEST_CASE("nonfinite model output aborts with the step index") {
  auto bad = ModelEvaluator(Prediction::noise, [](std::span<const double> x, double t) {
    StateVector out(x.size(), 0.1);
    if (t < 0.5) out[0] = std::numeric_limits<double>::quiet_NaN();
    return out;
  });
  const auto grid = make_time_grid(kSched, 10, SkipKind::uniform_time);
  try {
    sample(bad, kSched, grid, config(2, CorrectorMode::standard), StateVector{1.0, 1.0});
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(e.step() == 6);  // first call below t = 0.5 is at t_6
  }
}

TEST_CASE("steps without enough history are rejected") {
  SolverState st;
  st.capacity = 3;
  st.x = {1.0};
  st.push({0.9, kSched.lambda(0.9), {0.1}});
  CHECK_THROWS_AS(unip_step(st, kSched, {0.8, kSched.lambda(0.8)}, 2, {}), PreconditionError);
  CHECK_THROWS_AS(st.push({0.95, kSched.lambda(0.95), {0.1}}), PreconditionError);
}

TEST_CASE("config labels and enum names") {
  CHECK(config(2, CorrectorMode::standard).label() == "unipc-2");
  CHECK(config(3, CorrectorMode::off).label() == "unip-3");
  SolverConfig d = config(1, CorrectorMode::standard);
  d.base = BaseSolver::ddim;
  CHECK(d.label() == "ddim+unic");
  CHECK(parse_corrector("oracle") == CorrectorMode::oracle);
  CHECK(parse_variant("singlestep") == Variant::singlestep);
  CHECK(parse_base_solver(to_string(BaseSolver::ddim)) == BaseSolver::ddim);
  CHECK_THROWS_AS(parse_corrector("Oracle"), ValidationError);
}
