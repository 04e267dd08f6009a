#include "unipc/study.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

#include "unipc/errors.hpp"
#include "unipc/rng.hpp"

namespace unipc {

void ConvergenceStudy::validate() const {
  model.validate();
  if (solvers.empty()) throw ValidationError("study lists no solvers");
  if (step_counts.empty()) throw ValidationError("study lists no step counts");
  for (std::size_t i = 0; i < step_counts.size(); ++i) {
    if (step_counts[i] == 0) throw ValidationError("step counts must be positive");
    if (i > 0 && step_counts[i] <= step_counts[i - 1]) {
      throw ValidationError("step counts must be strictly increasing");
    }
  }
  if (reference == ReferenceMode::closed_form && !model.has_closed_form()) {
    throw ValidationError("closed-form reference needs an x-free-poly model; use fine-rk4");
  }
  if (starting_values == StartingValues::exact && !model.has_closed_form()) {
    throw ValidationError("exact starting values need an x-free-poly model");
  }
  for (std::size_t c = 0; c < solvers.size(); ++c) {
    const auto& cfg = solvers[c];
    if (cfg.label().find_first_of(",\"\n\r") != std::string::npos) {
      throw ValidationError("solver name '" + cfg.label() + "' may not contain commas, quotes or newlines");
    }
    for (std::size_t m : step_counts) {
      try {
        cfg.validate_for_steps(m);
      } catch (const ValidationError& e) {
        throw ValidationError("solver " + std::to_string(c) + " (" + cfg.label() + "): " + e.what());
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Fitting

OrderFit fit_order(std::span<const FitPoint> points) {
  OrderFit fit;
  std::vector<double> xs, ys;
  std::string reasons;
  for (const auto& p : points) {
    std::string why;
    if (p.steps == 0) {
      why = "M = 0";
    } else if (!std::isfinite(p.error)) {
      why = "nonfinite error";
    } else if (p.error > kFitErrorCap) {
      why = "error above the divergence cap";
    } else if (p.error < kFitErrorFloor) {
      why = "error below the round-off floor";
    }
    if (!why.empty()) {
      fit.excluded.push_back(p.steps);
      reasons += " M=" + std::to_string(p.steps) + " (" + why + ")";
      continue;
    }
    fit.used.push_back(p.steps);
    xs.push_back(std::log2(static_cast<double>(p.steps)));
    ys.push_back(std::log2(p.error));
  }
  if (xs.size() < 3) {
    throw FitError("order fit needs at least 3 usable points, have " + std::to_string(xs.size()) +
                   (reasons.empty() ? std::string() : "; excluded:" + reasons));
  }

  const auto n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0) throw FitError("order fit needs at least two distinct M");
  const double b = sxy / sxx;
  const double a = my - b * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (a + b * xs[i]);
    ss_res += r * r;
  }
  fit.slope = -b;
  fit.intercept = a;
  fit.r_squared = syy == 0.0 ? 1.0 : 1.0 - ss_res / syy;
  return fit;
}

// ---------------------------------------------------------------------------
// Reference solutions

StateVector integrate_rk4(const SyntheticModel& model, std::span<const double> x_start,
                          double lambda_start, double lambda_end, std::size_t steps) {
  if (steps == 0) throw ArgumentError("RK4 needs at least one step");
  if (x_start.size() != model.dim) throw ArgumentError("state dimension mismatch");
  const std::size_t n = x_start.size();

  // sigma^2 = 1 / (1 + e^{2 lambda}) on a VP schedule.
  const auto rhs = [&](double lambda, const StateVector& x, StateVector& out) {
    const double sigma2 = 1.0 / (1.0 + std::exp(2.0 * lambda));
    const double sigma = std::sqrt(sigma2);
    const StateVector eps = model.noise_at_lambda(x, lambda);
    for (std::size_t j = 0; j < n; ++j) out[j] = sigma2 * x[j] - sigma * eps[j];
  };

  StateVector x(x_start.begin(), x_start.end());
  StateVector k1(n), k2(n), k3(n), k4(n), tmp(n);
  const double h = (lambda_end - lambda_start) / static_cast<double>(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    const double l = lambda_start + static_cast<double>(i) * h;
    rhs(l, x, k1);
    for (std::size_t j = 0; j < n; ++j) tmp[j] = x[j] + 0.5 * h * k1[j];
    rhs(l + 0.5 * h, tmp, k2);
    for (std::size_t j = 0; j < n; ++j) tmp[j] = x[j] + 0.5 * h * k2[j];
    rhs(l + 0.5 * h, tmp, k3);
    for (std::size_t j = 0; j < n; ++j) tmp[j] = x[j] + h * k3[j];
    rhs(l + h, tmp, k4);
    for (std::size_t j = 0; j < n; ++j) {
      x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
  }
  return x;
}

StateVector reference_solution(const SyntheticModel& model, const NoiseSchedule& sched,
                               std::span<const double> x_T, double t_start, double t_end,
                               ReferenceMode mode) {
  if (mode == ReferenceMode::closed_form) {
    return exact_solution_xfree(model, sched, x_T, t_start, t_end);
  }
  const double l0 = alpha_sigma_lambda(sched, t_start).lambda;
  const double l1 = alpha_sigma_lambda(sched, t_end).lambda;
  const StateVector coarse = integrate_rk4(model, x_T, l0, l1, kReferenceSteps);
  StateVector fine = integrate_rk4(model, x_T, l0, l1, 2 * kReferenceSteps);
  if (!all_finite(fine) || !all_finite(coarse)) {
    throw ReferenceError("reference integration produced nonfinite values");
  }
  const double diff = error_norm(coarse, fine, ErrorNorm::max_abs);
  double scale = 0.0;
  for (double v : fine) scale = std::max(scale, std::abs(v));
  if (diff > kReferenceTolerance * std::max(scale, std::numeric_limits<double>::min())) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "reference not converged: %zu and %zu steps differ by %.3g (relative %.3g)",
                  kReferenceSteps, 2 * kReferenceSteps, diff, diff / scale);
    throw ReferenceError(buf);
  }
  return fine;
}

double error_norm(std::span<const double> a, std::span<const double> b, ErrorNorm norm) {
  if (a.size() != b.size() || a.empty()) throw ArgumentError("error norm needs equal nonempty vectors");
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    if (norm == ErrorNorm::max_abs) {
      if (!(std::abs(d) <= acc)) acc = std::abs(d);  // keeps NaN
    } else {
      acc += d * d;
    }
  }
  return norm == ErrorNorm::max_abs ? acc : std::sqrt(acc / static_cast<double>(a.size()));
}

// ---------------------------------------------------------------------------
// Running

namespace {

StudyResult run_cell(const ConvergenceStudy& study, std::size_t config_index, std::size_t steps,
                     const StateVector& x_T, const StateVector& reference) {
  const SolverConfig& cfg = study.solvers[config_index];
  StudyResult row;
  row.config_index = config_index;
  row.solver = cfg.label();
  row.order = cfg.order;
  row.variant = cfg.variant;
  row.bh = cfg.bh;
  row.prediction = cfg.prediction;
  row.corrector = cfg.corrector;
  row.steps = steps;

  ModelEvaluator noise_model = make_evaluator(study.model, study.schedule);
  ModelEvaluator model = cfg.prediction == Prediction::noise
                             ? noise_model
                             : convert_parameterization(noise_model, study.schedule);
  const TimeGrid grid = make_time_grid(study.schedule, steps, study.skip);

  SampleOptions options;
  if (study.starting_values == StartingValues::exact) {
    options.starting_values = [&](std::size_t, double t) -> std::optional<StateVector> {
      return exact_solution_xfree(study.model, study.schedule, x_T, grid.times.front(), t);
    };
  }

  const auto start = std::chrono::steady_clock::now();
  try {
    const SampleResult res = sample(model, study.schedule, grid, cfg, x_T, options);
    row.nfe = res.nfe;
    row.error = error_norm(res.final_state(), reference, study.error_norm);
  } catch (const NumericError& e) {
    row.failure = e.what();
  } catch (const SingularSystemError& e) {
    row.failure = e.what();
  }
  if (row.diverged()) {
    row.nfe = model.eval_count();
    row.error = std::numeric_limits<double>::quiet_NaN();
  }
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

}  // namespace

void run_study(ConvergenceStudy& study, const RunOptions& options) {
  study.validate();
  const StateVector x_T = gaussian_vector(study.seed, study.model.dim);
  const StateVector reference = reference_solution(study.model, study.schedule, x_T,
                                                   study.schedule.t_start(),
                                                   study.schedule.t_end(), study.reference);

  const std::size_t n_steps = study.step_counts.size();
  const std::size_t cells = study.solvers.size() * n_steps;
  std::vector<StudyResult> results(cells);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};

  const auto worker = [&] {
    for (std::size_t k = next++; k < cells && !failed; k = next++) {
      try {
        results[k] = run_cell(study, k / n_steps, study.step_counts[k % n_steps], x_T, reference);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };

  const unsigned jobs = std::max(1u, std::min<unsigned>(options.jobs, static_cast<unsigned>(cells)));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  study.results = std::move(results);
  study.fits = fit_study(study);
}

namespace {

std::string setting_text(Variant variant, Bh bh, Prediction prediction) {
  return std::string(to_string(variant)) + " " + std::string(to_string(bh)) + " " +
         std::string(to_string(prediction));
}

}  // namespace

std::vector<ConfigFit> fit_study(const ConvergenceStudy& study) {
  std::vector<ConfigFit> fits;
  if (study.step_counts.size() < 4) return fits;
  for (std::size_t c = 0; c < study.solvers.size(); ++c) {
    ConfigFit cf;
    cf.config_index = c;
    cf.solver = study.solvers[c].label();
    cf.setting = setting_text(study.solvers[c].variant, study.solvers[c].bh, study.solvers[c].prediction);
    std::vector<FitPoint> points;
    for (const auto& r : study.results) {
      if (r.config_index == c) points.push_back({r.steps, r.error});
    }
    try {
      cf.fit = fit_order(points);
    } catch (const FitError& e) {
      cf.message = e.what();
    }
    fits.push_back(std::move(cf));
  }
  return fits;
}

std::vector<ConfigFit> fit_results(std::span<const StudyResult> results) {
  using Key = std::tuple<std::string, int, Variant, Bh, Prediction, CorrectorMode>;
  std::map<Key, std::size_t> index;
  std::vector<std::vector<FitPoint>> groups;
  std::vector<ConfigFit> fits;
  for (const auto& r : results) {
    const Key key{r.solver, r.order, r.variant, r.bh, r.prediction, r.corrector};
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, groups.size()).first;
      groups.emplace_back();
      ConfigFit cf;
      cf.config_index = fits.size();
      cf.solver = r.solver;
      cf.setting = setting_text(r.variant, r.bh, r.prediction);
      fits.push_back(std::move(cf));
    }
    groups[it->second].push_back({r.steps, r.error});
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    try {
      fits[g].fit = fit_order(groups[g]);
    } catch (const FitError& e) {
      fits[g].message = e.what();
    }
  }
  return fits;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string format_double(double v, const char* fmt) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T parse_number(const std::string& s, std::size_t line, const char* column) {
  std::istringstream ss(s);
  T v{};
  ss >> v;
  if (!ss || !ss.eof()) {
    throw ValidationError("line " + std::to_string(line) + ": bad " + column + " '" + s + "'");
  }
  return v;
}

double parse_real(const std::string& s, std::size_t line, const char* column) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size()) {
    throw ValidationError("line " + std::to_string(line) + ": bad " + column + " '" + s + "'");
  }
  return v;
}

}  // namespace

void write_csv(std::ostream& out, std::span<const StudyResult> results) {
  out << kCsvHeader << '\n';
  for (const auto& r : results) {
    out << r.solver << ',' << r.order << ',' << to_string(r.variant) << ',' << to_string(r.bh)
        << ',' << to_string(r.prediction) << ',' << to_string(r.corrector) << ',' << r.steps
        << ',' << r.nfe << ',' << format_double(r.error, "%.17g") << ','
        << format_double(r.seconds, "%.6f") << '\n';
  }
  if (!out) throw Error("failed writing CSV output");
}

std::vector<StudyResult> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty CSV input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw ValidationError("unexpected CSV header '" + line + "'");

  std::vector<StudyResult> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_line(line);
    if (f.size() != 10) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected 10 fields, got " +
                            std::to_string(f.size()));
    }
    StudyResult r;
    r.solver = f[0];
    r.order = parse_number<int>(f[1], line_no, "order");
    r.variant = parse_variant(f[2]);
    r.bh = parse_bh(f[3]);
    r.prediction = parse_prediction(f[4]);
    r.corrector = parse_corrector(f[5]);
    r.steps = parse_number<std::size_t>(f[6], line_no, "M");
    r.nfe = parse_number<std::uint64_t>(f[7], line_no, "nfe");
    r.error = parse_real(f[8], line_no, "error");
    r.seconds = parse_real(f[9], line_no, "seconds");
    if (std::isnan(r.error)) r.failure = "diverged";
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ErrorNorm n) noexcept {
  return n == ErrorNorm::max_abs ? "max-abs" : "rms";
}

std::string_view to_string(ReferenceMode m) noexcept {
  return m == ReferenceMode::closed_form ? "closed-form" : "fine-rk4";
}

std::string_view to_string(StartingValues s) noexcept {
  return s == StartingValues::computed ? "computed" : "exact";
}

ErrorNorm parse_error_norm(std::string_view s) {
  if (s == "max-abs") return ErrorNorm::max_abs;
  if (s == "rms") return ErrorNorm::rms;
  throw ValidationError("unknown error norm '" + std::string(s) + "'");
}

ReferenceMode parse_reference_mode(std::string_view s) {
  if (s == "closed-form") return ReferenceMode::closed_form;
  if (s == "fine-rk4") return ReferenceMode::fine_rk4;
  throw ValidationError("unknown reference mode '" + std::string(s) + "'");
}

StartingValues parse_starting_values(std::string_view s) {
  if (s == "computed") return StartingValues::computed;
  if (s == "exact") return StartingValues::exact;
  throw ValidationError("unknown starting values '" + std::string(s) + "'");
}

}  // namespace unipc
