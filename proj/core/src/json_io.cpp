#include "unipc/json_io.hpp"

#include <cmath>
#include <initializer_list>
#include <limits>
#include <string>

#include "unipc/errors.hpp"
#include "unipc/rng.hpp"

namespace unipc {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void check_object(const json& j, const char* what, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ValidationError(std::string(what) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool known = false;
    for (const char* k : keys) known = known || key == k;
    if (!known) throw ValidationError(std::string(what) + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const char* what) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) throw ValidationError("");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ValidationError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer() || (it->is_number_integer() && it->template get<long long>() < 0 &&
                                       std::is_unsigned_v<T>)) {
        throw ValidationError("");
      }
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw ValidationError("");
    }
    return it->template get<T>();
  } catch (const std::exception&) {
    throw ValidationError(std::string(what) + ": key '" + key + "' has the wrong type");
  }
}

std::string require_string(const json& j, const char* key, const char* what) {
  if (!j.contains(key)) throw ValidationError(std::string(what) + ": missing key '" + key + "'");
  return get_or<std::string>(j, key, {}, what);
}

std::vector<double> number_array(const json& j, const char* what) {
  if (!j.is_array()) throw ValidationError(std::string(what) + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw ValidationError(std::string(what) + " must be an array of numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

// Wraps construction errors from the library types as validation errors.
template <typename F>
auto validated(const char* what, F&& f) {
  try {
    return f();
  } catch (const ValidationError&) {
    throw;
  } catch (const Error& e) {
    throw ValidationError(std::string(what) + ": " + e.what());
  }
}

ordered_json nullable(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

double from_nullable(const json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!j.is_number()) throw ValidationError("expected a number or null");
  return j.get<double>();
}

}  // namespace

// ---------------------------------------------------------------------------

ordered_json schedule_to_json(const NoiseSchedule& sched) {
  ordered_json j;
  j["kind"] = to_string(sched.kind());
  if (sched.kind() == ScheduleKind::vp_linear) {
    j["beta_min"] = sched.beta_min();
    j["beta_max"] = sched.beta_max();
  } else {
    j["s"] = sched.cosine_s();
  }
  j["t_start"] = sched.t_start();
  j["t_end"] = sched.t_end();
  return j;
}

NoiseSchedule schedule_from_json(const json& j) {
  const char* what = "schedule";
  if (!j.is_object()) throw ValidationError("schedule must be a JSON object");
  const auto kind = parse_schedule_kind(require_string(j, "kind", what));
  return validated(what, [&] {
    if (kind == ScheduleKind::vp_linear) {
      check_object(j, what, {"kind", "beta_min", "beta_max", "t_start", "t_end"});
      return NoiseSchedule::vp_linear(get_or(j, "beta_min", 0.1, what),
                                      get_or(j, "beta_max", 20.0, what),
                                      get_or(j, "t_start", 1.0, what),
                                      get_or(j, "t_end", 1e-3, what));
    }
    check_object(j, what, {"kind", "s", "t_start", "t_end"});
    return NoiseSchedule::vp_cosine(get_or(j, "s", 0.008, what),
                                    get_or(j, "t_start", 0.9946, what),
                                    get_or(j, "t_end", 1e-3, what));
  });
}

ordered_json model_to_json(const SyntheticModel& model) {
  ordered_json j;
  j["family"] = to_string(model.family);
  if (model.family == SyntheticFamily::x_free_poly) {
    if (model.coeffs.size() == 1) {
      j["coeffs"] = model.coeffs.front();
    } else {
      j["coeffs"] = model.coeffs;
    }
  } else {
    if (model.gains.size() == 1) {
      j["kappa"] = model.gains.front();
    } else {
      j["kappa"] = model.gains;
    }
  }
  j["dim"] = model.dim;
  return j;
}

SyntheticModel model_from_json(const json& j) {
  const char* what = "model";
  if (!j.is_object()) throw ValidationError("model must be a JSON object");
  const auto family = parse_family(require_string(j, "family", what));
  return validated(what, [&] {
    if (family == SyntheticFamily::x_free_poly) {
      check_object(j, what, {"family", "coeffs", "dim"});
      if (!j.contains("coeffs")) throw ValidationError("model: missing key 'coeffs'");
      const json& c = j.at("coeffs");
      if (c.is_array() && !c.empty() && c.front().is_array()) {
        std::vector<std::vector<double>> rows;
        for (const auto& row : c) rows.push_back(number_array(row, "model.coeffs"));
        auto m = SyntheticModel::x_free_poly(std::move(rows));
        if (j.contains("dim") && get_or<std::size_t>(j, "dim", 0, what) != m.dim) {
          throw ValidationError("model: dim disagrees with the number of coefficient rows");
        }
        return m;
      }
      return SyntheticModel::x_free_poly(number_array(c, "model.coeffs"),
                                         get_or<std::size_t>(j, "dim", 1, what));
    }
    check_object(j, what, {"family", "kappa", "dim"});
    if (!j.contains("kappa")) throw ValidationError("model: missing key 'kappa'");
    const json& k = j.at("kappa");
    if (k.is_array()) {
      auto m = SyntheticModel::linear_in_x(number_array(k, "model.kappa"));
      if (j.contains("dim") && get_or<std::size_t>(j, "dim", 0, what) != m.dim) {
        throw ValidationError("model: dim disagrees with the number of gains");
      }
      return m;
    }
    return SyntheticModel::linear_in_x(get_or(j, "kappa", 0.0, what),
                                       get_or<std::size_t>(j, "dim", 1, what));
  });
}

ordered_json solver_config_to_json(const SolverConfig& cfg) {
  ordered_json j;
  if (!cfg.name.empty()) j["name"] = cfg.name;
  j["base"] = to_string(cfg.base);
  j["order"] = cfg.order;
  j["variant"] = to_string(cfg.variant);
  j["bh"] = to_string(cfg.bh);
  j["prediction"] = to_string(cfg.prediction);
  j["corrector"] = to_string(cfg.corrector);
  j["varying_coefficients"] = cfg.varying_coefficients;
  j["a1_shortcut"] = cfg.a1_shortcut;
  if (!cfg.order_schedule.empty()) j["order_schedule"] = cfg.order_schedule;
  if (cfg.thresholding) {
    j["thresholding"] = {{"ratio", cfg.thresholding->ratio}, {"floor", cfg.thresholding->floor}};
  }
  return j;
}

SolverConfig solver_config_from_json(const json& j) {
  const char* what = "solver";
  check_object(j, what,
               {"name", "base", "order", "variant", "bh", "prediction", "corrector",
                "varying_coefficients", "a1_shortcut", "order_schedule", "thresholding"});
  SolverConfig cfg;
  cfg.name = get_or<std::string>(j, "name", "", what);
  cfg.base = parse_base_solver(get_or<std::string>(j, "base", "unip", what));
  cfg.order = get_or(j, "order", cfg.order, what);
  cfg.variant = parse_variant(get_or<std::string>(j, "variant", "multistep", what));
  cfg.bh = parse_bh(get_or<std::string>(j, "bh", "b1", what));
  cfg.prediction = parse_prediction(get_or<std::string>(j, "prediction", "noise", what));
  cfg.corrector = parse_corrector(get_or<std::string>(j, "corrector", "standard", what));
  cfg.varying_coefficients = get_or(j, "varying_coefficients", false, what);
  cfg.a1_shortcut = get_or(j, "a1_shortcut", true, what);
  cfg.order_schedule = get_or<std::string>(j, "order_schedule", "", what);
  if (j.contains("thresholding") && !j.at("thresholding").is_null()) {
    const json& t = j.at("thresholding");
    check_object(t, "solver.thresholding", {"ratio", "floor"});
    cfg.thresholding = Thresholding{get_or(t, "ratio", kDefaultThresholdRatio, what),
                                    get_or(t, "floor", kDefaultThresholdFloor, what)};
  }
  cfg.validate();
  return cfg;
}

ordered_json study_config_to_json(const ConvergenceStudy& study) {
  ordered_json j;
  j["schedule"] = schedule_to_json(study.schedule);
  j["model"] = model_to_json(study.model);
  ordered_json solvers = ordered_json::array();
  for (const auto& cfg : study.solvers) solvers.push_back(solver_config_to_json(cfg));
  j["solvers"] = std::move(solvers);
  j["step_counts"] = study.step_counts;
  j["error_norm"] = to_string(study.error_norm);
  j["reference"] = to_string(study.reference);
  j["skip"] = to_string(study.skip);
  j["starting_values"] = to_string(study.starting_values);
  j["generator"] = kGaussianGeneratorName;
  j["seed"] = study.seed;
  return j;
}

namespace {

ConvergenceStudy study_inputs_from_json(const json& j, bool with_outputs) {
  const char* what = "study";
  if (with_outputs) {
    check_object(j, what,
                 {"schedule", "model", "solvers", "step_counts", "error_norm", "reference", "skip",
                  "starting_values", "generator", "seed", "results", "fits"});
  } else {
    check_object(j, what,
                 {"schedule", "model", "solvers", "step_counts", "error_norm", "reference", "skip",
                  "starting_values", "generator", "seed"});
  }
  ConvergenceStudy study;
  if (j.contains("schedule")) study.schedule = schedule_from_json(j.at("schedule"));
  if (!j.contains("model")) throw ValidationError("study: missing key 'model'");
  study.model = model_from_json(j.at("model"));
  if (!j.contains("solvers") || !j.at("solvers").is_array()) {
    throw ValidationError("study: 'solvers' must be an array");
  }
  for (const auto& s : j.at("solvers")) study.solvers.push_back(solver_config_from_json(s));
  if (!j.contains("step_counts") || !j.at("step_counts").is_array()) {
    throw ValidationError("study: 'step_counts' must be an array");
  }
  for (const auto& m : j.at("step_counts")) {
    if (!m.is_number_unsigned()) throw ValidationError("study: step counts must be positive integers");
    study.step_counts.push_back(m.get<std::size_t>());
  }
  study.error_norm = parse_error_norm(get_or<std::string>(j, "error_norm", "max-abs", what));
  study.reference = parse_reference_mode(
      get_or<std::string>(j, "reference", study.model.has_closed_form() ? "closed-form" : "fine-rk4", what));
  study.skip = parse_skip_kind(get_or<std::string>(j, "skip", "uniform-lambda", what));
  study.starting_values =
      parse_starting_values(get_or<std::string>(j, "starting_values", "computed", what));
  const auto generator = get_or<std::string>(j, "generator", std::string(kGaussianGeneratorName), what);
  if (generator != kGaussianGeneratorName) {
    throw ValidationError("study: unknown generator '" + generator + "' (supported: " +
                          std::string(kGaussianGeneratorName) + ")");
  }
  study.seed = get_or<std::uint64_t>(j, "seed", study.seed, what);
  return study;
}

}  // namespace

ConvergenceStudy study_config_from_json(const json& j) {
  ConvergenceStudy study = study_inputs_from_json(j, false);
  study.validate();
  return study;
}

ordered_json study_to_json(const ConvergenceStudy& study) {
  ordered_json j = study_config_to_json(study);
  ordered_json results = ordered_json::array();
  for (const auto& r : study.results) {
    ordered_json row;
    row["config"] = r.config_index;
    row["solver"] = r.solver;
    row["order"] = r.order;
    row["variant"] = to_string(r.variant);
    row["bh"] = to_string(r.bh);
    row["prediction"] = to_string(r.prediction);
    row["corrector"] = to_string(r.corrector);
    row["M"] = r.steps;
    row["nfe"] = r.nfe;
    row["error"] = nullable(r.error);
    row["seconds"] = r.seconds;
    if (r.diverged()) row["failure"] = r.failure;
    results.push_back(std::move(row));
  }
  j["results"] = std::move(results);
  ordered_json fits = ordered_json::array();
  for (const auto& f : study.fits) {
    ordered_json row;
    row["config"] = f.config_index;
    row["solver"] = f.solver;
    if (f.fit) {
      row["slope"] = f.fit->slope;
      row["intercept"] = f.fit->intercept;
      row["r_squared"] = f.fit->r_squared;
      row["used_M"] = f.fit->used;
      row["excluded_M"] = f.fit->excluded;
    } else {
      row["error"] = f.message;
    }
    fits.push_back(std::move(row));
  }
  j["fits"] = std::move(fits);
  return j;
}

ConvergenceStudy study_from_json(const json& j) {
  ConvergenceStudy study = study_inputs_from_json(j, true);
  try {
    if (j.contains("results")) {
      for (const auto& row : j.at("results")) {
        StudyResult r;
        r.config_index = row.at("config").get<std::size_t>();
        r.solver = row.at("solver").get<std::string>();
        r.order = row.at("order").get<int>();
        r.variant = parse_variant(row.at("variant").get<std::string>());
        r.bh = parse_bh(row.at("bh").get<std::string>());
        r.prediction = parse_prediction(row.at("prediction").get<std::string>());
        r.corrector = parse_corrector(row.at("corrector").get<std::string>());
        r.steps = row.at("M").get<std::size_t>();
        r.nfe = row.at("nfe").get<std::uint64_t>();
        r.error = from_nullable(row.at("error"));
        r.seconds = row.at("seconds").get<double>();
        if (row.contains("failure")) r.failure = row.at("failure").get<std::string>();
        study.results.push_back(std::move(r));
      }
    }
    if (j.contains("fits")) {
      for (const auto& row : j.at("fits")) {
        ConfigFit f;
        f.config_index = row.at("config").get<std::size_t>();
        f.solver = row.at("solver").get<std::string>();
        if (row.contains("slope")) {
          OrderFit fit;
          fit.slope = row.at("slope").get<double>();
          fit.intercept = row.at("intercept").get<double>();
          fit.r_squared = row.at("r_squared").get<double>();
          fit.used = row.at("used_M").get<std::vector<std::size_t>>();
          fit.excluded = row.at("excluded_M").get<std::vector<std::size_t>>();
          f.fit = std::move(fit);
        } else {
          f.message = row.value("error", std::string());
        }
        study.fits.push_back(std::move(f));
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("study results: ") + e.what());
  }
  return study;
}

}  // namespace unipc
