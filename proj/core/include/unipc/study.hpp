#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unipc/model.hpp"
#include "unipc/schedule.hpp"
#include "unipc/solver.hpp"

namespace unipc {

enum class ErrorNorm { max_abs, rms };
enum class ReferenceMode { closed_form, fine_rk4 };

/// How multistep warm-up steps obtain their states.
enum class StartingValues {
  computed,  // lower-order warm-up steps
  exact,     // closed-form states for steps 1 .. order-1 (x-free-poly only)
};

inline constexpr std::size_t kReferenceSteps = 20000;
inline constexpr double kReferenceTolerance = 1e-9;

// Asymptotic window for order fits.
inline constexpr double kFitErrorCap = 1.0;
inline constexpr double kFitErrorFloor = 1e-12;

struct StudyResult {
  std::size_t config_index = 0;
  std::string solver;
  int order = 0;
  Variant variant = Variant::multistep;
  Bh bh = Bh::b1;
  Prediction prediction = Prediction::noise;
  CorrectorMode corrector = CorrectorMode::standard;
  std::size_t steps = 0;
  std::uint64_t nfe = 0;
  double error = 0.0;  // NaN when the run diverged
  double seconds = 0.0;
  std::string failure;  // empty unless the run aborted

  bool diverged() const noexcept { return !failure.empty(); }
};

struct FitPoint {
  std::size_t steps = 0;
  double error = 0.0;
};

struct OrderFit {
  double slope = 0.0;  // negated slope of log2 error against log2 M
  double intercept = 0.0;
  double r_squared = 0.0;
  std::vector<std::size_t> used;
  std::vector<std::size_t> excluded;
};

struct ConfigFit {
  std::size_t config_index = 0;
  std::string solver;
  std::string setting;  // "variant bh prediction"
  std::optional<OrderFit> fit;
  std::string message;  // why the fit is missing
};

struct ConvergenceStudy {
  NoiseSchedule schedule = NoiseSchedule::vp_linear();
  SyntheticModel model = SyntheticModel::x_free_poly({0.0}, 1);
  std::vector<SolverConfig> solvers;
  std::vector<std::size_t> step_counts;
  ErrorNorm error_norm = ErrorNorm::max_abs;
  ReferenceMode reference = ReferenceMode::closed_form;
  SkipKind skip = SkipKind::uniform_lambda;
  StartingValues starting_values = StartingValues::computed;
  std::uint64_t seed = 42;

  std::vector<StudyResult> results;
  std::vector<ConfigFit> fits;

  /// Throws ValidationError for anything run_study would reject.
  void validate() const;
};

/// Least-squares fit over the window kFitErrorFloor <= error <= kFitErrorCap
/// (nonfinite errors dropped). Throws FitError with fewer than 3 points left.
OrderFit fit_order(std::span<const FitPoint> points);

/// Classical RK4 on dx/dlambda = sigma^2 x - sigma eps(x, lambda) with
/// uniform lambda steps.
StateVector integrate_rk4(const SyntheticModel& model, std::span<const double> x_start,
                          double lambda_start, double lambda_end, std::size_t steps);

/// The final state at t_end from x_T at t_start. fine-rk4 runs
/// kReferenceSteps and 2 * kReferenceSteps and throws ReferenceError when
/// they differ by more than kReferenceTolerance relative.
StateVector reference_solution(const SyntheticModel& model, const NoiseSchedule& sched,
                               std::span<const double> x_T, double t_start, double t_end,
                               ReferenceMode mode);

double error_norm(std::span<const double> a, std::span<const double> b, ErrorNorm norm);

struct RunOptions {
  unsigned jobs = 1;
};

/// Fills study.results (sorted by config, then M) and study.fits. Divergent
/// runs are recorded with a NaN error and the failure message.
void run_study(ConvergenceStudy& study, const RunOptions& options = {});

/// One fit per config, skipped when the study has fewer than 4 step counts.
std::vector<ConfigFit> fit_study(const ConvergenceStudy& study);

/// Groups CSV rows by their identity columns (solver through corrector) in
/// order of first appearance and fits each group.
std::vector<ConfigFit> fit_results(std::span<const StudyResult> results);

inline constexpr std::string_view kCsvHeader =
    "solver,order,variant,bh,prediction,corrector,M,nfe,error,seconds";

void write_csv(std::ostream& out, std::span<const StudyResult> results);
std::vector<StudyResult> read_csv(std::istream& in);

std::string_view to_string(ErrorNorm n) noexcept;
std::string_view to_string(ReferenceMode m) noexcept;
std::string_view to_string(StartingValues s) noexcept;
ErrorNorm parse_error_norm(std::string_view s);
ReferenceMode parse_reference_mode(std::string_view s);
StartingValues parse_starting_values(std::string_view s);

}  // namespace unipc
