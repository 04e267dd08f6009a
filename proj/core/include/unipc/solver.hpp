#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unipc/coeffs.hpp"
#include "unipc/model.hpp"
#include "unipc/schedule.hpp"

namespace unipc {

enum class Variant { multistep, singlestep };
enum class CorrectorMode { off, standard, oracle };

/// Which method produces the predictor estimate that UniC refines.
enum class BaseSolver {
  unip,  // unified predictor of the configured order
  ddim,  // standalone first-order step (UniC on a foreign solver)
};

struct Thresholding {
  double ratio = kDefaultThresholdRatio;
  double floor = kDefaultThresholdFloor;
};

struct SolverConfig {
  std::string name;  // optional label; see label()
  BaseSolver base = BaseSolver::unip;
  int order = 2;
  Variant variant = Variant::multistep;
  Bh bh = Bh::b1;
  Prediction prediction = Prediction::noise;
  CorrectorMode corrector = CorrectorMode::standard;
  bool varying_coefficients = false;
  bool a1_shortcut = true;
  // One predictor order per step, e.g. "123321". Empty means the warm-up
  // rule p_i = min(order, i) (multistep) or p_i = order (singlestep).
  std::string order_schedule;
  std::optional<Thresholding> thresholding;

  /// Static checks. Throws ValidationError.
  void validate() const;
  /// Checks that depend on the number of steps (order schedule length and
  /// the history rule: entry i may not exceed i).
  void validate_for_steps(std::size_t steps) const;

  /// Predictor order used at step i (1-based).
  int step_order(std::size_t i) const;
  std::string label() const;
};

struct HistoryEntry {
  double t = 0.0;
  double lambda = 0.0;
  StateVector output;
};

/// Running state of one sampling run. Owned by a single worker.
struct SolverState {
  StateVector x;
  std::deque<HistoryEntry> buffer;  // most recent last, strictly decreasing t
  std::size_t capacity = 1;
  std::size_t step_index = 0;
  std::uint64_t nfe = 0;

  /// Appends an entry, evicting the oldest beyond capacity.
  void push(HistoryEntry entry);
  const HistoryEntry& latest() const;
};

struct StepPoint {
  double t = 0.0;
  double lambda = 0.0;
};

/// Everything one unified update needs: the base point t_{i-1} with its
/// model output, the target t_i, and the nodes r_m with differences
/// D_m = output(s_m) - output(t_{i-1}).
struct Stencil {
  StepPoint prev;
  StepPoint next;
  StateVector base_output;
  std::vector<double> r;
  std::vector<StateVector> diffs;
  std::vector<double> aux_times;

  double h() const noexcept { return next.lambda - prev.lambda; }
  std::size_t size() const noexcept { return r.size(); }
  void add_point(double r_m, double t_m, std::span<const double> output);
};

/// Multistep stencil: the base is the latest buffer entry and the
/// order - 1 earlier entries supply r_{m-1} = (lambda_{i-m} - lambda_{i-1}) / h.
/// Throws PreconditionError when the buffer is too short.
Stencil multistep_stencil(const SolverState& state, StepPoint next, int order);

/// The update shared by UniP and UniC. Noise prediction:
///   x = (alpha_t / alpha_s) x_s - sigma_t (e^h - 1) eps_s - sigma_t B(h) sum_m w_m D_m / r_m
/// Data prediction:
///   x = (sigma_t / sigma_s) x_s + alpha_t (1 - e^{-h}) x0_s + alpha_t B(h) sum_m w_m D_m / r_m
/// with w solved from the stencil's nodes. An empty stencil is the DDIM step.
StateVector unified_update(const Stencil& stencil, std::span<const double> x_prev,
                           const NoiseSchedule& sched, Prediction prediction, Bh bh,
                           CoefficientOptions options = {});

/// Varying-coefficient update (noise prediction only, at most 5 nodes):
///   x = DDIM - sigma_t sum_n h varphi_{n+1}(h) <A_p column n, (D_m / r_m)_m>
/// with A_p = C_p^{-1}.
StateVector varying_update(const Stencil& stencil, std::span<const double> x_prev,
                           const NoiseSchedule& sched);

/// Standalone first-order exponential-integrator step.
StateVector ddim_step(std::span<const double> x_prev, std::span<const double> output_prev,
                      const NoiseSchedule& sched, StepPoint prev, StepPoint next,
                      Prediction prediction);

struct StepOptions {
  Bh bh = Bh::b1;
  Prediction prediction = Prediction::noise;
  CoefficientOptions coefficients;
  bool varying_coefficients = false;
};

/// UniP-p from the buffer (multistep r).
StateVector unip_step(const SolverState& state, const NoiseSchedule& sched, StepPoint next,
                      int order, const StepOptions& options);

struct CorrectorResult {
  StateVector corrected;
  StateVector output_at_next;  // model output at the predictor's estimate
};

/// UniC-p around any order-p estimate of x at `next`. Costs one model call,
/// whose result doubles as the buffer entry for the next step.
CorrectorResult unic_step(const SolverState& state, const ModelEvaluator& model,
                          const NoiseSchedule& sched, StepPoint next, int order,
                          std::span<const double> predictor_result, const StepOptions& options);

/// Singlestep stencil with nodes r_m in (0, 1): each intermediate state at
/// s_m comes from a lower-order singlestep update over the nodes before it
/// and costs one model call (counted in state.nfe).
Stencil singlestep_stencil(SolverState& state, const ModelEvaluator& model,
                           const NoiseSchedule& sched, StepPoint next,
                           std::span<const double> nodes, const StepOptions& options);

/// Default singlestep nodes r_m = m / order, m = 1 .. order - 1.
std::vector<double> uniform_singlestep_nodes(int order);

struct StepTrace {
  std::size_t step = 0;
  int order = 0;
  std::vector<double> aux_times;  // base t_{i-1}, then the D_m points
  bool corrected = false;
  std::uint64_t evals = 0;        // model calls spent in this step
};

struct SampleResult {
  std::vector<StateVector> trajectory;  // x at t_0 .. t_M
  std::uint64_t nfe = 0;
  std::vector<StepTrace> trace;

  const StateVector& final_state() const { return trajectory.back(); }
};

struct SampleOptions {
  // When set and returning a value, replaces the state at t_i for the
  // first order - 1 multistep steps (exact starting values).
  std::function<std::optional<StateVector>(std::size_t step, double t)> starting_values;
};

/// Runs the full predictor-corrector loop over the grid. No corrector is
/// applied after the final predictor and the unused model call at t_M is
/// skipped, so predictor-only and standard-corrector runs cost M calls.
SampleResult sample(const ModelEvaluator& model, const NoiseSchedule& sched,
                    const TimeGrid& grid, const SolverConfig& config,
                    std::span<const double> x_init, const SampleOptions& options = {});

std::string_view to_string(Variant v) noexcept;
std::string_view to_string(CorrectorMode c) noexcept;
std::string_view to_string(BaseSolver b) noexcept;
Variant parse_variant(std::string_view s);
CorrectorMode parse_corrector(std::string_view s);
BaseSolver parse_base_solver(std::string_view s);

}  // namespace unipc
