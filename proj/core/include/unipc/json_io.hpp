#pragma once

#include <nlohmann/json.hpp>

#include "unipc/model.hpp"
#include "unipc/schedule.hpp"
#include "unipc/solver.hpp"
#include "unipc/study.hpp"

namespace unipc {

// All readers reject unknown keys and wrong types with ValidationError.
// Omitted keys take the defaults of the corresponding C++ type.

nlohmann::ordered_json schedule_to_json(const NoiseSchedule& sched);
NoiseSchedule schedule_from_json(const nlohmann::json& j);

nlohmann::ordered_json model_to_json(const SyntheticModel& model);
SyntheticModel model_from_json(const nlohmann::json& j);

nlohmann::ordered_json solver_config_to_json(const SolverConfig& cfg);
SolverConfig solver_config_from_json(const nlohmann::json& j);

/// Study inputs only (what a config file holds).
nlohmann::ordered_json study_config_to_json(const ConvergenceStudy& study);
ConvergenceStudy study_config_from_json(const nlohmann::json& j);

/// Inputs plus results and fits. Divergent errors are written as null.
nlohmann::ordered_json study_to_json(const ConvergenceStudy& study);
ConvergenceStudy study_from_json(const nlohmann::json& j);

}  // namespace unipc
