#pragma once

#include <json.hpp>

#include "nsmkl/config.hpp"
#include "nsmkl/solver.hpp"

namespace nsmkl {

nlohmann::json config_to_json(const MklConfig& config);

/// Overlays the fields present in `j` onto `base`. Unknown keys are rejected.
MklConfig config_from_json(const nlohmann::json& j, MklConfig base = {});

nlohmann::json trace_to_json(const SolveTrace& trace);

}  // namespace nsmkl
