#pragma once

#include <filesystem>
#include <string_view>

#include "nsmkl/model.hpp"

namespace nsmkl {

inline constexpr std::string_view kArchiveFormat = "nsmkl-v1";

/// Writes a self-describing JSON archive. Doubles are written in shortest round-trip form,
/// so every numeric field reloads bit-identically.
void save_model(const TrainedModel& model, const std::filesystem::path& path);

/// Throws Error(version) on a foreign format tag and Error(parse) on malformed or truncated input.
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace nsmkl
