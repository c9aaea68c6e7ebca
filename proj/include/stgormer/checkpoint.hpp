#pragma once

#include <filesystem>
#include <string>

#include "stgormer/config.hpp"
#include "stgormer/model.hpp"

namespace stg {

/// Text sections (config echo, graph, normalizer) followed by the parameter
/// manifest and raw little-endian float64 values.
void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const StgormerModel& model);

struct LoadedCheckpoint {
  RunConfig config;
  StgormerModel model;
};

/// Rebuilds the model from the echoed config and graph, then restores parameters.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Restores parameters into an existing model after checking that the echoed
/// model config and graph match it exactly. Throws std::runtime_error otherwise.
void restore_checkpoint(const std::filesystem::path& path, StgormerModel& model);

}  // namespace stg
