#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "evocollapse/model.hpp"

namespace evocollapse {

/// Checkpoint layout: `<dir>/manifest.json` holds the model config and an
/// ordered tensor index (name, shape, offset, length, file); tensor payloads
/// are raw little-endian float32, row-major, concatenated in `<dir>/weights.bin`.
inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kWeightsName = "weights.bin";

/// Canonical tensor names in checkpoint order for a model with `n_layers` layers.
std::vector<std::string> tensor_names(Index n_layers);

void save_checkpoint(const Model& model, const std::filesystem::path& dir);

/// Throws MissingTensor, ShapeMismatch, NonFinite or Io.
Model load_checkpoint(const std::filesystem::path& dir);

}  // namespace evocollapse
