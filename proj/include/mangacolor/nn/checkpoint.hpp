#pragma once

#include <filesystem>

#include <json.hpp>

#include "mangacolor/nn/tensor.hpp"

// A checkpoint is a directory with two files:
//   manifest.json  {"format": 1, "meta": {...},
//                   "tensors": {name: {"shape": [...], "dtype": "float32", "offset": bytes}}}
//   weights.bin    every tensor's values as little-endian float32, concatenated
namespace mangacolor::nn {

void save_checkpoint(const std::filesystem::path& dir, const ParamSet& params, const nlohmann::json& meta);

/// Reads only the manifest's "meta" object.
nlohmann::json read_checkpoint_meta(const std::filesystem::path& dir);

/// Fills `params` from the checkpoint. Every tensor in `params` must be present
/// with the same shape and the checkpoint must hold no extra tensors.
/// Returns the meta object.
nlohmann::json load_checkpoint(const std::filesystem::path& dir, ParamSet& params);

}  // namespace mangacolor::nn
