#pragma once

// Parameter checkpoints: `<stem>.json` manifest listing tensors in order
// (name, rows, cols, byte offset) plus free-form metadata, and `<stem>.bin`
// holding the raw little-endian IEEE-754 binary64 values in manifest order.

#include <filesystem>
#include <span>

#include "json.hpp"
#include "mcrfm/autodiff.hpp"

namespace mcrfm::checkpoint {

inline constexpr int kFormatVersion = 1;

void write(const std::filesystem::path& stem, std::span<ad::ParamTensor* const> params,
           const nlohmann::json& metadata);

nlohmann::json read_manifest(const std::filesystem::path& stem);

/// Loads values into `params`, which must match the manifest's names and
/// shapes in order; throws IncompatibleCheckpoint otherwise.
nlohmann::json load(const std::filesystem::path& stem, std::span<ad::ParamTensor* const> params);

std::filesystem::path manifest_path(const std::filesystem::path& stem);
std::filesystem::path data_path(const std::filesystem::path& stem);

}  // namespace mcrfm::checkpoint
