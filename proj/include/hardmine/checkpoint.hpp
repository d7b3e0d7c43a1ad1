#pragma once

#include <cstdint>
#include <filesystem>

#include "hardmine/core.hpp"
#include "hardmine/loop.hpp"

namespace hardmine {

inline constexpr int kCheckpointVersion = 1;

/// Order-sensitive hash of every sample id and feature value.
std::uint64_t dataset_fingerprint(const Dataset& dataset);

/// Writes a versioned JSON container {format, version, config_hash,
/// dataset_fingerprint, state}. The file is written beside the target and
/// renamed into place, so a crash never leaves a half-written checkpoint.
void checkpoint_save(const ExperimentState& state, const Dataset& train, const std::filesystem::path& path);

/// Throws Error("corrupt_checkpoint") for unreadable or truncated files and
/// hash mismatches, Error("version_mismatch") for other format versions,
/// and Error("dataset_mismatch") when `train` is not the dataset the state
/// was saved with. Nothing is returned on failure.
ExperimentState checkpoint_load(const std::filesystem::path& path, const Dataset& train);

} // namespace hardmine
