// SPDX-License-Identifier: Apache-2.0
//
// Model checkpoint: "HCNN", u32 version, u32 D, u32 layer count, then
// (u32 out, u32 in) per layer, then per layer W_raw (row-major), bias,
// c_star and u as little-endian f64, then a u32 scaler flag followed by the
// embedding and temperature scaler means/stds, and a trailing CRC32 of all
// preceding bytes.
#pragma once

#include <filesystem>
#include <optional>

#include "gibbsnet/hanna.hpp"

namespace gibbsnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_model(const hanna::ModelParams& params, const std::filesystem::path& path);

/// Throws DataError on bad magic, version or dimension mismatch (when
/// `expected_D` is given), checksum failure or truncation.
hanna::ModelParams load_model(const std::filesystem::path& path, std::optional<int> expected_D = std::nullopt);

}  // namespace gibbsnet
