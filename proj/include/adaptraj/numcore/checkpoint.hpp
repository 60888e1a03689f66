#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "adaptraj/numcore/tensor.hpp"

namespace adaptraj::numcore {

// Binary checkpoint container; byte layout documented in
// docs/checkpoint_format.md. All integers and doubles little-endian.
inline constexpr char kCheckpointMagic[8] = {'A', 'D', 'T', 'R', 'J', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_params(const ParameterSet& params);
/// Throws PersistenceError on bad magic, version mismatch, truncation or a
/// checksum mismatch.
ParameterSet deserialize_params(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params);
ParameterSet load_checkpoint(const std::filesystem::path& path);

/// Copies values from `source` into `target`; PersistenceError if layouts
/// (layer names, tensor names, shapes) differ.
void assign_values(ParameterSet& target, const ParameterSet& source);

}  // namespace adaptraj::numcore
