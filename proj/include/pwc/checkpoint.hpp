#pragma once

// Binary parameter container. Layout (little-endian):
//   "PWCP", u32 version, u32 bytes per value (4 or 8),
//   u64 config length, config text (serialized RunConfig),
//   u64 iteration, u32 entry count, then per entry
//   u32 name length, name, u32 rank, u64 dims..., values.

#include <filesystem>

#include "pwc/config.hpp"
#include "pwc/parameter_store.hpp"

namespace pwc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
struct Checkpoint {
  RunConfig config;
  long iteration = 0;
  Precision stored = Precision::f32;  // precision of the values on disk
  ParameterStore<T> params;
};

/// Values are written in the precision of T.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, long iteration,
                     const ParameterStore<T>& params);

/// Converts stored values to T. Throws FormatError on a malformed file and
/// DimensionError if the parameters do not match the embedded model config.
template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

/// Reads only the embedded config, iteration and stored precision.
Checkpoint<float> read_checkpoint_header(const std::filesystem::path& path);

}  // namespace pwc
