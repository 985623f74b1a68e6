#pragma once

// Parameter checkpoints: the magic `HTPC`, a u64 little-endian manifest length,
// a JSON manifest mapping each parameter name to {offset, size, shape}, then
// the HTP1 blobs back to back (offsets count from the first blob).

#include "htp/denoiser.hpp"
#include "htp/htp1.hpp"

#include <filesystem>

namespace htp::model {

void save_checkpoint(const std::filesystem::path& path, const DenoiserParams& params);

/// Loads every parameter named in `cfg`'s layout and checks its shape. Missing,
/// extra or misshapen entries raise IoError naming the parameter.
DenoiserParams load_checkpoint(const std::filesystem::path& path, const DenoiserConfig& cfg);

}  // namespace htp::model
