#pragma once

#include <filesystem>

#include "rnnscope/cells.hpp"

namespace rnnscope {

/// Versioned JSON checkpoint: cell kind, dimensions, and all arrays in
/// row-major nested form. Round-trips doubles exactly.
void save_checkpoint(const std::filesystem::path& path, const RnnParams& params);
RnnParams load_checkpoint(const std::filesystem::path& path);

}  // namespace rnnscope
