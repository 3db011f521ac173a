#pragma once

#include <filesystem>
#include <vector>

#include "framers/clip.hpp"

namespace framers {

/// One grid image: per clip, three rows (original frames, original with
/// masked slots blacked out, reconstruction), frames left to right.
void write_reconstruction_grid(const std::filesystem::path& path,
                               const std::vector<VideoClip>& originals,
                               const std::vector<std::vector<int>>& keep_slots,
                               const std::vector<VideoClip>& recons,
                               int temporal_patch);

}  // namespace framers
