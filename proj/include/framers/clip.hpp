#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "framers/common.hpp"

namespace framers {

/// Geometry of a sampled clip: frame count, sampling stride, pixel dims.
struct ClipSpec {
  int t_raw = 16;
  int stride = 2;
  int height = 224;
  int width = 224;
  int channels = 3;

  std::int64_t pixels_per_frame() const {
    return std::int64_t(height) * width * channels;
  }
  std::int64_t pixel_count() const { return t_raw * pixels_per_frame(); }
  void validate() const;
  bool operator==(const ClipSpec&) const = default;
};

/// One raw 8-bit RGB frame.
struct FrameU8 {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<std::uint8_t> data;  // [height][width][channels]
};

// Normalized pixel block [t_raw, height, width, channels], values in [0,1].
// Every clip built by this module sits on the 8-bit grid (multiples of
// 1/255), so the codec can store frames losslessly as bytes.
struct VideoClip {
  ClipSpec spec;
  std::string clip_id;
  int source_offset = 0;
  std::vector<double> pixels;

  double& at(int t, int y, int x, int c) {
    return pixels[((std::int64_t(t) * spec.height + y) * spec.width + x) *
                      spec.channels +
                  c];
  }
  double at(int t, int y, int x, int c) const {
    return pixels[((std::int64_t(t) * spec.height + y) * spec.width + x) *
                      spec.channels +
                  c];
  }
  void validate() const;
};

/// Synthetic clip whose informative content occupies known temporal slots.
struct PlantedClip {
  VideoClip clip;
  std::vector<int> planted_slots;  // sorted, token-slot granularity
};

// Frames outside the planted slots hold this constant. Nearest 8-bit gray
// to mid-range, so planted clips survive the codec byte round-trip exactly.
inline constexpr double kConstantGray = 128.0 / 255.0;

/// [0,255] integer frames -> [0,1] clip. Rejects out-of-range input.
VideoClip normalize(const std::vector<FrameU8>& frames, const ClipSpec& spec,
                    const std::string& clip_id = "", int source_offset = 0);

/// Exact inverse of normalize on 8-bit data.
std::vector<FrameU8> denormalize(const VideoClip& clip);

/// Samples t_raw frames at the spec stride from a uniformly random valid
/// start offset, resizing (bilinear) to spec dimensions when needed.
VideoClip sample_clip(const std::vector<FrameU8>& source, const ClipSpec& spec,
                      std::uint64_t rng_seed, const std::string& clip_id = "");

/// Builds a clip whose planted slots carry a seeded moving-shape pattern and
/// whose remaining frames are constant gray. A slot covers temporal_patch
/// consecutive raw frames.
PlantedClip make_planted_clip(const ClipSpec& spec, int temporal_patch,
                              const std::vector<int>& planted_slots,
                              std::uint64_t rng_seed,
                              const std::string& clip_id = "");

/// n clips with uniformly random planted slot pairs (k_planted slots each).
std::vector<PlantedClip> make_planted_dataset(const ClipSpec& spec,
                                              int temporal_patch, int n_clips,
                                              int k_planted,
                                              std::uint64_t rng_seed);

// ---- on-disk formats -------------------------------------------------------

/// Reads a directory of numbered image files (png/jpg/bmp) as frames.
std::vector<FrameU8> load_frames_from_image_dir(
    const std::filesystem::path& dir);

/// Reads a raw uncompressed frame blob described by manifest.json.
std::vector<FrameU8> load_frames_from_raw_dir(const std::filesystem::path& dir);

/// Writes a clip as frames.raw + manifest.json under dir.
void write_clip_raw(const VideoClip& clip, const std::filesystem::path& dir,
                    double fps = 8.0);

/// Reads back a clip written by write_clip_raw.
VideoClip read_clip_raw(const std::filesystem::path& dir);

/// Dataset layout: dataset.json, labels.json, clips/<id>/{manifest.json,frames.raw}.
void write_planted_dataset(const std::vector<PlantedClip>& clips,
                           const ClipSpec& spec, int temporal_patch,
                           const std::filesystem::path& dir);

struct PlantedDataset {
  ClipSpec spec;
  int temporal_patch = 2;
  std::vector<PlantedClip> clips;
};

PlantedDataset read_planted_dataset(const std::filesystem::path& dir);

}  // namespace framers
