#include "framers/viz.hpp"

#include <algorithm>

#include <opencv2/imgcodecs.hpp>

#include "framers/common.hpp"

namespace framers {

namespace {

constexpr int kPad = 2;
constexpr int kGroupPad = 6;

void blit_frame(cv::Mat& canvas, const VideoClip& clip, int t, int top,
                int left, bool blacked) {
  const ClipSpec& spec = clip.spec;
  for (int y = 0; y < spec.height; ++y) {
    auto* row = canvas.ptr<cv::Vec3b>(top + y);
    for (int x = 0; x < spec.width; ++x) {
      cv::Vec3b& px = row[left + x];
      if (blacked) {
        px = {0, 0, 0};
        continue;
      }
      const auto u8 = [&](int c) {
        const double v = clip.at(t, y, x, std::min(c, spec.channels - 1));
        return static_cast<unsigned char>(
            std::clamp<long>(std::lround(v * 255.0), 0, 255));
      };
      px = {u8(2), u8(1), u8(0)};  // imwrite takes BGR
    }
  }
}

}  // namespace

void write_reconstruction_grid(const std::filesystem::path& path,
                               const std::vector<VideoClip>& originals,
                               const std::vector<std::vector<int>>& keep_slots,
                               const std::vector<VideoClip>& recons,
                               int temporal_patch) {
  if (originals.empty() || originals.size() != keep_slots.size() ||
      originals.size() != recons.size())
    throw InvalidInput("write_reconstruction_grid: clip list mismatch");
  const ClipSpec& spec = originals[0].spec;
  if (temporal_patch < 1 || spec.t_raw % temporal_patch != 0)
    throw InvalidInput("write_reconstruction_grid: bad temporal_patch");
  const int t_tok = spec.t_raw / temporal_patch;

  const int cols = spec.t_raw;
  const int grid_w = cols * spec.width + (cols - 1) * kPad;
  const int rows_per_clip = 3 * spec.height + 2 * kPad;
  const int grid_h = int(originals.size()) * rows_per_clip +
                     (int(originals.size()) - 1) * kGroupPad;
  cv::Mat canvas(grid_h, grid_w, CV_8UC3, cv::Scalar(255, 255, 255));

  for (std::size_t ci = 0; ci < originals.size(); ++ci) {
    const VideoClip& orig = originals[ci];
    const VideoClip& recon = recons[ci];
    if (orig.spec.t_raw != spec.t_raw || orig.spec.height != spec.height ||
        orig.spec.width != spec.width ||
        recon.pixels.size() != orig.pixels.size())
      throw InvalidInput("write_reconstruction_grid: clip shape mismatch");
    std::vector<bool> kept(t_tok, false);
    for (int s : keep_slots[ci]) {
      if (s < 0 || s >= t_tok)
        throw InvalidInput("write_reconstruction_grid: keep slot out of range");
      kept[s] = true;
    }
    const int top = int(ci) * (rows_per_clip + kGroupPad);
    for (int t = 0; t < spec.t_raw; ++t) {
      const int left = t * (spec.width + kPad);
      const bool masked = !kept[t / temporal_patch];
      blit_frame(canvas, orig, t, top, left, false);
      blit_frame(canvas, orig, t, top + spec.height + kPad, left, masked);
      blit_frame(canvas, recon, t, top + 2 * (spec.height + kPad), left,
                 false);
    }
  }
  if (!cv::imwrite(path.string(), canvas))
    throw ArtifactError("cannot write image " + path.string());
}

}  // namespace framers
