#include "framers/clip.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <nlohmann/json.hpp>

#include "framers/rng.hpp"

namespace framers {

namespace fs = std::filesystem;
using nlohmann::json;

void ClipSpec::validate() const {
  if (t_raw <= 0) throw InvalidInput("ClipSpec: t_raw must be positive");
  if (stride < 1) throw InvalidInput("ClipSpec: stride must be >= 1");
  if (height <= 0 || width <= 0)
    throw InvalidInput("ClipSpec: height/width must be positive");
  if (channels != 3) throw InvalidInput("ClipSpec: channels must be 3");
}

void VideoClip::validate() const {
  spec.validate();
  if (std::int64_t(pixels.size()) != spec.pixel_count())
    throw InvalidInput("VideoClip: pixel buffer size " +
                       std::to_string(pixels.size()) + " does not match spec (" +
                       std::to_string(spec.pixel_count()) + ")");
  for (double v : pixels)
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      throw InvalidInput("VideoClip: pixel value out of [0,1]");
}

VideoClip normalize(const std::vector<FrameU8>& frames, const ClipSpec& spec,
                    const std::string& clip_id, int source_offset) {
  spec.validate();
  if (int(frames.size()) != spec.t_raw)
    throw InvalidInput("normalize: expected " + std::to_string(spec.t_raw) +
                       " frames, got " + std::to_string(frames.size()));
  VideoClip clip;
  clip.spec = spec;
  clip.clip_id = clip_id;
  clip.source_offset = source_offset;
  clip.pixels.resize(spec.pixel_count());
  std::int64_t out = 0;
  for (const FrameU8& f : frames) {
    if (f.height != spec.height || f.width != spec.width ||
        f.channels != spec.channels)
      throw InvalidInput("normalize: frame dims " + std::to_string(f.height) +
                         "x" + std::to_string(f.width) + " do not match spec");
    if (std::int64_t(f.data.size()) != spec.pixels_per_frame())
      throw InvalidInput("normalize: frame has " +
                         std::to_string(f.data.size()) + " bytes, expected " +
                         std::to_string(spec.pixels_per_frame()));
    for (std::uint8_t b : f.data) clip.pixels[out++] = b / 255.0;
  }
  return clip;
}

std::vector<FrameU8> denormalize(const VideoClip& clip) {
  clip.validate();
  std::vector<FrameU8> frames(clip.spec.t_raw);
  const std::int64_t per = clip.spec.pixels_per_frame();
  for (int t = 0; t < clip.spec.t_raw; ++t) {
    FrameU8& f = frames[t];
    f.height = clip.spec.height;
    f.width = clip.spec.width;
    f.channels = clip.spec.channels;
    f.data.resize(per);
    for (std::int64_t i = 0; i < per; ++i)
      f.data[i] =
          static_cast<std::uint8_t>(std::llround(clip.pixels[t * per + i] * 255.0));
  }
  return frames;
}

namespace {

FrameU8 resize_frame(const FrameU8& f, int height, int width) {
  if (f.height == height && f.width == width) return f;
  cv::Mat src(f.height, f.width, CV_8UC3,
              const_cast<std::uint8_t*>(f.data.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  FrameU8 out;
  out.height = height;
  out.width = width;
  out.channels = 3;
  out.data.assign(dst.data, dst.data + std::size_t(height) * width * 3);
  return out;
}

}  // namespace

VideoClip sample_clip(const std::vector<FrameU8>& source, const ClipSpec& spec,
                      std::uint64_t rng_seed, const std::string& clip_id) {
  spec.validate();
  const std::int64_t required = std::int64_t(spec.t_raw) * spec.stride;
  const std::int64_t available = std::int64_t(source.size());
  if (available < required)
    throw InvalidInput("insufficient frames: required " +
                       std::to_string(required) + ", available " +
                       std::to_string(available));
  Rng rng = make_rng(rng_seed, kTagData);
  const std::int64_t n_starts = available - required + 1;
  const int start = int(uniform_index(rng, std::uint64_t(n_starts)));

  std::vector<FrameU8> frames;
  frames.reserve(spec.t_raw);
  for (int i = 0; i < spec.t_raw; ++i) {
    const FrameU8& f = source[start + std::int64_t(i) * spec.stride];
    if (f.channels != spec.channels)
      throw InvalidInput("sample_clip: source frame has " +
                         std::to_string(f.channels) + " channels, spec wants " +
                         std::to_string(spec.channels));
    frames.push_back(resize_frame(f, spec.height, spec.width));
  }
  return normalize(frames, spec, clip_id, start);
}

PlantedClip make_planted_clip(const ClipSpec& spec, int temporal_patch,
                              const std::vector<int>& planted_slots,
                              std::uint64_t rng_seed,
                              const std::string& clip_id) {
  spec.validate();
  if (temporal_patch < 1 || spec.t_raw % temporal_patch != 0)
    throw InvalidInput("make_planted_clip: t_raw not divisible by temporal_patch");
  const int t_tok = spec.t_raw / temporal_patch;
  if (planted_slots.empty())
    throw InvalidInput("make_planted_clip: planted_slots must be nonempty");
  std::vector<int> slots = planted_slots;
  std::sort(slots.begin(), slots.end());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i] < 0 || slots[i] >= t_tok)
      throw InvalidInput("make_planted_clip: slot " + std::to_string(slots[i]) +
                         " out of range [0, " + std::to_string(t_tok) + ")");
    if (i > 0 && slots[i] == slots[i - 1])
      throw InvalidInput("make_planted_clip: duplicate slot " +
                         std::to_string(slots[i]));
  }

  Rng rng = make_rng(rng_seed, kTagData);
  // Per-clip pattern parameters: a low-frequency sinusoid background plus a
  // square of strong contrast moving along a linear trajectory.
  const double bg_amp = uniform_range(rng, 0.12, 0.2);
  const double bg_fx = uniform_range(rng, 0.5, 2.0);
  const double bg_fy = uniform_range(rng, 0.5, 2.0);
  const double bg_phase = uniform_range(rng, 0.0, 2.0 * M_PI);
  const double shape_val = (rng() & 1) ? 0.95 : 0.05;
  const double side = uniform_range(rng, 0.3, 0.45);  // fraction of min dim
  double cx = uniform_range(rng, 0.2, 0.8);
  double cy = uniform_range(rng, 0.2, 0.8);
  const double vx = uniform_range(rng, -0.08, 0.08);
  const double vy = uniform_range(rng, -0.08, 0.08);
  // Mild per-channel tint so channels are not identical.
  double tint[3];
  for (double& c : tint) c = uniform_range(rng, -0.06, 0.06);

  VideoClip clip;
  clip.spec = spec;
  clip.clip_id = clip_id;
  clip.pixels.assign(spec.pixel_count(), kConstantGray);

  const double half = 0.5 * side * std::min(spec.height, spec.width);
  for (int slot : slots) {
    for (int dt = 0; dt < temporal_patch; ++dt) {
      const int t = slot * temporal_patch + dt;
      // Shape position advances with the raw-frame index, wrapping in [0,1].
      const double px =
          (cx + vx * t - std::floor(cx + vx * t)) * (spec.width - 1);
      const double py =
          (cy + vy * t - std::floor(cy + vy * t)) * (spec.height - 1);
      for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
          const double bg =
              0.5 + bg_amp * std::sin(2.0 * M_PI *
                                          (bg_fx * x / spec.width +
                                           bg_fy * y / spec.height) +
                                      bg_phase);
          const bool inside =
              std::abs(x - px) <= half && std::abs(y - py) <= half;
          for (int c = 0; c < spec.channels; ++c) {
            double v = inside ? shape_val : bg + tint[c];
            v = std::clamp(v, 0.0, 1.0);
            // Snap to the 8-bit grid so the clip stores losslessly as bytes.
            clip.at(t, y, x, c) = std::llround(v * 255.0) / 255.0;
          }
        }
      }
    }
  }
  return {std::move(clip), std::move(slots)};
}

std::vector<PlantedClip> make_planted_dataset(const ClipSpec& spec,
                                              int temporal_patch, int n_clips,
                                              int k_planted,
                                              std::uint64_t rng_seed) {
  if (n_clips <= 0) throw InvalidInput("make_planted_dataset: n_clips <= 0");
  const int t_tok = spec.t_raw / temporal_patch;
  if (k_planted < 1 || k_planted > t_tok)
    throw InvalidInput("make_planted_dataset: k_planted out of range");
  Rng rng = make_rng(rng_seed, kTagData, 0xda7a);
  std::vector<PlantedClip> out;
  out.reserve(n_clips);
  for (int i = 0; i < n_clips; ++i) {
    // Uniform k-subset by partial Fisher-Yates.
    std::vector<int> pool(t_tok);
    for (int s = 0; s < t_tok; ++s) pool[s] = s;
    for (int j = 0; j < k_planted; ++j) {
      const int pick = j + int(uniform_index(rng, std::uint64_t(t_tok - j)));
      std::swap(pool[j], pool[pick]);
    }
    std::vector<int> slots(pool.begin(), pool.begin() + k_planted);
    char id[32];
    std::snprintf(id, sizeof id, "planted-%05d", i);
    out.push_back(
        make_planted_clip(spec, temporal_patch, slots, rng(), id));
  }
  return out;
}

// ---- on-disk formats -------------------------------------------------------

namespace {

bool numeric_stem_less(const fs::path& a, const fs::path& b) {
  auto key = [](const fs::path& p) -> long long {
    const std::string s = p.stem().string();
    std::string digits;
    for (char c : s)
      if (std::isdigit(static_cast<unsigned char>(c))) digits += c;
    return digits.empty() ? -1 : std::stoll(digits);
  };
  const long long ka = key(a), kb = key(b);
  if (ka != kb) return ka < kb;
  return a.filename().string() < b.filename().string();
}

}  // namespace

std::vector<FrameU8> load_frames_from_image_dir(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw ArtifactError("image dir not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string ext = e.path().extension().string();
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp")
      files.push_back(e.path());
  }
  if (files.empty())
    throw ArtifactError("no image files in " + dir.string());
  std::sort(files.begin(), files.end(), numeric_stem_less);

  std::vector<FrameU8> frames;
  frames.reserve(files.size());
  for (const fs::path& p : files) {
    cv::Mat bgr = cv::imread(p.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw ArtifactError("failed to decode " + p.string());
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    FrameU8 f;
    f.height = rgb.rows;
    f.width = rgb.cols;
    f.channels = 3;
    f.data.assign(rgb.data, rgb.data + std::size_t(rgb.rows) * rgb.cols * 3);
    frames.push_back(std::move(f));
  }
  return frames;
}

std::vector<FrameU8> load_frames_from_raw_dir(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw ArtifactError("manifest not found: " + manifest_path.string());
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw ArtifactError("bad manifest " + manifest_path.string() + ": " +
                        e.what());
  }
  const int frames_n = m.at("frames").get<int>();
  const int h = m.at("height").get<int>();
  const int w = m.at("width").get<int>();
  const int c = m.value("channels", 3);
  const std::string data_file = m.value("data_file", std::string("frames.raw"));

  std::ifstream raw(dir / data_file, std::ios::binary);
  if (!raw) throw ArtifactError("frame blob not found: " + (dir / data_file).string());
  const std::size_t per = std::size_t(h) * w * c;
  std::vector<FrameU8> frames(frames_n);
  for (int t = 0; t < frames_n; ++t) {
    FrameU8& f = frames[t];
    f.height = h;
    f.width = w;
    f.channels = c;
    f.data.resize(per);
    raw.read(reinterpret_cast<char*>(f.data.data()), std::streamsize(per));
    if (!raw)
      throw ArtifactError("frame blob truncated at frame " + std::to_string(t) +
                          " in " + (dir / data_file).string());
  }
  return frames;
}

void write_clip_raw(const VideoClip& clip, const fs::path& dir, double fps) {
  fs::create_directories(dir);
  const std::vector<FrameU8> frames = denormalize(clip);
  json m;
  m["format"] = "framers-clip";
  m["version"] = 1;
  m["clip_id"] = clip.clip_id;
  m["frames"] = clip.spec.t_raw;
  m["height"] = clip.spec.height;
  m["width"] = clip.spec.width;
  m["channels"] = clip.spec.channels;
  m["stride"] = clip.spec.stride;
  m["fps"] = fps;
  m["source_offset"] = clip.source_offset;
  m["data_file"] = "frames.raw";
  std::ofstream(dir / "manifest.json") << m.dump(2) << "\n";
  std::ofstream raw(dir / "frames.raw", std::ios::binary);
  for (const FrameU8& f : frames)
    raw.write(reinterpret_cast<const char*>(f.data.data()),
              std::streamsize(f.data.size()));
}

VideoClip read_clip_raw(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in)
    throw ArtifactError("manifest not found: " + (dir / "manifest.json").string());
  json m;
  in >> m;
  ClipSpec spec;
  spec.t_raw = m.at("frames").get<int>();
  spec.height = m.at("height").get<int>();
  spec.width = m.at("width").get<int>();
  spec.channels = m.value("channels", 3);
  spec.stride = m.value("stride", 2);
  VideoClip clip = normalize(load_frames_from_raw_dir(dir), spec,
                             m.value("clip_id", std::string()),
                             m.value("source_offset", 0));
  return clip;
}

void write_planted_dataset(const std::vector<PlantedClip>& clips,
                           const ClipSpec& spec, int temporal_patch,
                           const fs::path& dir) {
  fs::create_directories(dir / "clips");
  json ds;
  ds["format"] = "framers-dataset";
  ds["version"] = 1;
  ds["temporal_patch"] = temporal_patch;
  ds["spec"] = {{"t_raw", spec.t_raw},   {"stride", spec.stride},
                {"height", spec.height}, {"width", spec.width},
                {"channels", spec.channels}};
  json labels = json::object();
  json ids = json::array();
  for (const PlantedClip& pc : clips) {
    ids.push_back(pc.clip.clip_id);
    labels[pc.clip.clip_id] = pc.planted_slots;
    write_clip_raw(pc.clip, dir / "clips" / pc.clip.clip_id);
  }
  ds["clip_ids"] = ids;
  std::ofstream(dir / "dataset.json") << ds.dump(2) << "\n";
  std::ofstream(dir / "labels.json") << labels.dump(2) << "\n";
}

PlantedDataset read_planted_dataset(const fs::path& dir) {
  std::ifstream in(dir / "dataset.json");
  if (!in)
    throw ArtifactError("dataset.json not found in " + dir.string());
  json ds;
  in >> ds;
  PlantedDataset out;
  out.temporal_patch = ds.value("temporal_patch", 2);
  const json& sp = ds.at("spec");
  out.spec.t_raw = sp.at("t_raw").get<int>();
  out.spec.stride = sp.value("stride", 2);
  out.spec.height = sp.at("height").get<int>();
  out.spec.width = sp.at("width").get<int>();
  out.spec.channels = sp.value("channels", 3);

  json labels = json::object();
  if (std::ifstream lin(dir / "labels.json"); lin) lin >> labels;

  for (const auto& id : ds.at("clip_ids")) {
    PlantedClip pc;
    pc.clip = read_clip_raw(dir / "clips" / id.get<std::string>());
    if (labels.contains(id.get<std::string>()))
      pc.planted_slots = labels[id.get<std::string>()].get<std::vector<int>>();
    out.clips.push_back(std::move(pc));
  }
  return out;
}

}  // namespace framers
