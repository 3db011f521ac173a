#include "framers/codec.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "framers/rng.hpp"

namespace framers {

namespace fs = std::filesystem;
using nlohmann::json;

Policy policy_from_string(const std::string& name) {
  if (name == "uniform") return Policy::kUniform;
  if (name == "random") return Policy::kRandom;
  if (name == "oracle") return Policy::kOracle;
  if (name == "learned") return Policy::kLearned;
  throw InvalidInput("unknown policy '" + name +
                     "' (expected uniform|random|oracle|learned)");
}

std::string policy_name(Policy policy) {
  switch (policy) {
    case Policy::kUniform: return "uniform";
    case Policy::kRandom: return "random";
    case Policy::kOracle: return "oracle";
    case Policy::kLearned: return "learned";
  }
  throw InvalidInput("unknown policy");
}

std::vector<int> uniform_keep_slots(int t_tok, int k) {
  if (k < 1 || k > t_tok) throw InvalidInput("uniform_keep_slots: bad k");
  std::vector<int> slots(k);
  for (int i = 0; i < k; ++i) slots[i] = i * t_tok / k;
  return slots;
}

std::vector<int> random_keep_slots(int t_tok, int k, std::uint64_t seed,
                                   std::uint64_t index) {
  if (k < 1 || k > t_tok) throw InvalidInput("random_keep_slots: bad k");
  Rng rng = make_rng(seed, kTagPolicy, index);
  std::vector<int> pool(t_tok);
  for (int i = 0; i < t_tok; ++i) pool[i] = i;
  for (int i = 0; i < k; ++i)
    std::swap(pool[i], pool[i + int(uniform_index(rng, t_tok - i))]);
  std::vector<int> slots(pool.begin(), pool.begin() + k);
  std::sort(slots.begin(), slots.end());
  return slots;
}

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(std::uint8_t(v & 0xff));
  out.push_back(std::uint8_t(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t((v >> (8 * i)) & 0xff));
}

std::uint16_t get_u16(const std::vector<std::uint8_t>& b, std::size_t at) {
  return std::uint16_t(b[at] | (std::uint16_t(b[at + 1]) << 8));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[at + i]) << (8 * i);
  return v;
}

json meta_to_json(const FrrsMeta& m) {
  return json{{"format_version", m.format_version},
              {"clip_id", m.clip_id},
              {"source_offset", m.source_offset},
              {"t_raw", m.spec.t_raw},
              {"stride", m.spec.stride},
              {"height", m.spec.height},
              {"width", m.spec.width},
              {"channels", m.spec.channels},
              {"temporal_patch", m.temporal_patch},
              {"keep_slots", m.keep_slots},
              {"policy", m.policy},
              {"model_hash", m.model_hash}};
}

FrrsMeta meta_from_json(const json& j) {
  FrrsMeta m;
  m.format_version = j.at("format_version").get<int>();
  m.clip_id = j.at("clip_id").get<std::string>();
  m.source_offset = j.at("source_offset").get<std::int64_t>();
  m.spec.t_raw = j.at("t_raw").get<int>();
  m.spec.stride = j.at("stride").get<int>();
  m.spec.height = j.at("height").get<int>();
  m.spec.width = j.at("width").get<int>();
  m.spec.channels = j.at("channels").get<int>();
  m.temporal_patch = j.at("temporal_patch").get<int>();
  m.keep_slots = j.at("keep_slots").get<std::vector<int>>();
  m.policy = j.at("policy").get<std::string>();
  m.model_hash = j.at("model_hash").get<std::string>();
  return m;
}

}  // namespace

std::vector<std::uint8_t> encode_frrs(const VideoClip& clip,
                                      const std::vector<int>& keep_slots,
                                      int temporal_patch,
                                      const std::string& policy,
                                      const std::string& model_hash) {
  clip.spec.validate();
  if (temporal_patch < 1 || clip.spec.t_raw % temporal_patch != 0)
    throw InvalidInput("encode_frrs: bad temporal_patch");
  const int t_tok = clip.spec.t_raw / temporal_patch;
  std::vector<int> keep = keep_slots;
  std::sort(keep.begin(), keep.end());
  if (keep.empty() || std::adjacent_find(keep.begin(), keep.end()) != keep.end())
    throw InvalidInput("encode_frrs: keep slots must be distinct");
  for (int s : keep)
    if (s < 0 || s >= t_tok)
      throw InvalidInput("encode_frrs: keep slot " + std::to_string(s) +
                         " out of range [0, " + std::to_string(t_tok) + ")");

  FrrsMeta meta;
  meta.clip_id = clip.clip_id;
  meta.source_offset = clip.source_offset;
  meta.spec = clip.spec;
  meta.temporal_patch = temporal_patch;
  meta.keep_slots = keep;
  meta.policy = policy;
  meta.model_hash = model_hash;
  const std::string mjson = meta_to_json(meta).dump();

  std::vector<std::uint8_t> blob;
  const std::size_t frame_bytes = std::size_t(clip.spec.height) *
                                  clip.spec.width * clip.spec.channels;
  blob.reserve(10 + mjson.size() +
               keep.size() * std::size_t(temporal_patch) * frame_bytes);
  blob.insert(blob.end(), {'F', 'R', 'R', 'S'});
  put_u16(blob, kFrrsVersion);
  put_u32(blob, std::uint32_t(mjson.size()));
  blob.insert(blob.end(), mjson.begin(), mjson.end());
  const std::vector<FrameU8> frames = denormalize(clip);
  for (int s : keep)
    for (int dt = 0; dt < temporal_patch; ++dt) {
      const FrameU8& frame = frames[std::size_t(s) * temporal_patch + dt];
      blob.insert(blob.end(), frame.data.begin(), frame.data.end());
    }
  return blob;
}

FrrsMeta read_frrs_meta(const std::vector<std::uint8_t>& blob) {
  if (blob.size() < 4 || std::memcmp(blob.data(), "FRRS", 4) != 0)
    throw ArtifactError("bad magic at offset 0: not an FRRS blob");
  if (blob.size() < 6)
    throw ArtifactError("truncated header at offset 4: missing version");
  const std::uint16_t version = get_u16(blob, 4);
  if (version != kFrrsVersion)
    throw ArtifactError("unsupported FRRS version " + std::to_string(version) +
                        " at offset 4");
  if (blob.size() < 10)
    throw ArtifactError("truncated header at offset 6: missing metadata length");
  const std::uint32_t mlen = get_u32(blob, 6);
  if (blob.size() < 10 + std::size_t(mlen))
    throw ArtifactError("truncated metadata at offset 10: need " +
                        std::to_string(mlen) + " bytes, have " +
                        std::to_string(blob.size() - 10));
  json j;
  try {
    j = json::parse(blob.begin() + 10, blob.begin() + 10 + mlen);
  } catch (const json::exception& e) {
    throw ArtifactError(std::string("bad FRRS metadata at offset 10: ") +
                        e.what());
  }
  FrrsMeta meta;
  try {
    meta = meta_from_json(j);
  } catch (const json::exception& e) {
    throw ArtifactError(std::string("incomplete FRRS metadata: ") + e.what());
  }
  meta.spec.validate();
  return meta;
}

VideoClip decode_frrs_frames(const std::vector<std::uint8_t>& blob,
                             FrrsMeta* meta_out) {
  FrrsMeta meta = read_frrs_meta(blob);
  const std::size_t mlen = get_u32(blob, 6);
  const std::size_t payload_at = 10 + mlen;
  const std::size_t frame_bytes = std::size_t(meta.spec.height) *
                                  meta.spec.width * meta.spec.channels;
  const std::size_t need =
      meta.keep_slots.size() * std::size_t(meta.temporal_patch) * frame_bytes;
  if (blob.size() != payload_at + need)
    throw ArtifactError("payload at offset " + std::to_string(payload_at) +
                        ": need " + std::to_string(need) + " bytes, have " +
                        std::to_string(blob.size() - payload_at));

  VideoClip clip;
  clip.spec = meta.spec;
  clip.clip_id = meta.clip_id;
  clip.source_offset = meta.source_offset;
  clip.pixels.assign(std::size_t(meta.spec.t_raw) * frame_bytes, 0.0);
  std::size_t at = payload_at;
  for (int s : meta.keep_slots)
    for (int dt = 0; dt < meta.temporal_patch; ++dt) {
      const int t = s * meta.temporal_patch + dt;
      double* dst = clip.pixels.data() + std::size_t(t) * frame_bytes;
      for (std::size_t i = 0; i < frame_bytes; ++i)
        dst[i] = double(blob[at + i]) / 255.0;
      at += frame_bytes;
    }
  if (meta_out) *meta_out = meta;
  return clip;
}

void write_frrs_file(const fs::path& path,
                     const std::vector<std::uint8_t>& blob) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArtifactError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(blob.data()),
            std::streamsize(blob.size()));
}

std::vector<std::uint8_t> read_frrs_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw ArtifactError("cannot read " + path.string());
  const std::streamsize n = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> blob(static_cast<std::size_t>(n));
  in.read(reinterpret_cast<char*>(blob.data()), n);
  if (!in) throw ArtifactError("short read from " + path.string());
  return blob;
}

double psnr_from_mse(double mse) {
  if (mse < 0) throw InvalidInput("psnr_from_mse: negative mse");
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

Metrics clip_metrics(const VideoClip& original, const VideoClip& recon,
                     int kept_slots, int t_tok) {
  if (original.pixels.size() != recon.pixels.size())
    throw InvalidInput("clip_metrics: size mismatch");
  if (kept_slots < 0 || t_tok < 1 || kept_slots > t_tok)
    throw InvalidInput("clip_metrics: bad slot counts");
  double sum = 0;
  for (std::size_t i = 0; i < original.pixels.size(); ++i) {
    const double d = original.pixels[i] - recon.pixels[i];
    sum += d * d;
  }
  Metrics m;
  m.mse = sum / double(original.pixels.size());
  m.psnr = psnr_from_mse(m.mse);
  m.retained_fraction = double(kept_slots) / double(t_tok);
  return m;
}

json json_number_or_inf(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : "-inf";
}

void write_policy_report_csv(const std::vector<PolicyReport>& rows,
                             const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ArtifactError("cannot write " + path.string());
  out << "policy,clips,retained_fraction,mean_mse,mean_psnr\n";
  for (const PolicyReport& r : rows) {
    out << r.policy << "," << r.clips << "," << r.retained_fraction << ","
        << r.mean_mse << ",";
    if (std::isfinite(r.mean_psnr))
      out << r.mean_psnr;
    else
      out << (r.mean_psnr > 0 ? "inf" : "-inf");
    out << "\n";
  }
}

void write_policy_report_json(const std::vector<PolicyReport>& rows,
                              const fs::path& path) {
  json arr = json::array();
  for (const PolicyReport& r : rows)
    arr.push_back({{"policy", r.policy},
                   {"clips", r.clips},
                   {"retained_fraction", r.retained_fraction},
                   {"mean_mse", r.mean_mse},
                   {"mean_psnr", json_number_or_inf(r.mean_psnr)}});
  std::ofstream out(path);
  if (!out) throw ArtifactError("cannot write " + path.string());
  out << arr.dump(2) << "\n";
}

}  // namespace framers
