#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "framers/clip.hpp"
#include "framers/labels.hpp"
#include "framers/mask.hpp"
#include "framers/model.hpp"
#include "framers/selector.hpp"

namespace framers {

// FRRS container: "FRRS" magic, u16 LE version, u32 LE metadata length,
// JSON metadata, then the kept frames as raw 8-bit RGB in ascending slot
// order (frames within a slot in time order).

inline constexpr std::uint16_t kFrrsVersion = 1;

enum class Policy { kUniform, kRandom, kOracle, kLearned };

Policy policy_from_string(const std::string& name);
std::string policy_name(Policy policy);

/// Evenly spaced slots: for k of t_tok, slot i*t_tok/k for each i.
std::vector<int> uniform_keep_slots(int t_tok, int k);
/// Seeded k-subset; `index` separates streams per clip.
std::vector<int> random_keep_slots(int t_tok, int k, std::uint64_t seed,
                                   std::uint64_t index);

struct FrrsMeta {
  int format_version = kFrrsVersion;
  std::string clip_id;
  std::int64_t source_offset = 0;
  ClipSpec spec;
  int temporal_patch = 2;
  std::vector<int> keep_slots;
  std::string policy;
  std::string model_hash;
};

std::vector<std::uint8_t> encode_frrs(const VideoClip& clip,
                                      const std::vector<int>& keep_slots,
                                      int temporal_patch,
                                      const std::string& policy,
                                      const std::string& model_hash);

/// Parses header and metadata; errors name the failing byte offset.
FrrsMeta read_frrs_meta(const std::vector<std::uint8_t>& blob);

/// Kept frames only, other frames zero. Returned clip carries the
/// original spec/id/offset from the metadata.
VideoClip decode_frrs_frames(const std::vector<std::uint8_t>& blob,
                             FrrsMeta* meta_out = nullptr);

void write_frrs_file(const std::filesystem::path& path,
                     const std::vector<std::uint8_t>& blob);
std::vector<std::uint8_t> read_frrs_file(const std::filesystem::path& path);

struct Metrics {
  double mse = 0;
  double psnr = 0;
  double retained_fraction = 0;
};

/// 10*log10(1/mse) for unit-range pixels; infinity when mse is zero.
double psnr_from_mse(double mse);
Metrics clip_metrics(const VideoClip& original, const VideoClip& recon,
                     int kept_slots, int t_tok);

/// "inf"/"-inf" strings for non-finite values, numbers otherwise.
nlohmann::json json_number_or_inf(double v);

template <class S>
std::vector<int> choose_keep_slots(Policy policy, FrameMAE<S>& model,
                                   const Selector<S>* selector,
                                   const VideoClip& clip, int k,
                                   std::uint64_t seed, std::uint64_t index) {
  const int t_tok = model.cfg.t_tok();
  switch (policy) {
    case Policy::kUniform:
      return uniform_keep_slots(t_tok, k);
    case Policy::kRandom:
      return random_keep_slots(t_tok, k, seed, index);
    case Policy::kOracle: {
      LabelRecord rec = rank_combos(clip, model, "", k);

      return combo_to_slots(ComboIndex{std::uint64_t(rec.gt_label), k}, t_tok);
    }
    case Policy::kLearned: {
      if (!selector)
        throw InvalidInput("learned policy needs a selector");
      TokenGrid<S> grid = model.extract_features(clip);
      VecX<S> logits = selector->forward(grid.tokens);
      int best = 0;
      for (int c = 1; c < int(logits.size()); ++c)
        if (logits(c) > logits(best)) best = c;
      return combo_to_slots(ComboIndex{std::uint64_t(best), k}, t_tok);
    }
  }
  throw InvalidInput("unknown policy");
}

template <class S>
std::vector<std::uint8_t> compress_clip(FrameMAE<S>& model,
                                        const Selector<S>* selector,
                                        const VideoClip& clip, Policy policy,
                                        int k, std::uint64_t seed,
                                        std::uint64_t index = 0) {
  std::vector<int> keep =
      choose_keep_slots(policy, model, selector, clip, k, seed, index);
  return encode_frrs(clip, keep, model.cfg.temporal_patch,
                     policy_name(policy), framemae_hash(model));
}

/// Rebuilds the full clip: kept frames verbatim, masked slots predicted.
/// Refuses when the blob was written against a different model.
template <class S>
VideoClip decompress_clip(const std::vector<std::uint8_t>& blob,
                          FrameMAE<S>& model, FrrsMeta* meta_out = nullptr) {
  FrrsMeta meta;
  VideoClip partial = decode_frrs_frames(blob, &meta);
  const std::string own_hash = framemae_hash(model);
  if (meta.model_hash != own_hash)
    throw ArtifactError("model hash mismatch: blob was written with " +
                        meta.model_hash + ", loaded model is " + own_hash);
  if (meta.spec.t_raw != model.cfg.clip.t_raw ||
      meta.spec.height != model.cfg.clip.height ||
      meta.spec.width != model.cfg.clip.width ||
      meta.spec.channels != model.cfg.clip.channels ||
      meta.temporal_patch != model.cfg.temporal_patch)
    throw ArtifactError("blob geometry does not match the model config");
  if (meta_out) *meta_out = meta;
  return model.reconstruct_clip(partial, meta.keep_slots);
}

struct PolicyReport {
  std::string policy;
  int clips = 0;
  double retained_fraction = 0;
  double mean_mse = 0;
  double mean_psnr = 0;
};

void write_policy_report_csv(const std::vector<PolicyReport>& rows,
                             const std::filesystem::path& path);
void write_policy_report_json(const std::vector<PolicyReport>& rows,
                              const std::filesystem::path& path);

/// Compress+decompress every clip under each policy; rows come back
/// sorted by mean MSE, best first.
template <class S>
std::vector<PolicyReport> compare_policies(
    FrameMAE<S>& model, const Selector<S>* selector,
    const std::vector<VideoClip>& clips, const std::vector<Policy>& policies,
    int k, std::uint64_t seed) {
  if (clips.empty()) throw InvalidInput("compare_policies: no clips");
  std::vector<PolicyReport> rows;
  for (Policy policy : policies) {
    PolicyReport row;
    row.policy = policy_name(policy);
    row.clips = int(clips.size());
    for (std::size_t i = 0; i < clips.size(); ++i) {
      std::vector<int> keep =
          choose_keep_slots(policy, model, selector, clips[i], k, seed, i);
      VideoClip recon = model.reconstruct_clip(clips[i], keep);
      Metrics m =
          clip_metrics(clips[i], recon, int(keep.size()), model.cfg.t_tok());
      row.retained_fraction = m.retained_fraction;
      row.mean_mse += m.mse;
      row.mean_psnr += m.psnr;
    }
    row.mean_mse /= double(clips.size());
    row.mean_psnr /= double(clips.size());
    rows.push_back(row);
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const PolicyReport& a, const PolicyReport& b) {
                     return a.mean_mse < b.mean_mse;
                   });
  return rows;
}

}  // namespace framers
