#pragma once

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "framers/mask.hpp"
#include "framers/model.hpp"

namespace framers {

/// Per-clip ranking of every keep-k slot combination by reconstruction loss.
struct LabelRecord {
  std::string clip_id;
  std::vector<double> losses;   // indexed by ComboIndex
  std::vector<int> ranking;     // permutation, ascending loss
  int gt_label = 0;             // ranking[0]
  std::string model_hash;

  void validate() const;
};

/// Evaluates every C(t_tok, k) keep combination through the model with a
/// masked-only loss. No sampling anywhere; ties rank lower index first.
template <class S>
LabelRecord rank_combos(const VideoClip& clip, const FrameMAE<S>& model,
                        const std::string& model_hash, int k = 2) {
  const int t_tok = model.cfg.t_tok();
  const std::uint64_t n = n_combos(t_tok, k);
  LabelRecord rec;
  rec.clip_id = clip.clip_id;
  rec.model_hash = model_hash;
  rec.losses.resize(n);
  typename FrameMAE<S>::Cache cache;
  for (std::uint64_t c = 0; c < n; ++c) {
    const FrameMask mask = mask_from_combo({c, k}, t_tok);
    const double loss =
        double(model.forward_loss(clip, mask, LossScope::kMaskedOnly, cache));
    if (!std::isfinite(loss))
      throw ArtifactError("rank_combos: non-finite loss for combo " +
                          std::to_string(c) + " on clip '" + clip.clip_id +
                          "'");
    rec.losses[c] = loss;
  }
  rec.ranking.resize(n);
  std::iota(rec.ranking.begin(), rec.ranking.end(), 0);
  std::stable_sort(rec.ranking.begin(), rec.ranking.end(),
                   [&](int a, int b) { return rec.losses[a] < rec.losses[b]; });
  rec.gt_label = rec.ranking[0];
  return rec;
}

struct LabelDatasetStats {
  int evaluated = 0;
  int skipped = 0;
  int total = 0;
};

/// Writes labels.jsonl (one record per line, sorted by clip_id) plus
/// labels_manifest.json next to it. Resumable: already-labeled ids are
/// skipped; resuming against a different model hash is an error.
LabelDatasetStats write_label_dataset(
    const std::vector<LabelRecord>& fresh,
    const std::filesystem::path& out_dir, const std::string& model_hash,
    int classes);

std::vector<LabelRecord> read_label_dataset(
    const std::filesystem::path& out_dir, std::string* model_hash_out = nullptr);

/// Returns ids already present in an existing label file (empty if none).
std::vector<std::string> existing_label_ids(
    const std::filesystem::path& out_dir, const std::string& model_hash);

/// Full oracle run over a corpus; resumes if out_dir already holds labels.
template <class S>
LabelDatasetStats build_label_dataset(const std::vector<VideoClip>& clips,
                                      const FrameMAE<S>& model,
                                      const std::string& model_hash,
                                      const std::filesystem::path& out_dir,
                                      int k = 2) {
  const std::vector<std::string> have = existing_label_ids(out_dir, model_hash);
  std::vector<LabelRecord> fresh;
  LabelDatasetStats stats;
  for (const VideoClip& clip : clips) {
    if (std::find(have.begin(), have.end(), clip.clip_id) != have.end()) {
      ++stats.skipped;
      continue;
    }
    fresh.push_back(rank_combos(clip, model, model_hash, k));
    ++stats.evaluated;
  }
  const int classes = int(n_combos(model.cfg.t_tok(), k));
  LabelDatasetStats written =
      write_label_dataset(fresh, out_dir, model_hash, classes);
  stats.total = written.total;
  return stats;
}

}  // namespace framers
