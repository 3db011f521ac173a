// End-to-end acceptance gate. Each criterion prints one PASS/FAIL line;
// the exit code is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "framers/codec.hpp"
#include "framers/config.hpp"
#include "framers/labels.hpp"
#include "framers/model.hpp"
#include "framers/selector.hpp"
#include "framers/train.hpp"

using namespace framers;

namespace {

using Sf = float;

std::string fmt(const char* f, ...) {
  char buf[256];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

struct Shared {
  RunConfig toy;
  FrameMAE<Sf> model;
  std::string model_hash;
  bool model_ready = false;
  std::vector<PlantedClip> fresh;  // 50 held-out planted clips
  std::vector<MatX<Sf>> features;  // encoder features for 400 clips
  std::vector<int> labels;         // oracle best combo per clip
  SelectorConfig scfg;
  Selector<Sf> selector;
  bool selector_ready = false;
};

void need_model(const Shared& sh) {
  if (!sh.model_ready)
    throw std::runtime_error("pretrained model unavailable (criterion 4)");
}

// ---- 1: patchify round trip ------------------------------------------------

bool c1_round_trip(Shared&, std::string& detail) {
  int exact = 0, total = 0;
  for (const ModelConfig& cfg :
       {ModelConfig::paper_preset(), ModelConfig::toy_preset()}) {
    for (int i = 0; i < 50; ++i) {
      VideoClip clip;
      clip.spec = cfg.clip;
      clip.clip_id = "rt-" + std::to_string(i);
      clip.pixels.resize(std::size_t(cfg.clip.pixel_count()));
      Rng rng = make_rng(2024, kTagData, std::uint64_t(i));
      for (double& p : clip.pixels) p = uniform_unit(rng);
      const VideoClip back = unpatchify<double>(patchify<double>(clip, cfg), cfg);
      ++total;
      if (back.pixels == clip.pixels) ++exact;
    }
  }
  detail = fmt("%d/%d clips bit-exact", exact, total);
  return exact == total;
}

// ---- 2: mask invariants and combo bijection --------------------------------

bool c2_mask_invariants(Shared&, std::string& detail) {
  Rng rng = make_rng(7, kTagMask);
  for (int rep = 0; rep < 1000; ++rep) {
    const int t_tok = 2 + int(uniform_index(rng, 11));
    const int m = 1 + int(uniform_index(rng, std::uint64_t(t_tok) - 1));
    const int s_tok = 1 + int(uniform_index(rng, 6));
    const int d = 1 + int(uniform_index(rng, 8));
    MatX<double> tokens(Eigen::Index(t_tok) * s_tok, d);
    for (Eigen::Index j = 0; j < tokens.size(); ++j)
      tokens.data()[j] = uniform_unit(rng);
    const FrameMask mask = make_frame_mask(t_tok, m, rng());
    const ApplyMaskResult<double> res = apply_mask(tokens, t_tok, s_tok, mask);
    if (res.visible.rows() != Eigen::Index(t_tok - m) * s_tok) {
      detail = fmt("case %d: wrong visible row count", rep);
      return false;
    }
    for (std::size_t v = 0; v < res.bookkeeping.visible_rows.size(); ++v)
      if (res.visible.row(Eigen::Index(v)) !=
          tokens.row(res.bookkeeping.visible_rows[v])) {
        detail = fmt("case %d: visible row %zu altered", rep, v);
        return false;
      }
    std::vector<int> all = res.bookkeeping.visible_rows;
    all.insert(all.end(), res.bookkeeping.masked_rows.begin(),
               res.bookkeeping.masked_rows.end());
    std::sort(all.begin(), all.end());
    for (int r = 0; r < t_tok * s_tok; ++r)
      if (all[std::size_t(r)] != r) {
        detail = fmt("case %d: row indices do not partition", rep);
        return false;
      }
  }

  std::set<std::vector<int>> seen;
  for (std::uint64_t c = 0; c < 28; ++c) {
    const std::vector<int> slots = combo_to_slots({c, 2}, 8);
    if (slots.size() != 2 || slots[0] >= slots[1] || slots[1] >= 8 ||
        slots_to_combo(slots, 8).index != c) {
      detail = fmt("combo %llu broken at (8,2)", (unsigned long long)c);
      return false;
    }
    seen.insert(slots);
  }
  if (seen.size() != 28) {
    detail = "duplicate slot pairs at (8,2)";
    return false;
  }
  for (int rep = 0; rep < 200; ++rep) {
    const int t_tok = 2 + int(uniform_index(rng, 15));
    const int k = 1 + int(uniform_index(rng, std::uint64_t(t_tok) - 1));
    const std::uint64_t idx = uniform_index(rng, n_combos(t_tok, k));
    const std::vector<int> slots = combo_to_slots({idx, k}, t_tok);
    if (slots_to_combo(slots, t_tok).index != idx) {
      detail = fmt("bijection broken at (%d,%d) index %llu", t_tok, k,
                   (unsigned long long)idx);
      return false;
    }
  }
  detail = "1000 mask cases, 28 + 200 combo round trips";
  return true;
}

// ---- 3: gradient checks ----------------------------------------------------

struct GradStats {
  double max_abs = 0;
  double max_rel = 0;
  int checked = 0;
};

template <class LossFn>
void fd_check(std::vector<std::pair<MatX<double>*, MatX<double>*>>& params,
              const LossFn& loss_fn, GradStats& stats) {
  const double h = 1e-6;
  for (auto& [value, grad] : params) {
    const Eigen::Index stride =
        std::max<Eigen::Index>(1, value->size() / 12);
    for (Eigen::Index j = 0; j < value->size(); j += stride) {
      const double keep = value->data()[j];
      value->data()[j] = keep + h;
      const double up = loss_fn();
      value->data()[j] = keep - h;
      const double dn = loss_fn();
      value->data()[j] = keep;
      const double numeric = (up - dn) / (2 * h);
      const double analytic = grad->data()[j];
      const double abs_err = std::abs(analytic - numeric);
      const double rel_err =
          abs_err / std::max(std::abs(analytic) + std::abs(numeric), 1e-8);
      stats.max_abs = std::max(stats.max_abs, abs_err);
      if (abs_err > 1e-9)
        stats.max_rel = std::max(stats.max_rel, rel_err);
      ++stats.checked;
    }
  }
}

bool c3_gradients(Shared&, std::string& detail) {
  GradStats mae;
  {
    const ModelConfig cfg = ModelConfig::tiny_preset();
    FrameMAE<double> model = FrameMAE<double>::init(cfg, 5);
    const VideoClip clip =
        make_planted_clip(cfg.clip, cfg.temporal_patch, {1}, 9, "g0").clip;
    const FrameMask mask = make_frame_mask(cfg.t_tok(), 1, 3);
    FrameMAE<double>::Cache cache;
    model.zero_grad();
    model.forward_loss(clip, mask, LossScope::kMaskedOnly, cache);
    model.backward(mask, LossScope::kMaskedOnly, cache);
    std::vector<std::pair<MatX<double>*, MatX<double>*>> params;
    model.visit_trainable(
        [&](const std::string&, MatX<double>& v, MatX<double>& g, bool) {
          params.emplace_back(&v, &g);
        });
    FrameMAE<double>::Cache scratch;
    fd_check(params,
             [&] {
               return double(model.forward_loss(clip, mask,
                                                LossScope::kMaskedOnly,
                                                scratch));
             },
             mae);
  }

  GradStats head;
  {
    SelectorConfig scfg;
    scfg.in_dim = 8;
    scfg.t_tok = 4;
    scfg.k = 2;
    scfg.proj_dim = 8;
    scfg.blocks = 2;
    scfg.hidden = {12, 10};
    scfg.dropout = 0.0;
    scfg.classes = int(n_combos(4, 2));
    Selector<double> sel = Selector<double>::init(scfg, 21);
    Rng wrng = make_rng(21, kTagInit, 99);
    sel.out.init(scfg.classes, scfg.widths().back(), wrng, 0.05);
    MatX<double> feats(16, 8);
    Rng frng = make_rng(21, kTagData);
    for (Eigen::Index j = 0; j < feats.size(); ++j)
      feats.data()[j] = normal_unit(frng);
    const int gt = 3;
    Selector<double>::Cache cache;
    sel.zero_grad();
    VecX<double> dlogits;
    cross_entropy(sel.forward(feats, false, nullptr, &cache), gt, &dlogits);
    sel.backward(dlogits, cache);
    std::vector<std::pair<MatX<double>*, MatX<double>*>> params = {
        {&sel.proj.w, &sel.proj.gw}, {&sel.proj.b, &sel.proj.gb}};
    sel.visit_trainable(
        [&](const std::string&, MatX<double>& v, MatX<double>& g, bool) {
          params.emplace_back(&v, &g);
        });
    fd_check(params,
             [&] { return double(cross_entropy(sel.forward(feats), gt)); },
             head);
  }

  detail = fmt("FrameMAE rel %.2e (%d entries), selector rel %.2e (%d entries)",
               mae.max_rel, mae.checked, head.max_rel, head.checked);
  return mae.max_rel < 1e-3 && head.max_rel < 1e-3;
}

// ---- 4: toy overfit and determinism ----------------------------------------

bool c4_overfit(Shared& sh, std::string& detail) {
  sh.toy = preset_run_config("toy");
  sh.toy.pretrain.steps = 1000;
  sh.toy.pretrain.batch_size = 4;
  sh.toy.pretrain.log_every = 1;
  std::vector<PlantedClip> planted =
      make_planted_dataset(sh.toy.model.clip, sh.toy.model.temporal_patch,
                           sh.toy.data.clips, sh.toy.data.planted_slots, 11);
  std::vector<VideoClip> clips;
  for (PlantedClip& pc : planted) clips.push_back(std::move(pc.clip));

  TrainState<Sf> run1 = pretrain<Sf>(clips, sh.toy.model, sh.toy.pretrain, 11);
  TrainState<Sf> run2 = pretrain<Sf>(clips, sh.toy.model, sh.toy.pretrain, 11);
  if (run1.trace.size() != run2.trace.size() ||
      run1.trace.size() != std::size_t(sh.toy.pretrain.steps)) {
    detail = "trace lengths disagree";
    return false;
  }
  double max_gap = 0;
  for (std::size_t i = 0; i < run1.trace.size(); ++i)
    max_gap = std::max(max_gap,
                       std::abs(run1.trace[i].loss - run2.trace[i].loss));
  const double mse = eval_masked_mse(run1.model, clips,
                                     sh.toy.pretrain.masked_count, 11);
  sh.model = std::move(run1.model);
  sh.model_hash = framemae_hash(sh.model);
  sh.model_ready = true;
  detail = fmt("masked mse %.5f after %lld steps, max rerun gap %.2e",
               mse, (long long)sh.toy.pretrain.steps, max_gap);
  return mse < 0.01 && max_gap <= 1e-6;
}

// ---- 5: oracle ranking on planted clips ------------------------------------

bool c5_oracle(Shared& sh, std::string& detail) {
  need_model(sh);
  sh.fresh = make_planted_dataset(sh.toy.model.clip,
                                  sh.toy.model.temporal_patch, 50,
                                  sh.toy.data.planted_slots, 777);
  const int t_tok = sh.toy.model.t_tok();
  int hits = 0;
  double max_gap = 0;
  FrameMAE<Sf>::Cache cache;
  for (std::size_t i = 0; i < sh.fresh.size(); ++i) {
    const LabelRecord rec =
        rank_combos(sh.fresh[i].clip, sh.model, sh.model_hash, 2);
    if (std::uint64_t(rec.gt_label) ==
        slots_to_combo(sh.fresh[i].planted_slots, t_tok).index)
      ++hits;
    if (i < 10) {
      for (std::uint64_t c = 0; c < rec.losses.size(); ++c) {
        const double solo = double(sh.model.forward_loss(
            sh.fresh[i].clip, mask_from_combo({c, 2}, t_tok),
            LossScope::kMaskedOnly, cache));
        max_gap = std::max(max_gap, std::abs(solo - rec.losses[c]));
      }
    }
  }
  detail = fmt("planted combo chosen on %d/50, sweep vs solo gap %.2e",
               hits, max_gap);
  return hits >= 45 && max_gap <= 1e-10;
}

// ---- 6: selector learning signal -------------------------------------------

double binom_tail(int n, int s, double p) {
  if (s <= 0) return 1.0;
  if (s > n) return 0.0;
  double sum = 0;
  for (int i = s; i <= n; ++i) {
    const double log_c = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) -
                         std::lgamma(n - i + 1.0);
    sum += std::exp(log_c + i * std::log(p) + (n - i) * std::log1p(-p));
  }
  return sum;
}

bool c6_selector(Shared& sh, std::string& detail) {
  need_model(sh);
  const double pinned = 0.007817747792343344;
  if (std::abs(binom_tail(80, 8, 1.0 / 28) - pinned) > 1e-12 * pinned) {
    detail = "binomial tail self-check failed";
    return false;
  }

  std::vector<PlantedClip> planted =
      make_planted_dataset(sh.toy.model.clip, sh.toy.model.temporal_patch, 400,
                           sh.toy.data.planted_slots, 11);
  sh.features.clear();
  sh.labels.clear();
  for (const PlantedClip& pc : planted) {
    sh.labels.push_back(
        rank_combos(pc.clip, sh.model, sh.model_hash, 2).gt_label);
    sh.features.push_back(sh.model.extract_features(pc.clip).tokens);
  }

  sh.scfg = selector_for(sh.toy);
  Selector<Sf> zero = Selector<Sf>::init(sh.scfg, 999);
  double ce = 0;
  for (std::size_t i = 0; i < sh.features.size(); ++i)
    ce += double(cross_entropy(zero.forward(sh.features[i]), sh.labels[i]));
  ce /= double(sh.features.size());

  SelectorTrainResult<Sf> res = train_selector_on_features(
      sh.features, sh.labels, sh.scfg, sh.toy.selector_train, 11);
  const int n_val = int(res.val_indices.size());
  const int successes = int(std::llround(res.best_top1 * n_val));
  const double pval = binom_tail(n_val, successes, 1.0 / 28);
  sh.selector = res.best;
  sh.selector_ready = true;
  detail = fmt("val top-1 %.1f%% (%d/%d, p=%.2e), zero-init ce %.4f",
               100.0 * res.best_top1, successes, n_val, pval, ce);
  return res.best_top1 >= 0.108 && pval < 0.01 &&
         std::abs(ce - std::log(28.0)) <= 0.01;
}

// ---- 7: codec exactness and policy ordering --------------------------------

bool c7_codec(Shared& sh, std::string& detail) {
  need_model(sh);
  if (!sh.selector_ready)
    throw std::runtime_error("trained selector unavailable (criterion 6)");

  const RunConfig paper = preset_run_config("paper");
  const double paper_rf =
      double(paper.codec.keep) / double(paper.model.t_tok());
  if (paper_rf != 0.25) {
    detail = fmt("default retained fraction %.4f", paper_rf);
    return false;
  }

  const int t_tok = sh.toy.model.t_tok();
  const int tp = sh.toy.model.temporal_patch;
  for (std::size_t i = 0; i < 5; ++i) {
    const VideoClip& src = sh.fresh[i].clip;
    const Policy policy = i == 0 ? Policy::kUniform : Policy::kOracle;
    const std::vector<std::uint8_t> blob =
        compress_clip(sh.model, &sh.selector, src, policy, 2, 11, i);
    FrrsMeta meta;
    const VideoClip recon = decompress_clip(blob, sh.model, &meta);
    for (int slot : meta.keep_slots)
      for (int t = slot * tp; t < (slot + 1) * tp; ++t)
        for (int y = 0; y < src.spec.height; ++y)
          for (int x = 0; x < src.spec.width; ++x)
            for (int c = 0; c < src.spec.channels; ++c)
              if (recon.at(t, y, x, c) != src.at(t, y, x, c)) {
                detail = fmt("kept frame %d of clip %zu altered", t, i);
                return false;
              }
  }

  std::vector<VideoClip> clips;
  for (const PlantedClip& pc : sh.fresh) clips.push_back(pc.clip);
  const std::vector<Policy> others = {Policy::kUniform, Policy::kRandom,
                                      Policy::kLearned};
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const std::vector<int> best = choose_keep_slots(
        Policy::kOracle, sh.model, &sh.selector, clips[i], 2, 11, i);
    const double oracle_mse =
        clip_metrics(clips[i], sh.model.reconstruct_clip(clips[i], best), 2,
                     t_tok)
            .mse;
    for (Policy policy : others) {
      const std::vector<int> keep =
          choose_keep_slots(policy, sh.model, &sh.selector, clips[i], 2, 11, i);
      const double mse =
          clip_metrics(clips[i], sh.model.reconstruct_clip(clips[i], keep), 2,
                       t_tok)
              .mse;
      if (oracle_mse > mse + 1e-12) {
        detail = fmt("clip %zu: oracle %.3e beaten by %s %.3e", i, oracle_mse,
                     policy_name(policy).c_str(), mse);
        return false;
      }
    }
  }

  const std::vector<PolicyReport> rows = compare_policies(
      sh.model, &sh.selector, clips,
      {Policy::kUniform, Policy::kRandom, Policy::kOracle, Policy::kLearned},
      2, 11);
  double oracle_mean = 0, learned_mean = 0, random_mean = 0;
  for (const PolicyReport& r : rows) {
    if (r.retained_fraction != 0.25) {
      detail = fmt("%s retained fraction %.4f", r.policy.c_str(),
                   r.retained_fraction);
      return false;
    }
    if (r.policy == "oracle") oracle_mean = r.mean_mse;
    if (r.policy == "learned") learned_mean = r.mean_mse;
    if (r.policy == "random") random_mean = r.mean_mse;
  }
  detail = fmt("mean mse oracle %.3e <= learned %.3e <= random %.3e",
               oracle_mean, learned_mean, random_mean);
  return oracle_mean <= learned_mean && learned_mean <= random_mean;
}

// ---- 8: ablation harness ---------------------------------------------------

bool c8_ablation(Shared& sh, std::string& detail) {
  if (sh.features.empty())
    throw std::runtime_error("selector features unavailable (criterion 6)");
  const std::vector<AblationPoint> grid = {{3, 0.1}, {3, 0.0}, {4, 0.0}};
  const std::vector<AblationRow> rows =
      ablation_sweep(sh.features, sh.labels, sh.scfg, sh.toy.selector_train,
                     grid, {11});
  if (rows.size() != grid.size()) {
    detail = fmt("%zu rows for %zu grid points", rows.size(), grid.size());
    return false;
  }
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (rows[i].blocks != grid[i].blocks ||
        rows[i].dropout != grid[i].dropout || rows[i].top1 < 0 ||
        rows[i].top1 > 1 || rows[i].top5 < rows[i].top1) {
      detail = fmt("row %zu malformed", i);
      return false;
    }
  const std::string table = ablation_table_text(rows);
  for (const char* want : {"blocks", "dropout", "top-1", "top-5", "best-epoch",
                           "reference (full scale)", "27.10", "50.52"})
    if (table.find(want) == std::string::npos) {
      detail = fmt("table missing '%s'", want);
      return false;
    }
  detail = fmt("3 sweep points, top-1 %.0f%%/%.0f%%/%.0f%%",
               100 * rows[0].top1, 100 * rows[1].top1, 100 * rows[2].top1);
  return true;
}

}  // namespace

int main() {
  Shared sh;
  struct Entry {
    int id;
    const char* name;
    double budget_s;  // 0 = no bound
    std::function<bool(Shared&, std::string&)> fn;
  };
  const std::vector<Entry> entries = {
      {1, "patchify round trip", 10, c1_round_trip},
      {2, "mask invariants and combo bijection", 10, c2_mask_invariants},
      {3, "gradient checks", 120, c3_gradients},
      {4, "toy overfit and determinism", 600, c4_overfit},
      {5, "oracle ranking on planted clips", 0, c5_oracle},
      {6, "selector learning signal", 900, c6_selector},
      {7, "codec exactness and policy ordering", 0, c7_codec},
      {8, "ablation harness", 0, c8_ablation},
  };

  int failures = 0;
  for (const Entry& e : entries) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
      ok = e.fn(sh, detail);
    } catch (const std::exception& ex) {
      detail = ex.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (ok && e.budget_s > 0 && secs >= e.budget_s) {
      ok = false;
      detail += fmt("; over %.0f s budget", e.budget_s);
    }
    std::printf("%s criterion %d: %s [%.1f s]%s%s\n", ok ? "PASS" : "FAIL",
                e.id, e.name, secs, detail.empty() ? "" : "; ",
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  std::printf("%d of %zu criteria passed\n", int(entries.size()) - failures,
              entries.size());
  return failures;
}
