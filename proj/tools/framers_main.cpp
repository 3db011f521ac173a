#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "framers/checkpoint.hpp"
#include "framers/codec.hpp"
#include "framers/config.hpp"
#include "framers/labels.hpp"
#include "framers/selector.hpp"
#include "framers/train.hpp"
#include "framers/viz.hpp"

namespace fs = std::filesystem;
using namespace framers;

// float runtime throughout; checkpoints stay float64 on disk
using Sf = float;

namespace {

struct CommonArgs {
  std::optional<std::string> config_file;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_file, "YAML run config");
  cmd->add_option("--preset", args.preset, "Preset name (toy|paper)");
  cmd->add_option("--seed", args.seed, "Run seed");
  cmd->add_option("--out-dir", args.out_dir, "Output directory");
  cmd->add_option("--set", args.sets,
                  "Override a config key, e.g. --set pretrain.steps=100");
}

RunConfig resolve_config(const CommonArgs& args) {
  std::optional<fs::path> file;
  if (args.config_file) file = fs::path(*args.config_file);
  std::vector<std::string> overrides = args.sets;
  if (args.seed) overrides.push_back("seed=" + std::to_string(*args.seed));
  if (args.out_dir) overrides.push_back("out_dir=" + *args.out_dir);
  return load_run_config(file, args.preset, overrides);
}

std::vector<VideoClip> load_clips(const RunConfig& run, int count) {
  std::vector<VideoClip> clips;
  if (!run.data.dir.empty()) {
    PlantedDataset ds = read_planted_dataset(run.data.dir);
    for (PlantedClip& pc : ds.clips) clips.push_back(std::move(pc.clip));
  } else {
    std::vector<PlantedClip> ds =
        make_planted_dataset(run.model.clip, run.model.temporal_patch, count,
                             run.data.planted_slots, run.seed);
    for (PlantedClip& pc : ds) clips.push_back(std::move(pc.clip));
  }
  if (int(clips.size()) > count) clips.resize(count);
  return clips;
}

fs::path default_checkpoint(const RunConfig& run) {
  return fs::path(run.out_dir) / "checkpoint";
}

int cmd_make_data(const CommonArgs& args) {
  RunConfig run = resolve_config(args);
  const fs::path dir = fs::path(run.out_dir) / "data";
  std::vector<PlantedClip> ds =
      make_planted_dataset(run.model.clip, run.model.temporal_patch,
                           run.data.clips, run.data.planted_slots, run.seed);
  write_planted_dataset(ds, run.model.clip, run.model.temporal_patch, dir);
  write_effective_config(run.out_dir, run, {});
  std::cout << "wrote " << ds.size() << " planted clips to " << dir.string()
            << "\n";
  return 0;
}

int cmd_pretrain(const CommonArgs& args) {
  RunConfig run = resolve_config(args);
  std::vector<VideoClip> clips = load_clips(run, run.data.clips);
  const fs::path out(run.out_dir);
  fs::create_directories(out);
  TrainState<Sf> st = pretrain<Sf>(
      clips, run.model, run.pretrain, run.seed,
      [&](std::int64_t step, FrameMAE<Sf>& m) {
        save_framemae(out / ("checkpoint-step" + std::to_string(step)), m,
                      step, run.seed);
      });
  save_framemae(default_checkpoint(run), st.model, st.step, run.seed);
  write_trace_csv(st.trace, out / "pretrain_trace.csv");
  write_effective_config(out, run, {});
  std::cout << "pretrained " << st.step << " steps, final loss "
            << st.trace.back().loss << "\n"
            << "checkpoint " << default_checkpoint(run).string() << " (hash "
            << framemae_hash(st.model) << ")\n";
  return 0;
}

int cmd_gen_labels(const CommonArgs& args, const std::string& ckpt_flag) {
  RunConfig run = resolve_config(args);
  const fs::path ckpt =
      ckpt_flag.empty() ? default_checkpoint(run) : fs::path(ckpt_flag);
  CheckpointInfo info;
  FrameMAE<Sf> model = load_framemae<Sf>(ckpt, &info);
  std::vector<VideoClip> clips = load_clips(run, run.data.clips);
  const fs::path labels_dir = fs::path(run.out_dir) / "labels";
  LabelDatasetStats stats = build_label_dataset(clips, model, info.model_hash,
                                                labels_dir, run.codec.keep);
  write_effective_config(run.out_dir, run,
                         {{ckpt.string(), info.model_hash}});
  std::cout << "labels: evaluated " << stats.evaluated << ", skipped "
            << stats.skipped << ", total " << stats.total << " -> "
            << labels_dir.string() << "\n";
  return 0;
}

struct FeatureSet {
  std::vector<MatX<Sf>> features;
  std::vector<int> labels;
};

FeatureSet collect_features(FrameMAE<Sf>& model, const CheckpointInfo& info,
                            const RunConfig& run, const fs::path& labels_dir) {
  std::string label_hash;
  std::vector<LabelRecord> records = read_label_dataset(labels_dir, &label_hash);
  if (label_hash != info.model_hash)
    throw ArtifactError("labels in " + labels_dir.string() +
                        " were generated with model " + label_hash +
                        ", checkpoint is " + info.model_hash);
  std::vector<VideoClip> clips = load_clips(run, run.data.clips);
  std::map<std::string, const VideoClip*> by_id;
  for (const VideoClip& c : clips) by_id[c.clip_id] = &c;
  FeatureSet fset;
  for (const LabelRecord& rec : records) {
    auto it = by_id.find(rec.clip_id);
    if (it == by_id.end())
      throw ArtifactError("labeled clip '" + rec.clip_id +
                          "' not present in the dataset");
    fset.features.push_back(model.extract_features(*it->second).tokens);
    fset.labels.push_back(rec.gt_label);
  }
  return fset;
}

int cmd_train_selector(const CommonArgs& args, const std::string& ckpt_flag,
                       const std::string& labels_flag) {
  RunConfig run = resolve_config(args);
  const fs::path ckpt =
      ckpt_flag.empty() ? default_checkpoint(run) : fs::path(ckpt_flag);
  const fs::path labels_dir = labels_flag.empty()
                                  ? fs::path(run.out_dir) / "labels"
                                  : fs::path(labels_flag);
  CheckpointInfo info;
  FrameMAE<Sf> model = load_framemae<Sf>(ckpt, &info);
  FeatureSet fset = collect_features(model, info, run, labels_dir);
  SelectorConfig scfg = selector_for(run);
  SelectorTrainResult<Sf> res = train_selector_on_features(
      fset.features, fset.labels, scfg, run.selector_train, run.seed);
  const fs::path sel_dir = fs::path(run.out_dir) / "selector";
  save_selector(sel_dir, res.best, res.best_epoch, run.seed, info.model_hash);
  write_selector_trace_csv(res.trace,
                           fs::path(run.out_dir) / "selector_trace.csv");
  write_effective_config(run.out_dir, run, {{ckpt.string(), info.model_hash}});
  std::printf("selector: best epoch %d, val top-1 %.2f%%, top-5 %.2f%% -> %s\n",
              res.best_epoch, 100.0 * res.best_top1, 100.0 * res.best_top5,
              sel_dir.string().c_str());
  return 0;
}

const VideoClip& pick_clip(const std::vector<VideoClip>& clips,
                           const std::string& clip_id, int index) {
  if (!clip_id.empty()) {
    for (const VideoClip& c : clips)
      if (c.clip_id == clip_id) return c;
    throw ArtifactError("clip '" + clip_id + "' not found in the dataset");
  }
  if (index < 0 || index >= int(clips.size()))
    throw InvalidInput("clip index out of range");
  return clips[std::size_t(index)];
}

int cmd_compress(const CommonArgs& args, const std::string& ckpt_flag,
                 const std::string& sel_flag, const std::string& clip_id,
                 int index, const std::string& policy_flag,
                 const std::string& out_file) {
  RunConfig run = resolve_config(args);
  const fs::path ckpt =
      ckpt_flag.empty() ? default_checkpoint(run) : fs::path(ckpt_flag);
  FrameMAE<Sf> model = load_framemae<Sf>(ckpt);
  std::optional<Selector<Sf>> selector;
  if (!sel_flag.empty()) selector = load_selector<Sf>(sel_flag);
  const Policy policy = policy_from_string(
      policy_flag.empty() ? run.codec.policy : policy_flag);
  std::vector<VideoClip> clips = load_clips(run, run.data.clips);
  const VideoClip& clip = pick_clip(clips, clip_id, index);
  std::vector<std::uint8_t> blob =
      compress_clip(model, selector ? &*selector : nullptr, clip, policy,
                    run.codec.keep, run.seed, std::uint64_t(index));
  const fs::path out = out_file.empty()
                           ? fs::path(run.out_dir) / (clip.clip_id + ".frrs")
                           : fs::path(out_file);
  fs::create_directories(out.parent_path().empty() ? "." : out.parent_path());
  write_frrs_file(out, blob);
  FrrsMeta meta = read_frrs_meta(blob);
  std::cout << "compressed '" << clip.clip_id << "' with policy "
            << policy_name(policy) << ", kept slots [";
  for (std::size_t i = 0; i < meta.keep_slots.size(); ++i)
    std::cout << (i ? " " : "") << meta.keep_slots[i];
  std::cout << "] -> " << out.string() << " (" << blob.size() << " bytes)\n";
  return 0;
}

int cmd_decompress(const CommonArgs& args, const std::string& ckpt_flag,
                   const std::string& in_file, const std::string& out_dir) {
  RunConfig run = resolve_config(args);
  const fs::path ckpt =
      ckpt_flag.empty() ? default_checkpoint(run) : fs::path(ckpt_flag);
  FrameMAE<Sf> model = load_framemae<Sf>(ckpt);
  std::vector<std::uint8_t> blob = read_frrs_file(in_file);
  FrrsMeta meta;
  VideoClip recon = decompress_clip(blob, model, &meta);
  const fs::path out = out_dir.empty()
                           ? fs::path(run.out_dir) / (meta.clip_id + "-recon")
                           : fs::path(out_dir);
  write_clip_raw(recon, out);
  std::cout << "decompressed '" << meta.clip_id << "' (policy " << meta.policy
            << ") -> " << out.string() << "\n";
  return 0;
}

std::vector<Policy> parse_policies(const std::string& list) {
  std::vector<Policy> policies;
  std::string cur;
  for (char c : list + ",") {
    if (c == ',') {
      if (!cur.empty()) policies.push_back(policy_from_string(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (policies.empty()) throw InvalidInput("no policies given");
  return policies;
}

int cmd_eval(const CommonArgs& args, const std::string& ckpt_flag,
             const std::string& sel_flag, const std::string& policies_flag) {
  RunConfig run = resolve_config(args);
  const fs::path ckpt =
      ckpt_flag.empty() ? default_checkpoint(run) : fs::path(ckpt_flag);
  CheckpointInfo info;
  FrameMAE<Sf> model = load_framemae<Sf>(ckpt, &info);
  std::optional<Selector<Sf>> selector;
  std::map<std::string, std::string> consumed{{ckpt.string(), info.model_hash}};
  if (!sel_flag.empty()) {
    std::string paired;
    CheckpointInfo sinfo;
    selector = load_selector<Sf>(sel_flag, &paired, &sinfo);
    if (paired != info.model_hash)
      throw ArtifactError("selector was trained against model " + paired +
                          ", checkpoint is " + info.model_hash);
    consumed[sel_flag] = sinfo.model_hash;
  }
  std::vector<Policy> policies = parse_policies(
      policies_flag.empty() ? "uniform,random,oracle" : policies_flag);
  for (Policy p : policies)
    if (p == Policy::kLearned && !selector)
      throw InvalidInput("eval: learned policy requires --selector");
  std::vector<VideoClip> clips = load_clips(run, run.data.clips);
  std::vector<PolicyReport> rows =
      compare_policies(model, selector ? &*selector : nullptr, clips, policies,
                       run.codec.keep, run.seed);
  const fs::path out(run.out_dir);
  fs::create_directories(out);
  write_policy_report_csv(rows, out / "policy_report.csv");
  write_policy_report_json(rows, out / "policy_report.json");
  write_effective_config(out, run, consumed);
  std::printf("%-8s %6s %9s %12s %10s\n", "policy", "clips", "retained",
              "mean_mse", "mean_psnr");
  for (const PolicyReport& r : rows)
    std::printf("%-8s %6d %9.4f %12.6g %10.4g\n", r.policy.c_str(), r.clips,
                r.retained_fraction, r.mean_mse, r.mean_psnr);
  return 0;
}

int cmd_visualize(const CommonArgs& args, const std::string& ckpt_flag,
                  const std::string& sel_flag, int n_clips,
                  const std::string& policy_flag, const std::string& out_file) {
  RunConfig run = resolve_config(args);
  const fs::path ckpt =
      ckpt_flag.empty() ? default_checkpoint(run) : fs::path(ckpt_flag);
  FrameMAE<Sf> model = load_framemae<Sf>(ckpt);
  std::optional<Selector<Sf>> selector;
  if (!sel_flag.empty()) selector = load_selector<Sf>(sel_flag);
  const Policy policy = policy_from_string(
      policy_flag.empty() ? run.codec.policy : policy_flag);
  std::vector<VideoClip> clips = load_clips(run, run.data.clips);
  if (n_clips < 1 || n_clips > int(clips.size()))
    throw InvalidInput("visualize: clip count out of range");
  clips.resize(std::size_t(n_clips));
  std::vector<std::vector<int>> keeps;
  std::vector<VideoClip> recons;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    keeps.push_back(choose_keep_slots(policy, model,
                                      selector ? &*selector : nullptr,
                                      clips[i], run.codec.keep, run.seed, i));
    recons.push_back(model.reconstruct_clip(clips[i], keeps.back()));
  }
  const fs::path out = out_file.empty()
                           ? fs::path(run.out_dir) / "reconstructions.png"
                           : fs::path(out_file);
  fs::create_directories(out.parent_path().empty() ? "." : out.parent_path());
  write_reconstruction_grid(out, clips, keeps, recons,
                            run.model.temporal_patch);
  std::cout << "wrote " << out.string() << " (" << clips.size()
            << " clips, 3 rows each)\n";
  return 0;
}

int cmd_ablation(const CommonArgs& args, const std::string& ckpt_flag,
                 const std::string& labels_flag) {
  RunConfig run = resolve_config(args);
  const fs::path ckpt =
      ckpt_flag.empty() ? default_checkpoint(run) : fs::path(ckpt_flag);
  const fs::path labels_dir = labels_flag.empty()
                                  ? fs::path(run.out_dir) / "labels"
                                  : fs::path(labels_flag);
  CheckpointInfo info;
  FrameMAE<Sf> model = load_framemae<Sf>(ckpt, &info);
  FeatureSet fset = collect_features(model, info, run, labels_dir);
  SelectorConfig base = selector_for(run);
  const std::vector<AblationPoint> grid = {
      {3, 0.1}, {3, 0.0}, {4, 0.0}};
  std::vector<AblationRow> rows = ablation_sweep(
      fset.features, fset.labels, base, run.selector_train, grid, {run.seed});
  write_ablation_csv(rows, fs::path(run.out_dir) / "ablation.csv");
  write_effective_config(run.out_dir, run, {{ckpt.string(), info.model_hash}});
  std::cout << ablation_table_text(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frame-masked video autoencoder pipeline"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string ckpt_flag, sel_flag, labels_flag, clip_id, policy_flag;
  std::string in_file, out_file, policies_flag;
  int index = 0, n_clips = 2;

  CLI::App* c_make = app.add_subcommand("make-data", "Generate a planted clip dataset");
  add_common(c_make, common);

  CLI::App* c_pre = app.add_subcommand("pretrain", "Masked-reconstruction pretraining");
  add_common(c_pre, common);

  CLI::App* c_lab = app.add_subcommand("gen-labels", "Exhaustive combination ranking per clip");
  add_common(c_lab, common);
  c_lab->add_option("--checkpoint", ckpt_flag, "FrameMAE checkpoint directory");

  CLI::App* c_sel = app.add_subcommand("train-selector", "Train the key-frame selector head");
  add_common(c_sel, common);
  c_sel->add_option("--checkpoint", ckpt_flag, "FrameMAE checkpoint directory");
  c_sel->add_option("--labels", labels_flag, "Label dataset directory");

  CLI::App* c_cmp = app.add_subcommand("compress", "Compress one clip to an .frrs blob");
  add_common(c_cmp, common);
  c_cmp->add_option("--checkpoint", ckpt_flag, "FrameMAE checkpoint directory");
  c_cmp->add_option("--selector", sel_flag, "Selector checkpoint directory");
  c_cmp->add_option("--clip-id", clip_id, "Clip id to compress");
  c_cmp->add_option("--index", index, "Clip index when no id is given");
  c_cmp->add_option("--policy", policy_flag, "uniform|random|oracle|learned");
  c_cmp->add_option("--out", out_file, "Output .frrs path");

  CLI::App* c_dec = app.add_subcommand("decompress", "Reconstruct a clip from an .frrs blob");
  add_common(c_dec, common);
  c_dec->add_option("--checkpoint", ckpt_flag, "FrameMAE checkpoint directory");
  c_dec->add_option("--input", in_file, "Input .frrs path")->required();
  c_dec->add_option("--out", out_file, "Output clip directory");

  CLI::App* c_eval = app.add_subcommand("eval", "Compare keep policies over the dataset");
  add_common(c_eval, common);
  c_eval->add_option("--checkpoint", ckpt_flag, "FrameMAE checkpoint directory");
  c_eval->add_option("--selector", sel_flag, "Selector checkpoint directory");
  c_eval->add_option("--policies", policies_flag, "Comma list of policies");

  CLI::App* c_viz = app.add_subcommand("visualize", "PNG grid of original/masked/reconstructed rows");
  add_common(c_viz, common);
  c_viz->add_option("--checkpoint", ckpt_flag, "FrameMAE checkpoint directory");
  c_viz->add_option("--selector", sel_flag, "Selector checkpoint directory");
  c_viz->add_option("--clips", n_clips, "Number of clips in the grid");
  c_viz->add_option("--policy", policy_flag, "uniform|random|oracle|learned");
  c_viz->add_option("--out", out_file, "Output PNG path");

  CLI::App* c_abl = app.add_subcommand("ablation", "Selector depth/dropout sweep");
  add_common(c_abl, common);
  c_abl->add_option("--checkpoint", ckpt_flag, "FrameMAE checkpoint directory");
  c_abl->add_option("--labels", labels_flag, "Label dataset directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (c_make->parsed()) return cmd_make_data(common);
    if (c_pre->parsed()) return cmd_pretrain(common);
    if (c_lab->parsed()) return cmd_gen_labels(common, ckpt_flag);
    if (c_sel->parsed()) return cmd_train_selector(common, ckpt_flag, labels_flag);
    if (c_cmp->parsed())
      return cmd_compress(common, ckpt_flag, sel_flag, clip_id, index,
                          policy_flag, out_file);
    if (c_dec->parsed()) return cmd_decompress(common, ckpt_flag, in_file, out_file);
    if (c_eval->parsed()) return cmd_eval(common, ckpt_flag, sel_flag, policies_flag);
    if (c_viz->parsed())
      return cmd_visualize(common, ckpt_flag, sel_flag, n_clips, policy_flag,
                           out_file);
    if (c_abl->parsed()) return cmd_ablation(common, ckpt_flag, labels_flag);
  } catch (const InvalidInput& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
