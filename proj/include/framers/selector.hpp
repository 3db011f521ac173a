#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "framers/checkpoint.hpp"
#include "framers/layers.hpp"
#include "framers/mask.hpp"
#include "framers/model.hpp"
#include "framers/train.hpp"

namespace framers {

struct SelectorConfig {
  int in_dim = 768;   // encoder embed dim
  int t_tok = 8;
  int k = 2;          // kept slots per combination
  int proj_dim = 384;
  int blocks = 3;
  std::vector<int> hidden;  // width per block; filled with 512 when empty
  double dropout = 0.1;
  int classes = 28;

  void validate() const {
    if (in_dim < 1 || t_tok < 1 || proj_dim < 1)
      throw InvalidInput("SelectorConfig: dims must be positive");
    if (blocks < 1) throw InvalidInput("SelectorConfig: blocks must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0)
      throw InvalidInput("SelectorConfig: dropout must be in [0,1)");
    if (classes != int(n_combos(t_tok, k)))
      throw InvalidInput("SelectorConfig: classes " + std::to_string(classes) +
                         " != C(" + std::to_string(t_tok) + ", " +
                         std::to_string(k) + ")");
    if (!hidden.empty() && int(hidden.size()) != blocks)
      throw InvalidInput("SelectorConfig: hidden widths must match blocks");
  }
  std::vector<int> widths() const {
    if (!hidden.empty()) return hidden;
    return std::vector<int>(blocks, 512);
  }
  int flat_dim() const { return t_tok * proj_dim; }
};

// Key-frame selector head: per-token projection D -> proj_dim, elementwise
// max over the spatial axis per slot, then an MLP (linear/GELU/dropout per
// block) to combination-class logits. Final layer is zero-initialized, so
// an untrained selector scores every class equally.
//
// The projector is a fixed random projection: it is saved with the
// checkpoint and backward still computes its gradients, but the optimizer
// only updates the MLP. Encoder features arrive unnormalized (the encoder
// has no final norm), so the per-slot pooled values are a large
// position-dependent background plus a small per-clip deviation; training
// the first layer on that ratio destabilizes everything downstream, while
// a random projection provably preserves the separable structure. For the
// same reason the training loop folds training-set pooled statistics into
// the first block (calibrate) before the first step.
template <class S>
class Selector {
 public:
  SelectorConfig cfg;
  Linear<S> proj;
  std::vector<Linear<S>> blocks;
  Linear<S> out;

  struct Cache {
    MatX<S> features;            // [N, in_dim]
    MatX<S> projected;           // [N, proj_dim]
    std::vector<int> argmax;     // winner row per (slot, channel)
    MatX<S> flat;                // [1, t_tok*proj_dim]
    std::vector<MatX<S>> xs;     // input to each block linear
    std::vector<MatX<S>> pre;    // pre-GELU
    std::vector<MatX<S>> act;    // post-GELU (pre-dropout)
    std::vector<MatX<S>> drop;   // dropout scale masks
    MatX<S> last;                // input to the final linear
  };

  static Selector init(const SelectorConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Selector sel;
    sel.cfg = cfg;
    Rng rng = make_rng(seed, kTagInit, 0x5e1);
    sel.proj.init(cfg.proj_dim, cfg.in_dim, rng);
    const std::vector<int> widths = cfg.widths();
    sel.blocks.resize(cfg.blocks);
    int prev = cfg.flat_dim();
    for (int i = 0; i < cfg.blocks; ++i) {
      sel.blocks[i].init(widths[i], prev, rng, std::sqrt(2.0 / prev));
      prev = widths[i];
    }
    sel.out.init_zero(cfg.classes, prev);
    return sel;
  }

  MatX<S> flatten_pooled(const MatX<S>& pooled) const {
    MatX<S> x(1, cfg.flat_dim());
    for (int t = 0; t < cfg.t_tok; ++t)
      x.middleCols(Eigen::Index(t) * cfg.proj_dim, cfg.proj_dim) =
          pooled.row(t);
    return x;
  }

  /// Folds per-dimension standardization of `flats` (rows of flattened
  /// pooled vectors) into the first block's weights and bias, so the MLP
  /// starts from zero-mean unit-variance inputs. Near-constant dimensions
  /// are centered but not rescaled.
  void calibrate(const MatX<S>& flats) {
    if (flats.rows() < 1 || flats.cols() != cfg.flat_dim())
      throw InvalidInput("calibrate: stats matrix is " +
                         std::to_string(flats.rows()) + "x" +
                         std::to_string(flats.cols()));
    VecX<S> mu = flats.colwise().mean().transpose();
    Linear<S>& first = blocks[0];
    for (Eigen::Index d = 0; d < flats.cols(); ++d) {
      const S sd = std::sqrt((flats.col(d).array() - mu(d)).square().mean());
      if (sd > S(1e-12)) first.w.col(d) /= sd;
    }
    first.b.col(0).noalias() -= first.w * mu;
  }

  void zero_grad() {
    proj.zero_grad();
    for (auto& b : blocks) b.zero_grad();
    out.zero_grad();
  }
  void visit_trainable(const ParamFn<S>& fn) {
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].visit("block." + std::to_string(i), fn);
    out.visit("out", fn);
  }
  void visit_arrays(const std::function<void(const std::string&, MatX<S>&)>& fn) {
    auto tramp = [&](const std::string& n, MatX<S>& v, MatX<S>&, bool) {
      fn(n, v);
    };
    proj.visit("proj", tramp);
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].visit("block." + std::to_string(i), tramp);
    out.visit("out", tramp);
  }

  /// Projection then spatial max per slot: [N, in_dim] -> [t_tok, proj_dim].
  MatX<S> pool_project(const MatX<S>& features, Cache* cache = nullptr) const {
    const int s_tok = int(features.rows()) / cfg.t_tok;
    if (features.rows() != Eigen::Index(cfg.t_tok) * s_tok ||
        features.cols() != cfg.in_dim)
      throw InvalidInput("pool_project: features are " +
                         std::to_string(features.rows()) + "x" +
                         std::to_string(features.cols()));
    MatX<S> p = proj.forward(features);
    MatX<S> pooled(cfg.t_tok, cfg.proj_dim);
    std::vector<int> argmax;
    if (cache) argmax.assign(std::size_t(cfg.t_tok) * cfg.proj_dim, 0);
    for (int t = 0; t < cfg.t_tok; ++t)
      for (int d = 0; d < cfg.proj_dim; ++d) {
        S best = p(Eigen::Index(t) * s_tok, d);
        int best_row = t * s_tok;
        for (int s = 1; s < s_tok; ++s)
          if (p(Eigen::Index(t) * s_tok + s, d) > best) {
            best = p(Eigen::Index(t) * s_tok + s, d);
            best_row = t * s_tok + s;
          }
        pooled(t, d) = best;
        if (cache) argmax[std::size_t(t) * cfg.proj_dim + d] = best_row;
      }
    if (cache) {
      cache->features = features;
      cache->projected = std::move(p);
      cache->argmax = std::move(argmax);
    }
    return pooled;
  }

  /// Pooled vectors flattened and run through the MLP. Dropout is active
  /// only in train mode (rng required then).
  VecX<S> forward(const MatX<S>& features, bool train_mode = false,
                  Rng* dropout_rng = nullptr, Cache* cache = nullptr) const {
    MatX<S> pooled = pool_project(features, cache);
    MatX<S> x = flatten_pooled(pooled);
    if (cache) {
      cache->flat = x;
      cache->xs.clear();
      cache->pre.clear();
      cache->act.clear();
      cache->drop.clear();
    }
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      if (cache) cache->xs.push_back(x);
      MatX<S> pre = blocks[i].forward(x);
      MatX<S> act = pre.unaryExpr([](S v) { return gelu_scalar(v); });
      if (cache) {
        cache->pre.push_back(pre);
        cache->act.push_back(act);
      }
      if (train_mode && cfg.dropout > 0.0) {
        if (!dropout_rng)
          throw InvalidInput("selector forward: train mode needs a dropout rng");
        const S keep_scale = S(1.0 / (1.0 - cfg.dropout));
        MatX<S> mask(act.rows(), act.cols());
        for (Eigen::Index j = 0; j < mask.size(); ++j)
          mask.data()[j] =
              uniform_unit(*dropout_rng) < cfg.dropout ? S(0) : keep_scale;
        act = act.cwiseProduct(mask);
        if (cache) cache->drop.push_back(std::move(mask));
      } else if (cache) {
        cache->drop.push_back(MatX<S>());
      }
      x = std::move(act);
    }
    if (cache) cache->last = x;
    MatX<S> logits = out.forward(x);
    return logits.row(0).transpose();
  }

  /// Backprop from dlogits; accumulates gradients.
  void backward(const VecX<S>& dlogits, const Cache& cache) {
    MatX<S> dy = dlogits.transpose();
    dy = out.backward(cache.last, dy);
    for (int i = int(blocks.size()) - 1; i >= 0; --i) {
      if (cache.drop[i].size() > 0) dy = dy.cwiseProduct(cache.drop[i]);
      dy = dy.cwiseProduct(cache.pre[i].unaryExpr(
          [](S v) { return gelu_grad_scalar(v); }));
      dy = blocks[i].backward(cache.xs[i], dy);
    }
    // unflatten, route through the max winners, then the projector
    MatX<S> dp = MatX<S>::Zero(cache.features.rows(), cfg.proj_dim);
    for (int t = 0; t < cfg.t_tok; ++t)
      for (int d = 0; d < cfg.proj_dim; ++d)
        dp(cache.argmax[std::size_t(t) * cfg.proj_dim + d], d) +=
            dy(0, Eigen::Index(t) * cfg.proj_dim + d);
    proj.accumulate_grads(cache.features, dp);
  }
};

/// Numerically stable cross-entropy; fills dlogits = softmax - onehot.
template <class S>
S cross_entropy(const VecX<S>& logits, int gt, VecX<S>* dlogits = nullptr) {
  if (gt < 0 || gt >= int(logits.size()))
    throw InvalidInput("cross_entropy: label out of range");
  const S mx = logits.maxCoeff();
  VecX<S> e = (logits.array() - mx).exp();
  const S z = e.sum();
  if (dlogits) *dlogits = e / z;
  const S loss = std::log(z) + mx - logits(gt);
  if (dlogits) (*dlogits)(gt) -= S(1);
  return loss;
}

/// Fraction of rows whose label ranks in the k best logits. Ties resolve
/// toward the lower class index.
template <class S>
double topk_accuracy(const MatX<S>& logits, const std::vector<int>& labels,
                     int k) {
  if (logits.rows() != Eigen::Index(labels.size()))
    throw InvalidInput("topk_accuracy: batch size mismatch");
  if (k < 1 || k > logits.cols())
    throw InvalidInput("topk_accuracy: k out of range");
  int hits = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int gt = labels[std::size_t(i)];
    if (gt < 0 || gt >= logits.cols())
      throw InvalidInput("topk_accuracy: label out of range");
    const S lv = logits(i, gt);
    int rank = 0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      if (j == gt) continue;
      if (logits(i, j) > lv || (logits(i, j) == lv && j < gt)) ++rank;
    }
    if (rank < k) ++hits;
  }
  return double(hits) / double(labels.size());
}

struct SelectorTrainConfig {
  int epochs = 40;
  int batch_size = 32;
  double val_frac = 0.2;
  OptimConfig optim{.lr = 3e-4, .weight_decay = 0.01, .warmup_frac = 0.0};
};

struct SelectorEpochRow {
  int epoch;
  double train_loss;
  double top1;
  double top5;
};

template <class S>
struct SelectorTrainResult {
  Selector<S> best;
  int best_epoch = 0;
  double best_top1 = 0;
  double best_top5 = 0;
  std::vector<SelectorEpochRow> trace;
  std::vector<std::size_t> val_indices;
};

/// Cross-entropy training over cached encoder features; keeps the epoch
/// with the best validation top-1.
template <class S>
SelectorTrainResult<S> train_selector_on_features(
    const std::vector<MatX<S>>& features, const std::vector<int>& labels,
    const SelectorConfig& scfg, const SelectorTrainConfig& tcfg,
    std::uint64_t seed) {
  if (features.size() != labels.size() || features.empty())
    throw InvalidInput("train_selector: features/labels size mismatch or empty");
  scfg.validate();

  const std::size_t n = features.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng split_rng = make_rng(seed, kTagSplit);
  for (std::size_t i = n - 1; i > 0; --i)
    std::swap(order[i], order[uniform_index(split_rng, i + 1)]);
  const std::size_t n_val =
      std::max<std::size_t>(1, std::size_t(std::llround(tcfg.val_frac * n)));
  std::vector<std::size_t> val(order.begin(), order.begin() + n_val);
  std::vector<std::size_t> train(order.begin() + n_val, order.end());
  if (train.empty()) throw InvalidInput("train_selector: no training examples");

  SelectorTrainResult<S> result;
  result.val_indices = val;
  Selector<S> sel = Selector<S>::init(scfg, seed);
  {
    MatX<S> flats(train.size(), scfg.flat_dim());
    for (std::size_t i = 0; i < train.size(); ++i)
      flats.row(Eigen::Index(i)) =
          sel.flatten_pooled(sel.pool_project(features[train[i]]));
    sel.calibrate(flats);
  }
  AdamW<S, Selector<S>> opt(tcfg.optim);
  Rng shuffle_rng = make_rng(seed, kTagTrain, 0x5e1);
  Rng dropout_rng = make_rng(seed, kTagDropout);

  auto evaluate = [&](Selector<S>& s, double* top1, double* top5) {
    MatX<S> logits(val.size(), scfg.classes);
    std::vector<int> gts(val.size());
    for (std::size_t i = 0; i < val.size(); ++i) {
      logits.row(Eigen::Index(i)) =
          s.forward(features[val[i]]).transpose();
      gts[i] = labels[val[i]];
    }
    *top1 = topk_accuracy(logits, gts, 1);
    *top5 = topk_accuracy(logits, gts, std::min(5, scfg.classes));
  };

  const std::int64_t steps_per_epoch =
      std::int64_t((train.size() + tcfg.batch_size - 1) / tcfg.batch_size);
  const std::int64_t total_steps = steps_per_epoch * tcfg.epochs;
  std::int64_t step = 0;

  typename Selector<S>::Cache cache;
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    for (std::size_t i = train.size() - 1; i > 0; --i)
      std::swap(train[i], train[uniform_index(shuffle_rng, i + 1)]);
    double epoch_loss = 0;
    for (std::size_t start = 0; start < train.size();
         start += tcfg.batch_size) {
      const std::size_t stop =
          std::min(train.size(), start + tcfg.batch_size);
      sel.zero_grad();
      double batch_loss = 0;
      for (std::size_t i = start; i < stop; ++i) {
        VecX<S> logits =
            sel.forward(features[train[i]], true, &dropout_rng, &cache);
        VecX<S> dlogits;
        batch_loss += double(cross_entropy(logits, labels[train[i]], &dlogits));
        dlogits /= S(stop - start);
        sel.backward(dlogits, cache);
      }
      batch_loss /= double(stop - start);
      epoch_loss += batch_loss * double(stop - start);
      if (!std::isfinite(batch_loss))
        throw DivergedError("train_selector: non-finite loss at epoch " +
                                std::to_string(epoch),
                            step, lr_at_step(tcfg.optim, step, total_steps),
                            0.0);
      opt.step(sel, lr_at_step(tcfg.optim, step, total_steps));
      ++step;
    }
    epoch_loss /= double(train.size());
    double top1 = 0, top5 = 0;
    evaluate(sel, &top1, &top5);
    result.trace.push_back({epoch, epoch_loss, top1, top5});
    if (result.trace.size() == 1 || top1 > result.best_top1) {
      result.best = sel;
      result.best_epoch = epoch;
      result.best_top1 = top1;
      result.best_top5 = top5;
    }
  }
  return result;
}

struct AblationPoint {
  int blocks;
  double dropout;
};

struct AblationRow {
  int blocks;
  double dropout;
  double top1;
  double top5;
  int best_epoch;
};

template <class S>
std::vector<AblationRow> ablation_sweep(
    const std::vector<MatX<S>>& features, const std::vector<int>& labels,
    const SelectorConfig& base, const SelectorTrainConfig& tcfg,
    const std::vector<AblationPoint>& grid,
    const std::vector<std::uint64_t>& seeds) {
  if (grid.size() < 2)
    throw InvalidInput("ablation_sweep: need at least two grid points");
  if (seeds.empty()) throw InvalidInput("ablation_sweep: need at least one seed");
  std::vector<AblationRow> rows;
  for (const AblationPoint& pt : grid) {
    SelectorConfig scfg = base;
    scfg.blocks = pt.blocks;
    scfg.dropout = pt.dropout;
    scfg.hidden.clear();
    double top1 = 0, top5 = 0;
    int best_epoch = 0;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      auto res =
          train_selector_on_features(features, labels, scfg, tcfg, seeds[i]);
      top1 += res.best_top1;
      top5 += res.best_top5;
      if (i == 0) best_epoch = res.best_epoch;
    }
    rows.push_back({pt.blocks, pt.dropout, top1 / double(seeds.size()),
                    top5 / double(seeds.size()), best_epoch});
  }
  return rows;
}

/// Plain-text table in the usual (blocks, top-1, top-5, drop-out,
/// best epoch) layout, with the published full-scale reference row values
/// quoted as context that desk-scale runs are not expected to reproduce.
std::string ablation_table_text(const std::vector<AblationRow>& rows);
void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::filesystem::path& path);
void write_selector_trace_csv(const std::vector<SelectorEpochRow>& trace,
                              const std::filesystem::path& path);

nlohmann::json selector_config_to_json(const SelectorConfig& cfg);
SelectorConfig selector_config_from_json(const nlohmann::json& j);

template <class S>
NamedArrays collect_selector_arrays(Selector<S>& sel) {
  NamedArrays arrays;
  sel.visit_arrays([&](const std::string& name, MatX<S>& v) {
    arrays.emplace_back(name, v.template cast<double>());
  });
  return arrays;
}

/// Selector checkpoints record the hash of the encoder they were trained
/// against, so the learned policy can refuse mismatched backbones.
template <class S>
void save_selector(const std::filesystem::path& dir, Selector<S>& sel,
                   std::int64_t step, std::uint64_t seed,
                   const std::string& paired_model_hash) {
  CheckpointInfo info;
  info.kind = "selector";
  nlohmann::json cfg = selector_config_to_json(sel.cfg);
  cfg["paired_model_hash"] = paired_model_hash;
  info.config = cfg;
  info.step = step;
  info.seed = seed;
  NamedArrays arrays = collect_selector_arrays(sel);
  info.model_hash = hash_arrays(info.config.dump(), arrays);
  write_array_checkpoint(dir, info, arrays);
}

template <class S>
Selector<S> load_selector(const std::filesystem::path& dir,
                          std::string* paired_model_hash = nullptr,
                          CheckpointInfo* info_out = nullptr) {
  LoadedCheckpoint ck = read_array_checkpoint(dir);
  if (ck.info.kind != "selector")
    throw ArtifactError("checkpoint at " + dir.string() + " has kind '" +
                        ck.info.kind + "', expected 'selector'");
  SelectorConfig cfg = selector_config_from_json(ck.info.config);
  Selector<S> sel = Selector<S>::init(cfg, 0);
  sel.visit_arrays([&](const std::string& name, MatX<S>& v) {
    auto it = ck.arrays.find(name);
    if (it == ck.arrays.end())
      throw ArtifactError("checkpoint missing parameter '" + name + "'");
    if (it->second.rows() != v.rows() || it->second.cols() != v.cols())
      throw ArtifactError("checkpoint parameter '" + name +
                          "' has unexpected shape");
    v = it->second.template cast<S>();
  });
  if (paired_model_hash)
    *paired_model_hash = ck.info.config.value("paired_model_hash", "");
  if (info_out) *info_out = ck.info;
  return sel;
}

}  // namespace framers
