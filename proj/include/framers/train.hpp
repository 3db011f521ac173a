#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <vector>

#include "framers/clip.hpp"
#include "framers/model.hpp"
#include "framers/rng.hpp"

namespace framers {

struct OptimConfig {
  double lr = 1.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;
  double warmup_frac = 0.05;  // fraction of total steps, linear warmup
};

/// Cosine schedule with linear warmup, decaying to zero.
inline double lr_at_step(const OptimConfig& opt, std::int64_t step,
                         std::int64_t total_steps) {
  const std::int64_t warmup =
      std::max<std::int64_t>(1, std::llround(opt.warmup_frac * total_steps));
  if (step < warmup) return opt.lr * double(step + 1) / double(warmup);
  if (total_steps <= warmup) return opt.lr;
  const double t = double(step - warmup) / double(total_steps - warmup);
  return 0.5 * opt.lr * (1.0 + std::cos(M_PI * t));
}

// Decoupled weight decay Adam. Moment buffers are keyed by the model's
// canonical parameter order; weight decay applies only where the model's
// visitor says so (weight matrices, not biases/norm gains/mask token).
template <class S, class Model>
class AdamW {
 public:
  explicit AdamW(const OptimConfig& opt) : opt_(opt) {}

  void step(Model& model, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, double(t_));
    std::size_t idx = 0;
    model.visit_trainable([&](const std::string&, MatX<S>& p, MatX<S>& g,
                              bool decay) {
      if (idx >= m_.size()) {
        m_.push_back(MatX<S>::Zero(p.rows(), p.cols()));
        v_.push_back(MatX<S>::Zero(p.rows(), p.cols()));
      }
      MatX<S>& m = m_[idx];
      MatX<S>& v = v_[idx];
      m = S(opt_.beta1) * m + S(1.0 - opt_.beta1) * g;
      v = S(opt_.beta2) * v + S(1.0 - opt_.beta2) * g.cwiseProduct(g);
      const auto mhat = m.array() / S(bc1);
      const auto vhat = v.array() / S(bc2);
      p.array() -= S(lr) * (mhat / (vhat.sqrt() + S(opt_.eps)));
      if (decay) p.array() -= S(lr * opt_.weight_decay) * p.array();
      ++idx;
    });
  }

  std::int64_t steps_taken() const { return t_; }

 private:
  OptimConfig opt_;
  std::int64_t t_ = 0;
  std::vector<MatX<S>> m_;
  std::vector<MatX<S>> v_;
};

struct PretrainConfig {
  std::int64_t steps = 800;
  int batch_size = 8;
  int masked_count = 3;  // of t_tok slots, fresh mask per clip per step
  LossScope scope = LossScope::kMaskedOnly;
  OptimConfig optim;
  std::int64_t log_every = 10;
  std::int64_t checkpoint_every = 0;  // 0 = only the final checkpoint
};

struct TraceRow {
  std::int64_t step;
  double lr;
  double loss;
};

template <class S>
struct TrainState {
  FrameMAE<S> model;
  std::int64_t step = 0;
  std::vector<TraceRow> trace;
};

template <class S>
double grad_norm(FrameMAE<S>& model) {
  double sq = 0;
  model.visit_trainable([&](const std::string&, MatX<S>&, MatX<S>& g, bool) {
    sq += double(g.cwiseProduct(g).sum());
  });
  return std::sqrt(sq);
}

/// Masked-reconstruction pretraining. Each step samples a clip batch (with
/// replacement), draws a fresh random mask per clip, and applies one AdamW
/// update on the mean batch loss. Deterministic given (inputs, seed).
template <class S>
TrainState<S> pretrain(
    const std::vector<VideoClip>& dataset, const ModelConfig& cfg,
    const PretrainConfig& pt, std::uint64_t seed,
    const std::function<void(std::int64_t, FrameMAE<S>&)>& on_checkpoint = {}) {
  if (dataset.empty()) throw InvalidInput("pretrain: dataset is empty");
  cfg.validate();
  if (pt.masked_count < 0 || pt.masked_count > cfg.t_tok())
    throw InvalidInput("pretrain: masked_count out of range");

  TrainState<S> st;
  st.model = FrameMAE<S>::init(cfg, seed);
  AdamW<S, FrameMAE<S>> opt(pt.optim);
  Rng rng = make_rng(seed, kTagTrain);

  typename FrameMAE<S>::Cache cache;
  for (std::int64_t step = 0; step < pt.steps; ++step) {
    const double lr = lr_at_step(pt.optim, step, pt.steps);
    st.model.zero_grad();
    double loss_sum = 0;
    std::vector<FrameMask> masks(pt.batch_size);
    std::vector<int> picks(pt.batch_size);
    for (int b = 0; b < pt.batch_size; ++b) {
      picks[b] = int(uniform_index(rng, dataset.size()));
      masks[b] = make_frame_mask(cfg.t_tok(), pt.masked_count, rng());
    }
    for (int b = 0; b < pt.batch_size; ++b) {
      const S loss = st.model.forward_loss(dataset[picks[b]], masks[b],
                                           pt.scope, cache);
      loss_sum += double(loss);
      st.model.backward(masks[b], pt.scope, cache);
    }
    const double batch_loss = loss_sum / pt.batch_size;
    if (!std::isfinite(batch_loss))
      throw DivergedError("pretrain: non-finite loss at step " +
                              std::to_string(step),
                          step, lr, grad_norm(st.model));
    // average accumulated gradients over the batch
    const S inv_b = S(1.0 / pt.batch_size);
    st.model.visit_trainable(
        [&](const std::string&, MatX<S>&, MatX<S>& g, bool) { g *= inv_b; });
    opt.step(st.model, lr);
    st.step = step + 1;
    if (step % pt.log_every == 0 || step + 1 == pt.steps)
      st.trace.push_back({step, lr, batch_loss});
    if (on_checkpoint && pt.checkpoint_every > 0 &&
        (step + 1) % pt.checkpoint_every == 0 && step + 1 != pt.steps)
      on_checkpoint(step + 1, st.model);
  }
  return st;
}

inline void write_trace_csv(const std::vector<TraceRow>& trace,
                            const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ArtifactError("cannot write " + path.string());
  out << "step,lr,loss\n";
  char line[96];
  for (const TraceRow& r : trace) {
    std::snprintf(line, sizeof line, "%lld,%.17g,%.17g\n",
                  (long long)r.step, r.lr, r.loss);
    out << line;
  }
}

/// Deterministic evaluation metric: mean masked-only MSE over every clip
/// with reps fixed seeded masks each.
template <class S>
double eval_masked_mse(const FrameMAE<S>& model,
                       const std::vector<VideoClip>& clips, int masked_count,
                       std::uint64_t seed, int reps = 4) {
  typename FrameMAE<S>::Cache cache;
  double sum = 0;
  std::int64_t n = 0;
  for (std::size_t i = 0; i < clips.size(); ++i)
    for (int r = 0; r < reps; ++r) {
      Rng rng = make_rng(seed, kTagMask, i * 1000 + r);
      const FrameMask mask =
          make_frame_mask(model.cfg.t_tok(), masked_count, rng());
      sum += double(model.forward_loss(clips[i], mask, LossScope::kMaskedOnly,
                                       cache));
      ++n;
    }
  return sum / double(n);
}

}  // namespace framers
