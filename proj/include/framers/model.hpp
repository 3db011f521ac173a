#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "framers/clip.hpp"
#include "framers/layers.hpp"
#include "framers/mask.hpp"
#include "framers/patches.hpp"

namespace framers {

enum class LossScope { kMaskedOnly, kAll };

/// Asymmetric encoder-decoder over frame-masked token grids. The encoder
/// sees visible tokens only; the decoder fills masked positions with a
/// shared mask token and predicts pixel patches for every position.
template <class S>
class FrameMAE {
 public:
  ModelConfig cfg;
  Linear<S> embed;    // patch_dim -> D
  MatX<S> enc_pos;    // [N, D]
  MatX<S> g_enc_pos;
  std::vector<Block<S>> enc_blocks;
  Linear<S> dec_proj;  // D -> D_dec
  MatX<S> mask_token;  // [D_dec, 1]
  MatX<S> g_mask_token;
  MatX<S> dec_pos;  // [N, D_dec]
  MatX<S> g_dec_pos;
  std::vector<Block<S>> dec_blocks;
  LayerNorm<S> dec_norm;
  Linear<S> head;  // D_dec -> patch_dim

  struct Cache {
    PixelPatches<S> patches;  // embedding input, also the loss target
    MaskedTokens book;
    std::vector<typename Block<S>::Cache> enc;
    MatX<S> enc_out;
    std::vector<typename Block<S>::Cache> dec;
    typename LayerNorm<S>::Cache dec_normc;
    MatX<S> dec_normed;
    PixelPatches<S> pred;
  };

  static FrameMAE init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    FrameMAE m;
    m.cfg = cfg;
    Rng rng = make_rng(seed, kTagInit);
    const int n = cfg.n_tokens();
    m.embed.init(cfg.embed_dim, cfg.patch_dim(), rng);
    m.enc_pos = sinusoid_table(n, cfg.embed_dim).cast<S>();
    m.enc_blocks.resize(cfg.encoder_depth);
    const int enc_hidden = int(cfg.embed_dim * cfg.mlp_ratio);
    for (auto& b : m.enc_blocks)
      b.init(cfg.embed_dim, cfg.encoder_heads, enc_hidden, rng);
    m.dec_proj.init(cfg.decoder_dim, cfg.embed_dim, rng);
    m.mask_token = MatX<S>::Zero(cfg.decoder_dim, 1);
    m.dec_pos = sinusoid_table(n, cfg.decoder_dim).cast<S>();
    m.dec_blocks.resize(cfg.decoder_depth);
    const int dec_hidden = int(cfg.decoder_dim * cfg.mlp_ratio);
    for (auto& b : m.dec_blocks)
      b.init(cfg.decoder_dim, cfg.decoder_heads, dec_hidden, rng);
    m.dec_norm.init(cfg.decoder_dim);
    m.head.init(cfg.patch_dim(), cfg.decoder_dim, rng);
    m.alloc_grads();
    return m;
  }

  void alloc_grads() {
    g_enc_pos = MatX<S>::Zero(enc_pos.rows(), enc_pos.cols());
    g_mask_token = MatX<S>::Zero(mask_token.rows(), 1);
    g_dec_pos = MatX<S>::Zero(dec_pos.rows(), dec_pos.cols());
  }

  void zero_grad() {
    embed.zero_grad();
    g_enc_pos.setZero();
    for (auto& b : enc_blocks) b.zero_grad();
    dec_proj.zero_grad();
    g_mask_token.setZero();
    g_dec_pos.setZero();
    for (auto& b : dec_blocks) b.zero_grad();
    dec_norm.zero_grad();
    head.zero_grad();
  }

  /// Trainable parameters in canonical order (optimizer, gradient checks).
  void visit_trainable(const ParamFn<S>& fn) {
    embed.visit("embed", fn);
    if (cfg.learnable_pos) fn("enc_pos", enc_pos, g_enc_pos, false);
    for (std::size_t i = 0; i < enc_blocks.size(); ++i)
      enc_blocks[i].visit("enc." + std::to_string(i), fn);
    dec_proj.visit("dec_proj", fn);
    if (cfg.trainable_mask_token)
      fn("mask_token", mask_token, g_mask_token, false);
    if (cfg.learnable_pos) fn("dec_pos", dec_pos, g_dec_pos, false);
    for (std::size_t i = 0; i < dec_blocks.size(); ++i)
      dec_blocks[i].visit("dec." + std::to_string(i), fn);
    dec_norm.visit("dec_norm", fn);
    head.visit("head", fn);
  }

  /// Every array the checkpoint stores, trainable or not.
  void visit_arrays(const std::function<void(const std::string&, MatX<S>&)>& fn) {
    auto trampoline = [&](const std::string& name, MatX<S>& v, MatX<S>&, bool) {
      fn(name, v);
    };
    embed.visit("embed", trampoline);
    fn("enc_pos", enc_pos);
    for (std::size_t i = 0; i < enc_blocks.size(); ++i)
      enc_blocks[i].visit("enc." + std::to_string(i), trampoline);
    dec_proj.visit("dec_proj", trampoline);
    fn("mask_token", mask_token);
    fn("dec_pos", dec_pos);
    for (std::size_t i = 0; i < dec_blocks.size(); ++i)
      dec_blocks[i].visit("dec." + std::to_string(i), trampoline);
    dec_norm.visit("dec_norm", trampoline);
    head.visit("head", trampoline);
  }

  /// Clip -> tokens with encoder positional embeddings added.
  TokenGrid<S> embed_tokens(const VideoClip& clip) const {
    TokenGrid<S> grid = cube_embed<S>(clip, cfg, embed.w, VecX<S>(embed.b.col(0)));
    grid.tokens += enc_pos;
    return grid;
  }

  /// Pre-norm blocks over visible tokens only. Shape-preserving.
  MatX<S> encode(const MatX<S>& visible,
                 std::vector<typename Block<S>::Cache>* caches = nullptr) const {
    if (visible.rows() < 1)
      throw InvalidInput("encode: need at least one visible token");
    if (!visible.allFinite())
      throw InvalidInput("encode: non-finite input");
    if (caches) caches->resize(enc_blocks.size());
    MatX<S> x = visible;
    for (std::size_t i = 0; i < enc_blocks.size(); ++i)
      x = enc_blocks[i].forward(x, caches ? &(*caches)[i] : nullptr);
    return x;
  }

  /// Latent rows scattered back to the full grid; masked positions take the
  /// mask token; decoder positional embeddings added; head emits patches.
  PixelPatches<S> decode(const MatX<S>& latent, const MaskedTokens& book,
                         Cache* cache = nullptr) const {
    const int n = cfg.n_tokens();
    if (latent.rows() != Eigen::Index(book.visible_rows.size()))
      throw InvalidInput("decode: latent rows " + std::to_string(latent.rows()) +
                         " != bookkeeping visible count " +
                         std::to_string(book.visible_rows.size()));
    if (int(book.visible_rows.size() + book.masked_rows.size()) != n)
      throw InvalidInput("decode: bookkeeping does not cover the token grid");
    MatX<S> proj = dec_proj.forward(latent);
    MatX<S> z(n, cfg.decoder_dim);
    for (std::size_t i = 0; i < book.visible_rows.size(); ++i)
      z.row(book.visible_rows[i]) = proj.row(Eigen::Index(i));
    for (int r : book.masked_rows) z.row(r) = mask_token.col(0).transpose();
    z += dec_pos;
    if (cache) cache->dec.resize(dec_blocks.size());
    for (std::size_t i = 0; i < dec_blocks.size(); ++i)
      z = dec_blocks[i].forward(z, cache ? &cache->dec[i] : nullptr);
    MatX<S> normed = dec_norm.forward(z, cache ? &cache->dec_normc : nullptr);
    if (cache) cache->dec_normed = normed;
    PixelPatches<S> pred = head.forward(normed);
    if (cache) cache->pred = pred;
    return pred;
  }

  /// Full masked-autoencoding forward pass; fills cache for backward().
  S forward_loss(const VideoClip& clip, const FrameMask& mask, LossScope scope,
                 Cache& cache) const {
    cache.patches = patchify<S>(clip, cfg);
    MatX<S> tokens = cache.patches * embed.w.transpose();
    tokens.rowwise() += embed.b.col(0).transpose();
    tokens += enc_pos;
    auto am = apply_mask<S>(tokens, cfg.t_tok(), cfg.s_tok(), mask);
    cache.book = std::move(am.bookkeeping);
    cache.enc_out = encode(am.visible, &cache.enc);
    decode(cache.enc_out, cache.book, &cache);
    return loss_from_cache(mask, scope, cache);
  }

  S loss_from_cache(const FrameMask& mask, LossScope scope,
                    const Cache& cache) const {
    return reconstruction_loss(cache.pred, cache.patches, mask, scope);
  }

  /// Mean squared error over the selected token rows.
  S reconstruction_loss(const PixelPatches<S>& pred,
                        const PixelPatches<S>& target, const FrameMask& mask,
                        LossScope scope) const {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
      throw InvalidInput("reconstruction_loss: shape mismatch " +
                         std::to_string(pred.rows()) + "x" +
                         std::to_string(pred.cols()) + " vs " +
                         std::to_string(target.rows()) + "x" +
                         std::to_string(target.cols()));
    if (scope == LossScope::kMaskedOnly && mask.masked_count == 0)
      throw InvalidInput("reconstruction_loss: masked_only with empty mask");
    const int s = cfg.s_tok();
    S sum = 0;
    std::int64_t count = 0;
    for (int t = 0; t < cfg.t_tok(); ++t) {
      if (scope == LossScope::kMaskedOnly && !mask.is_masked(t)) continue;
      const auto block = pred.middleRows(Eigen::Index(t) * s, s) -
                         target.middleRows(Eigen::Index(t) * s, s);
      sum += block.array().square().sum();
      count += std::int64_t(s) * pred.cols();
    }
    return sum / S(count);
  }

  /// Backprop of forward_loss; accumulates all parameter gradients.
  void backward(const FrameMask& mask, LossScope scope, const Cache& cache) {
    const int s = cfg.s_tok();
    PixelPatches<S> dpred =
        PixelPatches<S>::Zero(cache.pred.rows(), cache.pred.cols());
    std::int64_t count = 0;
    for (int t = 0; t < cfg.t_tok(); ++t) {
      if (scope == LossScope::kMaskedOnly && !mask.is_masked(t)) continue;
      count += std::int64_t(s) * cache.pred.cols();
    }
    for (int t = 0; t < cfg.t_tok(); ++t) {
      if (scope == LossScope::kMaskedOnly && !mask.is_masked(t)) continue;
      dpred.middleRows(Eigen::Index(t) * s, s) =
          S(2) / S(count) *
          (cache.pred.middleRows(Eigen::Index(t) * s, s) -
           cache.patches.middleRows(Eigen::Index(t) * s, s));
    }

    MatX<S> dnormed = head.backward(cache.dec_normed, dpred);
    MatX<S> dz = dec_norm.backward(dnormed, cache.dec_normc);
    for (int i = int(dec_blocks.size()) - 1; i >= 0; --i)
      dz = dec_blocks[i].backward(dz, cache.dec[i]);
    if (cfg.learnable_pos) g_dec_pos += dz;
    for (int r : cache.book.masked_rows)
      g_mask_token.col(0) += dz.row(r).transpose();
    MatX<S> dproj(Eigen::Index(cache.book.visible_rows.size()),
                  cfg.decoder_dim);
    for (std::size_t i = 0; i < cache.book.visible_rows.size(); ++i)
      dproj.row(Eigen::Index(i)) = dz.row(cache.book.visible_rows[i]);
    MatX<S> denc = dec_proj.backward(cache.enc_out, dproj);

    // encoder blocks: replay inputs from caches
    for (int i = int(enc_blocks.size()) - 1; i >= 0; --i)
      denc = enc_blocks[i].backward(denc, cache.enc[i]);

    MatX<S> dtokens = MatX<S>::Zero(cfg.n_tokens(), cfg.embed_dim);
    for (std::size_t i = 0; i < cache.book.visible_rows.size(); ++i)
      dtokens.row(cache.book.visible_rows[i]) = denc.row(Eigen::Index(i));
    if (cfg.learnable_pos) g_enc_pos += dtokens;
    embed.accumulate_grads(cache.patches, dtokens);
  }

  /// Full clip through the frozen encoder, no masking: [t_tok, s_tok, D].
  TokenGrid<S> extract_features(const VideoClip& clip) const {
    TokenGrid<S> grid = embed_tokens(clip);
    grid.tokens = encode(grid.tokens);
    return grid;
  }

  /// Kept slots pass through bit-exactly; the rest are decoder predictions
  /// clamped to [0,1].
  VideoClip reconstruct_clip(const VideoClip& clip,
                             const std::vector<int>& keep_slots) const {
    if (keep_slots.empty())
      throw InvalidInput("reconstruct_clip: keep_slots must be nonempty");
    std::vector<int> keep = keep_slots;
    std::sort(keep.begin(), keep.end());
    for (std::size_t i = 0; i < keep.size(); ++i) {
      if (keep[i] < 0 || keep[i] >= cfg.t_tok())
        throw InvalidInput("reconstruct_clip: slot " + std::to_string(keep[i]) +
                           " out of range [0, " + std::to_string(cfg.t_tok()) +
                           ")");
      if (i > 0 && keep[i] == keep[i - 1])
        throw InvalidInput("reconstruct_clip: duplicate slot " +
                           std::to_string(keep[i]));
    }
    FrameMask mask;
    mask.masked.assign(cfg.t_tok(), 1);
    mask.masked_count = cfg.t_tok() - int(keep.size());
    for (int sl : keep) mask.masked[sl] = 0;

    TokenGrid<S> grid = embed_tokens(clip);
    auto am = apply_mask<S>(grid.tokens, cfg.t_tok(), cfg.s_tok(), mask);
    MatX<S> latent = encode(am.visible);
    PixelPatches<S> pred = decode(latent, am.bookkeeping);
    VideoClip out = unpatchify<S>(pred, cfg);
    for (double& v : out.pixels) v = std::clamp(v, 0.0, 1.0);
    out.clip_id = clip.clip_id;
    out.source_offset = clip.source_offset;
    // copy-through for kept slots
    const std::int64_t per = cfg.clip.pixels_per_frame();
    for (int sl : keep)
      for (int dt = 0; dt < cfg.temporal_patch; ++dt) {
        const int t = sl * cfg.temporal_patch + dt;
        std::copy_n(clip.pixels.begin() + t * per, per,
                    out.pixels.begin() + t * per);
      }
    return out;
  }
};

}  // namespace framers
