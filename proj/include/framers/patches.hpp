#pragma once

#include <cmath>
#include <string>

#include "framers/clip.hpp"
#include "framers/common.hpp"

namespace framers {

// Architecture and token geometry. Paper-scale defaults; the toy preset
// (64x64, patch 8, D=96) is what tests and acceptance runs use.
struct ModelConfig {
  ClipSpec clip;
  int temporal_patch = 2;
  int spatial_patch = 16;
  int embed_dim = 768;
  int encoder_depth = 12;
  int encoder_heads = 12;
  int decoder_dim = 384;
  int decoder_depth = 4;
  int decoder_heads = 6;
  double mlp_ratio = 4.0;
  bool learnable_pos = false;
  bool trainable_mask_token = true;

  int t_tok() const { return clip.t_raw / temporal_patch; }
  int s_tok() const {
    return (clip.height / spatial_patch) * (clip.width / spatial_patch);
  }
  int n_tokens() const { return t_tok() * s_tok(); }
  /// Pixel values per token: temporal_patch * spatial_patch^2 * channels.
  int patch_dim() const {
    return temporal_patch * spatial_patch * spatial_patch * clip.channels;
  }
  void validate() const;

  static ModelConfig paper_preset();
  static ModelConfig toy_preset();
  /// Minimal dims for finite-difference gradient checks.
  static ModelConfig tiny_preset();
};

/// Embedded tokens [t_tok * s_tok, D] with grid metadata.
template <class S>
struct TokenGrid {
  MatX<S> tokens;  // row = t * s_tok + s
  int t_tok = 0;
  int s_tok = 0;
};

// Pixel patches [t_tok * s_tok, P]. Row order is time-major then row-major
// spatial; within a patch the order is (dt, y, x, channel).
template <class S>
using PixelPatches = MatX<S>;

template <class S>
PixelPatches<S> patchify(const VideoClip& clip, const ModelConfig& cfg) {
  cfg.validate();
  if (!(clip.spec == cfg.clip))
    throw InvalidInput("patchify: clip spec does not match config");
  const int tp = cfg.temporal_patch, sp = cfg.spatial_patch;
  const int gh = cfg.clip.height / sp, gw = cfg.clip.width / sp;
  const int C = cfg.clip.channels;
  PixelPatches<S> out(cfg.n_tokens(), cfg.patch_dim());
  for (int tt = 0; tt < cfg.t_tok(); ++tt)
    for (int gy = 0; gy < gh; ++gy)
      for (int gx = 0; gx < gw; ++gx) {
        const Eigen::Index row = Eigen::Index(tt) * cfg.s_tok() + gy * gw + gx;
        Eigen::Index i = 0;
        for (int dt = 0; dt < tp; ++dt)
          for (int py = 0; py < sp; ++py)
            for (int px = 0; px < sp; ++px)
              for (int c = 0; c < C; ++c)
                out(row, i++) = static_cast<S>(
                    clip.at(tt * tp + dt, gy * sp + py, gx * sp + px, c));
      }
  return out;
}

/// Exact inverse of patchify. Does not validate the pixel range: callers
/// clamp predictions before treating the result as a clip.
template <class S>
VideoClip unpatchify(const PixelPatches<S>& patches, const ModelConfig& cfg) {
  cfg.validate();
  if (patches.rows() != cfg.n_tokens() || patches.cols() != cfg.patch_dim())
    throw InvalidInput("unpatchify: patches are " +
                       std::to_string(patches.rows()) + "x" +
                       std::to_string(patches.cols()) + ", config wants " +
                       std::to_string(cfg.n_tokens()) + "x" +
                       std::to_string(cfg.patch_dim()));
  const int tp = cfg.temporal_patch, sp = cfg.spatial_patch;
  const int gh = cfg.clip.height / sp, gw = cfg.clip.width / sp;
  const int C = cfg.clip.channels;
  VideoClip clip;
  clip.spec = cfg.clip;
  clip.pixels.resize(cfg.clip.pixel_count());
  for (int tt = 0; tt < cfg.t_tok(); ++tt)
    for (int gy = 0; gy < gh; ++gy)
      for (int gx = 0; gx < gw; ++gx) {
        const Eigen::Index row = Eigen::Index(tt) * cfg.s_tok() + gy * gw + gx;
        Eigen::Index i = 0;
        for (int dt = 0; dt < tp; ++dt)
          for (int py = 0; py < sp; ++py)
            for (int px = 0; px < sp; ++px)
              for (int c = 0; c < C; ++c)
                clip.at(tt * tp + dt, gy * sp + py, gx * sp + px, c) =
                    static_cast<double>(patches(row, i++));
      }
  return clip;
}

/// Fixed sinusoidal table [n_positions, dim] over the flattened (t, s) index.
Matd sinusoid_table(int n_positions, int dim);

/// Linear map of each pixel cube to a token: tokens = patches * w^T + b.
template <class S>
TokenGrid<S> cube_embed(const VideoClip& clip, const ModelConfig& cfg,
                        const MatX<S>& w, const VecX<S>& b) {
  if (w.rows() != cfg.embed_dim || w.cols() != cfg.patch_dim())
    throw InvalidInput("cube_embed: weight is " + std::to_string(w.rows()) +
                       "x" + std::to_string(w.cols()) + ", config wants " +
                       std::to_string(cfg.embed_dim) + "x" +
                       std::to_string(cfg.patch_dim()));
  const PixelPatches<S> patches = patchify<S>(clip, cfg);
  TokenGrid<S> grid;
  grid.t_tok = cfg.t_tok();
  grid.s_tok = cfg.s_tok();
  grid.tokens.noalias() = patches * w.transpose();
  grid.tokens.rowwise() += b.transpose();
  return grid;
}

}  // namespace framers
