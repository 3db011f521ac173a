#pragma once

#include <cstdint>
#include <vector>

#include "framers/common.hpp"

namespace framers {

/// Which temporal slots are hidden from the encoder.
struct FrameMask {
  std::vector<std::uint8_t> masked;  // length t_tok, 1 = hidden
  int masked_count = 0;

  int t_tok() const { return int(masked.size()); }
  bool is_masked(int slot) const { return masked[slot] != 0; }
};

// Canonical name for a k-subset of temporal slots. Index is the position of
// the sorted subset in lexicographic order, e.g. for (t_tok=8, k=2):
// 0 -> (0,1), 7 -> (1,2), 27 -> (6,7).
struct ComboIndex {
  std::uint64_t index = 0;
  int k = 2;
};

/// C(n, r) in u64; throws on overflow (n capped at 64).
std::uint64_t n_combos(int n, int r);

/// Uniformly random mask with exactly masked_count hidden slots.
FrameMask make_frame_mask(int t_tok, int masked_count, std::uint64_t rng_seed);

std::vector<int> combo_to_slots(const ComboIndex& c, int t_tok);
ComboIndex slots_to_combo(const std::vector<int>& slots, int t_tok);

/// Mask whose combo slots are visible and everything else hidden.
FrameMask mask_from_combo(const ComboIndex& c, int t_tok);

/// Visible rows of a token grid plus the bookkeeping needed to scatter them
/// back. Flat row index = slot * s_tok + spatial index.
struct MaskedTokens {
  std::vector<int> visible_rows;  // ascending flat indices
  std::vector<int> masked_rows;   // ascending flat indices
};

template <class S>
struct ApplyMaskResult {
  MatX<S> visible;  // [v, D], v = (t_tok - m) * s_tok
  MaskedTokens bookkeeping;
};

template <class S>
ApplyMaskResult<S> apply_mask(const MatX<S>& tokens, int t_tok, int s_tok,
                              const FrameMask& mask) {
  if (mask.t_tok() != t_tok)
    throw InvalidInput("apply_mask: mask length " +
                       std::to_string(mask.t_tok()) + " != t_tok " +
                       std::to_string(t_tok));
  if (tokens.rows() != Eigen::Index(t_tok) * s_tok)
    throw InvalidInput("apply_mask: token rows " +
                       std::to_string(tokens.rows()) + " != t_tok*s_tok");
  ApplyMaskResult<S> out;
  const int v_slots = t_tok - mask.masked_count;
  out.visible.resize(Eigen::Index(v_slots) * s_tok, tokens.cols());
  out.bookkeeping.visible_rows.reserve(std::size_t(v_slots) * s_tok);
  out.bookkeeping.masked_rows.reserve(std::size_t(mask.masked_count) * s_tok);
  Eigen::Index vi = 0;
  for (int t = 0; t < t_tok; ++t) {
    for (int s = 0; s < s_tok; ++s) {
      const int row = t * s_tok + s;
      if (mask.is_masked(t)) {
        out.bookkeeping.masked_rows.push_back(row);
      } else {
        out.bookkeeping.visible_rows.push_back(row);
        out.visible.row(vi++) = tokens.row(row);
      }
    }
  }
  return out;
}

}  // namespace framers
