#include "framers/mask.hpp"

#include <algorithm>
#include <string>

#include "framers/rng.hpp"

namespace framers {

std::uint64_t n_combos(int n, int r) {
  if (n < 0 || n > 64 || r < 0 || r > n)
    throw InvalidInput("n_combos: bad arguments n=" + std::to_string(n) +
                       " r=" + std::to_string(r));
  r = std::min(r, n - r);
  std::uint64_t c = 1;
  for (int i = 1; i <= r; ++i) {
    // c * (n - r + i) / i is always integral at this point.
    c = c / i * std::uint64_t(n - r + i) + c % i * std::uint64_t(n - r + i) / i;
  }
  return c;
}

FrameMask make_frame_mask(int t_tok, int masked_count, std::uint64_t rng_seed) {
  if (t_tok <= 0) throw InvalidInput("make_frame_mask: t_tok must be positive");
  if (masked_count < 0 || masked_count > t_tok)
    throw InvalidInput("make_frame_mask: masked_count " +
                       std::to_string(masked_count) + " out of [0, " +
                       std::to_string(t_tok) + "]");
  Rng rng = make_rng(rng_seed, kTagMask);
  std::vector<int> pool(t_tok);
  for (int i = 0; i < t_tok; ++i) pool[i] = i;
  FrameMask mask;
  mask.masked.assign(t_tok, 0);
  mask.masked_count = masked_count;
  for (int j = 0; j < masked_count; ++j) {
    const int pick = j + int(uniform_index(rng, std::uint64_t(t_tok - j)));
    std::swap(pool[j], pool[pick]);
    mask.masked[pool[j]] = 1;
  }
  return mask;
}

std::vector<int> combo_to_slots(const ComboIndex& c, int t_tok) {
  const std::uint64_t total = n_combos(t_tok, c.k);
  if (c.index >= total)
    throw InvalidInput("combo_to_slots: index " + std::to_string(c.index) +
                       " out of [0, " + std::to_string(total) + ")");
  std::vector<int> slots;
  slots.reserve(c.k);
  std::uint64_t rem = c.index;
  int next = 0;
  for (int picked = 0; picked < c.k; ++picked) {
    for (int s = next; s < t_tok; ++s) {
      const std::uint64_t block = n_combos(t_tok - 1 - s, c.k - 1 - picked);
      if (rem < block) {
        slots.push_back(s);
        next = s + 1;
        break;
      }
      rem -= block;
    }
  }
  return slots;
}

ComboIndex slots_to_combo(const std::vector<int>& slots, int t_tok) {
  const int k = int(slots.size());
  if (k == 0) throw InvalidInput("slots_to_combo: empty slot list");
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i] < 0 || slots[i] >= t_tok)
      throw InvalidInput("slots_to_combo: slot " + std::to_string(slots[i]) +
                         " out of range [0, " + std::to_string(t_tok) + ")");
    if (i > 0 && slots[i] <= slots[i - 1])
      throw InvalidInput("slots_to_combo: slots must be strictly increasing");
  }
  ComboIndex c;
  c.k = k;
  int prev = 0;
  for (int picked = 0; picked < k; ++picked) {
    for (int s = prev; s < slots[picked]; ++s)
      c.index += n_combos(t_tok - 1 - s, k - 1 - picked);
    prev = slots[picked] + 1;
  }
  return c;
}

FrameMask mask_from_combo(const ComboIndex& c, int t_tok) {
  const std::vector<int> keep = combo_to_slots(c, t_tok);
  FrameMask mask;
  mask.masked.assign(t_tok, 1);
  mask.masked_count = t_tok - int(keep.size());
  for (int s : keep) mask.masked[s] = 0;
  return mask;
}

}  // namespace framers
