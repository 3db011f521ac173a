#include "framers/patches.hpp"

namespace framers {

void ModelConfig::validate() const {
  clip.validate();
  auto fail = [](const std::string& axis, const std::string& why) {
    throw InvalidInput("ModelConfig: " + axis + " " + why);
  };
  if (temporal_patch < 1) fail("temporal_patch", "must be >= 1");
  if (spatial_patch < 1) fail("spatial_patch", "must be >= 1");
  if (clip.t_raw % temporal_patch != 0)
    fail("t_raw", "not divisible by temporal_patch");
  if (clip.height % spatial_patch != 0)
    fail("height", "not divisible by spatial_patch");
  if (clip.width % spatial_patch != 0)
    fail("width", "not divisible by spatial_patch");
  if (embed_dim < 1 || decoder_dim < 1) fail("embed_dim/decoder_dim", "must be >= 1");
  if (encoder_heads < 1 || embed_dim % encoder_heads != 0)
    fail("embed_dim", "not divisible by encoder_heads");
  if (decoder_heads < 1 || decoder_dim % decoder_heads != 0)
    fail("decoder_dim", "not divisible by decoder_heads");
  if (encoder_depth < 0 || decoder_depth < 0) fail("depth", "must be >= 0");
  if (mlp_ratio <= 0) fail("mlp_ratio", "must be positive");
}

ModelConfig ModelConfig::paper_preset() { return ModelConfig{}; }

ModelConfig ModelConfig::toy_preset() {
  ModelConfig cfg;
  cfg.clip.height = 64;
  cfg.clip.width = 64;
  cfg.spatial_patch = 8;
  cfg.embed_dim = 96;
  cfg.encoder_depth = 4;
  cfg.encoder_heads = 4;
  cfg.decoder_dim = 48;
  cfg.decoder_depth = 2;
  cfg.decoder_heads = 2;
  return cfg;
}

ModelConfig ModelConfig::tiny_preset() {
  ModelConfig cfg;
  cfg.clip.t_raw = 4;
  cfg.clip.height = 4;
  cfg.clip.width = 4;
  cfg.spatial_patch = 2;  // s_tok = 4, t_tok = 2
  cfg.embed_dim = 8;
  cfg.encoder_depth = 1;
  cfg.encoder_heads = 1;
  cfg.decoder_dim = 8;
  cfg.decoder_depth = 1;
  cfg.decoder_heads = 1;
  return cfg;
}

Matd sinusoid_table(int n_positions, int dim) {
  Matd table(n_positions, dim);
  for (int pos = 0; pos < n_positions; ++pos) {
    for (int i = 0; i < dim / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * i / dim);
      table(pos, 2 * i) = std::sin(pos * freq);
      table(pos, 2 * i + 1) = std::cos(pos * freq);
    }
    if (dim % 2) table(pos, dim - 1) = 0.0;
  }
  return table;
}

}  // namespace framers
