#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "framers/model.hpp"
#include "framers/selector.hpp"
#include "framers/train.hpp"

namespace framers {

struct DataConfig {
  int clips = 8;
  int planted_slots = 2;
  std::string dir;  // empty = generate planted clips
};

struct CodecConfig {
  int keep = 2;
  std::string policy = "oracle";
};

// Declarative run configuration. Precedence, lowest to highest:
// preset defaults, config file, --set overrides, FRAMERS_SEED (seed only).
struct RunConfig {
  std::string preset = "toy";
  std::uint64_t seed = 42;
  std::string out_dir = "out";
  ModelConfig model;
  PretrainConfig pretrain;
  SelectorConfig selector;
  SelectorTrainConfig selector_train;
  DataConfig data;
  CodecConfig codec;
};

/// Pure expansion of a preset name ("toy" | "paper") into full defaults.
RunConfig preset_run_config(const std::string& preset);

/// Applies a dotted-path override like "pretrain.steps=2000". Unknown
/// keys raise InvalidInput naming the path.
void apply_override(RunConfig& run, const std::string& assignment);

/// File (optional) then overrides then FRAMERS_SEED. A preset named in
/// the file or in preset_flag re-expands defaults before other keys apply.
RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                          const std::string& preset_flag,
                          const std::vector<std::string>& overrides,
                          bool apply_env = true);

/// Selector config sized for the run's model and keep count.
SelectorConfig selector_for(const RunConfig& run);

std::string run_config_yaml(const RunConfig& run);

/// Drops effective_config.yaml (reloadable) and consumed.json (artifact
/// path -> hash for every checkpoint the command read) into out_dir.
void write_effective_config(const std::filesystem::path& out_dir,
                            const RunConfig& run,
                            const std::map<std::string, std::string>& consumed);

LossScope scope_from_string(const std::string& name);
std::string scope_name(LossScope scope);

}  // namespace framers
