#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "framers/common.hpp"
#include "framers/model.hpp"

namespace framers {

// Checkpoint layout: <dir>/manifest.json plus one .npy file per parameter
// under <dir>/params/. Arrays are float64 C-order, so a reload restores the
// model bit-exactly and numpy can open the files directly.

void save_npy(const std::filesystem::path& path, const Matd& array);
Matd load_npy(const std::filesystem::path& path);

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

using NamedArrays = std::vector<std::pair<std::string, Matd>>;

/// FNV-1a over the config string and every array's name, shape, and bytes.
std::string hash_arrays(const std::string& config_dump,
                        const NamedArrays& arrays);

struct CheckpointInfo {
  int format_version = 1;
  std::string kind;  // "framemae" | "selector"
  nlohmann::json config;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  std::string model_hash;
};

void write_array_checkpoint(const std::filesystem::path& dir,
                            const CheckpointInfo& info,
                            const NamedArrays& arrays);

struct LoadedCheckpoint {
  CheckpointInfo info;
  std::map<std::string, Matd> arrays;
};

LoadedCheckpoint read_array_checkpoint(const std::filesystem::path& dir);

/// Reads just the manifest (hash checks without loading arrays).
CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir);

template <class S>
NamedArrays collect_arrays(FrameMAE<S>& model) {
  NamedArrays arrays;
  model.visit_arrays([&](const std::string& name, MatX<S>& v) {
    arrays.emplace_back(name, v.template cast<double>());
  });
  return arrays;
}

template <class S>
std::string framemae_hash(FrameMAE<S>& model) {
  return hash_arrays(model_config_to_json(model.cfg).dump(),
                     collect_arrays(model));
}

template <class S>
void save_framemae(const std::filesystem::path& dir, FrameMAE<S>& model,
                   std::int64_t step, std::uint64_t seed) {
  CheckpointInfo info;
  info.kind = "framemae";
  info.config = model_config_to_json(model.cfg);
  info.step = step;
  info.seed = seed;
  NamedArrays arrays = collect_arrays(model);
  info.model_hash = hash_arrays(info.config.dump(), arrays);
  write_array_checkpoint(dir, info, arrays);
}

template <class S>
FrameMAE<S> load_framemae(const std::filesystem::path& dir,
                          CheckpointInfo* info_out = nullptr) {
  LoadedCheckpoint ck = read_array_checkpoint(dir);
  if (ck.info.kind != "framemae")
    throw ArtifactError("checkpoint at " + dir.string() + " has kind '" +
                        ck.info.kind + "', expected 'framemae'");
  FrameMAE<S> model;
  model.cfg = model_config_from_json(ck.info.config);
  model.cfg.validate();
  // build zero-shaped layers, then fill from arrays
  model = FrameMAE<S>::init(model.cfg, 0);
  model.visit_arrays([&](const std::string& name, MatX<S>& v) {
    auto it = ck.arrays.find(name);
    if (it == ck.arrays.end())
      throw ArtifactError("checkpoint missing parameter '" + name + "'");
    if (it->second.rows() != v.rows() || it->second.cols() != v.cols())
      throw ArtifactError("checkpoint parameter '" + name + "' has shape " +
                          std::to_string(it->second.rows()) + "x" +
                          std::to_string(it->second.cols()) + ", expected " +
                          std::to_string(v.rows()) + "x" +
                          std::to_string(v.cols()));
    v = it->second.template cast<S>();
  });
  if (info_out) *info_out = ck.info;
  return model;
}

}  // namespace framers
