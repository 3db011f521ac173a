#include "framers/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

namespace framers {

namespace fs = std::filesystem;

LossScope scope_from_string(const std::string& name) {
  if (name == "masked") return LossScope::kMaskedOnly;
  if (name == "all") return LossScope::kAll;
  throw InvalidInput("unknown loss scope '" + name + "' (expected masked|all)");
}

std::string scope_name(LossScope scope) {
  return scope == LossScope::kMaskedOnly ? "masked" : "all";
}

RunConfig preset_run_config(const std::string& preset) {
  RunConfig run;
  run.preset = preset;
  if (preset == "toy") {
    run.model = ModelConfig::toy_preset();
    run.pretrain.steps = 800;
    run.pretrain.batch_size = 8;
    run.pretrain.optim.lr = 1e-3;
    run.data.clips = 8;
  } else if (preset == "paper") {
    run.model = ModelConfig::paper_preset();
    run.pretrain.steps = 16000;
    run.pretrain.batch_size = 16;
    run.data.clips = 400;
  } else {
    throw InvalidInput("unknown preset '" + preset + "' (expected toy|paper)");
  }
  run.selector.proj_dim = std::min(384, run.model.embed_dim * 4);
  return run;
}

namespace {

using Setter = std::function<void(RunConfig&, const YAML::Node&)>;

template <class T>
T node_as(const YAML::Node& node, const std::string& key) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw InvalidInput("config key '" + key + "' has an invalid value");
  }
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"seed",
       [](RunConfig& r, const YAML::Node& n) {
         r.seed = node_as<std::uint64_t>(n, "seed");
       }},
      {"out_dir",
       [](RunConfig& r, const YAML::Node& n) {
         r.out_dir = node_as<std::string>(n, "out_dir");
       }},
      {"model.t_raw",
       [](RunConfig& r, const YAML::Node& n) {
         r.model.clip.t_raw = node_as<int>(n, "model.t_raw");
       }},
      {"model.stride",
       [](RunConfig& r, const YAML::Node& n) {
         r.model.clip.stride = node_as<int>(n, "model.stride");
       }},
      {"model.height",
       [](RunConfig& r, const YAML::Node& n) {
         r.model.clip.height = node_as<int>(n, "model.height");
       }},
      {"model.width",
       [](RunConfig& r, const YAML::Node& n) {
         r.model.clip.width = node_as<int>(n, "model.width");
       }},
      {"model.channels",
       [](RunConfig& r, const YAML::Node& n) {
         r.model.clip.channels = node_as<int>(n, "model.channels");
       }},
      {"model.temporal_patch",
       [](RunConfig& r, const YAML::Node& n) {
         r.model.temporal_patch = node_as<int>(n, "model.temporal_patch");
       }},
      {"model.spatial_patch",
       [](RunConfig& r, const YAML::Node& n) {
         r.model.spatial_patch = node_as<int>(n, "model.spatial_patch");
       }},
      {"model.embed_dim",
       [](RunConfig& r, const YAML::Node& n) {
         r.model.embed_dim = node_as<int>(n, "model.embed_dim");
       }},
      {"model.encoder_depth",
       [](RunConfig& r, const YAML::Node& n) {
         r.model.encoder_depth = node_as<int>(n, "model.encoder_depth");
       }},
      {"model.encoder_heads",
       [](RunConfig& r, const YAML::Node& n) {
         r.model.encoder_heads = node_as<int>(n, "model.encoder_heads");
       }},
      {"model.decoder_dim",
       [](RunConfig& r, const YAML::Node& n) {
         r.model.decoder_dim = node_as<int>(n, "model.decoder_dim");
       }},
      {"model.decoder_depth",
       [](RunConfig& r, const YAML::Node& n) {
         r.model.decoder_depth = node_as<int>(n, "model.decoder_depth");
       }},
      {"model.decoder_heads",
       [](RunConfig& r, const YAML::Node& n) {
         r.model.decoder_heads = node_as<int>(n, "model.decoder_heads");
       }},
      {"model.mlp_ratio",
       [](RunConfig& r, const YAML::Node& n) {
         r.model.mlp_ratio = node_as<double>(n, "model.mlp_ratio");
       }},
      {"model.learnable_pos",
       [](RunConfig& r, const YAML::Node& n) {
         r.model.learnable_pos = node_as<bool>(n, "model.learnable_pos");
       }},
      {"model.trainable_mask_token",
       [](RunConfig& r, const YAML::Node& n) {
         r.model.trainable_mask_token =
             node_as<bool>(n, "model.trainable_mask_token");
       }},
      {"pretrain.steps",
       [](RunConfig& r, const YAML::Node& n) {
         r.pretrain.steps = node_as<std::int64_t>(n, "pretrain.steps");
       }},
      {"pretrain.batch_size",
       [](RunConfig& r, const YAML::Node& n) {
         r.pretrain.batch_size = node_as<int>(n, "pretrain.batch_size");
       }},
      {"pretrain.masked_count",
       [](RunConfig& r, const YAML::Node& n) {
         r.pretrain.masked_count = node_as<int>(n, "pretrain.masked_count");
       }},
      {"pretrain.scope",
       [](RunConfig& r, const YAML::Node& n) {
         r.pretrain.scope =
             scope_from_string(node_as<std::string>(n, "pretrain.scope"));
       }},
      {"pretrain.lr",
       [](RunConfig& r, const YAML::Node& n) {
         r.pretrain.optim.lr = node_as<double>(n, "pretrain.lr");
       }},
      {"pretrain.beta1",
       [](RunConfig& r, const YAML::Node& n) {
         r.pretrain.optim.beta1 = node_as<double>(n, "pretrain.beta1");
       }},
      {"pretrain.beta2",
       [](RunConfig& r, const YAML::Node& n) {
         r.pretrain.optim.beta2 = node_as<double>(n, "pretrain.beta2");
       }},
      {"pretrain.eps",
       [](RunConfig& r, const YAML::Node& n) {
         r.pretrain.optim.eps = node_as<double>(n, "pretrain.eps");
       }},
      {"pretrain.weight_decay",
       [](RunConfig& r, const YAML::Node& n) {
         r.pretrain.optim.weight_decay =
             node_as<double>(n, "pretrain.weight_decay");
       }},
      {"pretrain.warmup_frac",
       [](RunConfig& r, const YAML::Node& n) {
         r.pretrain.optim.warmup_frac =
             node_as<double>(n, "pretrain.warmup_frac");
       }},
      {"pretrain.log_every",
       [](RunConfig& r, const YAML::Node& n) {
         r.pretrain.log_every = node_as<std::int64_t>(n, "pretrain.log_every");
       }},
      {"pretrain.checkpoint_every",
       [](RunConfig& r, const YAML::Node& n) {
         r.pretrain.checkpoint_every =
             node_as<std::int64_t>(n, "pretrain.checkpoint_every");
       }},
      {"selector.proj_dim",
       [](RunConfig& r, const YAML::Node& n) {
         r.selector.proj_dim = node_as<int>(n, "selector.proj_dim");
       }},
      {"selector.blocks",
       [](RunConfig& r, const YAML::Node& n) {
         r.selector.blocks = node_as<int>(n, "selector.blocks");
       }},
      {"selector.hidden",
       [](RunConfig& r, const YAML::Node& n) {
         r.selector.hidden = node_as<std::vector<int>>(n, "selector.hidden");
       }},
      {"selector.dropout",
       [](RunConfig& r, const YAML::Node& n) {
         r.selector.dropout = node_as<double>(n, "selector.dropout");
       }},
      {"selector.epochs",
       [](RunConfig& r, const YAML::Node& n) {
         r.selector_train.epochs = node_as<int>(n, "selector.epochs");
       }},
      {"selector.batch_size",
       [](RunConfig& r, const YAML::Node& n) {
         r.selector_train.batch_size = node_as<int>(n, "selector.batch_size");
       }},
      {"selector.val_frac",
       [](RunConfig& r, const YAML::Node& n) {
         r.selector_train.val_frac = node_as<double>(n, "selector.val_frac");
       }},
      {"selector.lr",
       [](RunConfig& r, const YAML::Node& n) {
         r.selector_train.optim.lr = node_as<double>(n, "selector.lr");
       }},
      {"selector.weight_decay",
       [](RunConfig& r, const YAML::Node& n) {
         r.selector_train.optim.weight_decay =
             node_as<double>(n, "selector.weight_decay");
       }},
      {"data.clips",
       [](RunConfig& r, const YAML::Node& n) {
         r.data.clips = node_as<int>(n, "data.clips");
       }},
      {"data.planted_slots",
       [](RunConfig& r, const YAML::Node& n) {
         r.data.planted_slots = node_as<int>(n, "data.planted_slots");
       }},
      {"data.dir",
       [](RunConfig& r, const YAML::Node& n) {
         r.data.dir = node_as<std::string>(n, "data.dir");
       }},
      {"codec.keep",
       [](RunConfig& r, const YAML::Node& n) {
         r.codec.keep = node_as<int>(n, "codec.keep");
       }},
      {"codec.policy",
       [](RunConfig& r, const YAML::Node& n) {
         r.codec.policy = node_as<std::string>(n, "codec.policy");
       }},
  };
  return table;
}

void apply_key(RunConfig& run, const std::string& key, const YAML::Node& value) {
  auto it = setters().find(key);
  if (it == setters().end())
    throw InvalidInput("unknown config key '" + key + "'");
  it->second(run, value);
}

void apply_file(RunConfig& run, const YAML::Node& root) {
  if (!root.IsMap()) throw InvalidInput("config file root must be a mapping");
  for (const auto& kv : root) {
    const std::string key = kv.first.as<std::string>();
    if (key == "preset") continue;
    if (kv.second.IsMap()) {
      for (const auto& sub : kv.second) {
        const std::string path = key + "." + sub.first.as<std::string>();
        if (sub.second.IsMap())
          throw InvalidInput("unknown config key '" + path + "." +
                             sub.second.begin()->first.as<std::string>() + "'");
        apply_key(run, path, sub.second);
      }
    } else {
      apply_key(run, key, kv.second);
    }
  }
}

}  // namespace

void apply_override(RunConfig& run, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw InvalidInput("override must look like key.path=value, got '" +
                       assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  if (key == "preset")
    throw InvalidInput("preset cannot be set via override; use --preset");
  YAML::Node node;
  try {
    node = YAML::Load(value);
  } catch (const YAML::Exception&) {
    throw InvalidInput("cannot parse override value '" + value + "'");
  }
  apply_key(run, key, node);
}

RunConfig load_run_config(const std::optional<fs::path>& file,
                          const std::string& preset_flag,
                          const std::vector<std::string>& overrides,
                          bool apply_env) {
  YAML::Node root;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ArtifactError("config file not found: " + file->string());
    try {
      root = YAML::Load(in);
    } catch (const YAML::Exception& e) {
      throw InvalidInput("cannot parse config file " + file->string() + ": " +
                         e.what());
    }
    // checked before any lookup: operator[] would quietly mutate a non-map
    if (!root.IsMap())
      throw InvalidInput("config file root must be a mapping");
  }
  std::string preset = "toy";
  if (file && root["preset"]) preset = root["preset"].as<std::string>();
  if (!preset_flag.empty()) preset = preset_flag;
  RunConfig run = preset_run_config(preset);
  if (file) apply_file(run, root);
  for (const std::string& o : overrides) apply_override(run, o);
  if (apply_env) {
    if (const char* env = std::getenv("FRAMERS_SEED")) {
      char* end = nullptr;
      const unsigned long long v = std::strtoull(env, &end, 10);
      if (!end || *end != '\0' || env == end)
        throw InvalidInput("FRAMERS_SEED must be an unsigned integer, got '" +
                           std::string(env) + "'");
      run.seed = v;
    }
  }
  run.model.validate();
  return run;
}

SelectorConfig selector_for(const RunConfig& run) {
  SelectorConfig cfg = run.selector;
  cfg.in_dim = run.model.embed_dim;
  cfg.t_tok = run.model.t_tok();
  cfg.k = run.codec.keep;
  cfg.classes = int(n_combos(cfg.t_tok, cfg.k));
  cfg.validate();
  return cfg;
}

std::string run_config_yaml(const RunConfig& run) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "preset" << YAML::Value << run.preset;
  out << YAML::Key << "seed" << YAML::Value << run.seed;
  out << YAML::Key << "out_dir" << YAML::Value << run.out_dir;
  out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "t_raw" << YAML::Value << run.model.clip.t_raw;
  out << YAML::Key << "stride" << YAML::Value << run.model.clip.stride;
  out << YAML::Key << "height" << YAML::Value << run.model.clip.height;
  out << YAML::Key << "width" << YAML::Value << run.model.clip.width;
  out << YAML::Key << "channels" << YAML::Value << run.model.clip.channels;
  out << YAML::Key << "temporal_patch" << YAML::Value
      << run.model.temporal_patch;
  out << YAML::Key << "spatial_patch" << YAML::Value << run.model.spatial_patch;
  out << YAML::Key << "embed_dim" << YAML::Value << run.model.embed_dim;
  out << YAML::Key << "encoder_depth" << YAML::Value << run.model.encoder_depth;
  out << YAML::Key << "encoder_heads" << YAML::Value << run.model.encoder_heads;
  out << YAML::Key << "decoder_dim" << YAML::Value << run.model.decoder_dim;
  out << YAML::Key << "decoder_depth" << YAML::Value << run.model.decoder_depth;
  out << YAML::Key << "decoder_heads" << YAML::Value << run.model.decoder_heads;
  out << YAML::Key << "mlp_ratio" << YAML::Value << run.model.mlp_ratio;
  out << YAML::Key << "learnable_pos" << YAML::Value << run.model.learnable_pos;
  out << YAML::Key << "trainable_mask_token" << YAML::Value
      << run.model.trainable_mask_token;
  out << YAML::EndMap;
  out << YAML::Key << "pretrain" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "steps" << YAML::Value << run.pretrain.steps;
  out << YAML::Key << "batch_size" << YAML::Value << run.pretrain.batch_size;
  out << YAML::Key << "masked_count" << YAML::Value
      << run.pretrain.masked_count;
  out << YAML::Key << "scope" << YAML::Value << scope_name(run.pretrain.scope);
  out << YAML::Key << "lr" << YAML::Value << run.pretrain.optim.lr;
  out << YAML::Key << "beta1" << YAML::Value << run.pretrain.optim.beta1;
  out << YAML::Key << "beta2" << YAML::Value << run.pretrain.optim.beta2;
  out << YAML::Key << "eps" << YAML::Value << run.pretrain.optim.eps;
  out << YAML::Key << "weight_decay" << YAML::Value
      << run.pretrain.optim.weight_decay;
  out << YAML::Key << "warmup_frac" << YAML::Value
      << run.pretrain.optim.warmup_frac;
  out << YAML::Key << "log_every" << YAML::Value << run.pretrain.log_every;
  out << YAML::Key << "checkpoint_every" << YAML::Value
      << run.pretrain.checkpoint_every;
  out << YAML::EndMap;
  out << YAML::Key << "selector" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "proj_dim" << YAML::Value << run.selector.proj_dim;
  out << YAML::Key << "blocks" << YAML::Value << run.selector.blocks;
  out << YAML::Key << "hidden" << YAML::Value << YAML::Flow
      << run.selector.widths();
  out << YAML::Key << "dropout" << YAML::Value << run.selector.dropout;
  out << YAML::Key << "epochs" << YAML::Value << run.selector_train.epochs;
  out << YAML::Key << "batch_size" << YAML::Value
      << run.selector_train.batch_size;
  out << YAML::Key << "val_frac" << YAML::Value << run.selector_train.val_frac;
  out << YAML::Key << "lr" << YAML::Value << run.selector_train.optim.lr;
  out << YAML::Key << "weight_decay" << YAML::Value
      << run.selector_train.optim.weight_decay;
  out << YAML::EndMap;
  out << YAML::Key << "data" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "clips" << YAML::Value << run.data.clips;
  out << YAML::Key << "planted_slots" << YAML::Value
      << run.data.planted_slots;
  out << YAML::Key << "dir" << YAML::Value << run.data.dir;
  out << YAML::EndMap;
  out << YAML::Key << "codec" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "keep" << YAML::Value << run.codec.keep;
  out << YAML::Key << "policy" << YAML::Value << run.codec.policy;
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

void write_effective_config(const fs::path& out_dir, const RunConfig& run,
                            const std::map<std::string, std::string>& consumed) {
  fs::create_directories(out_dir);
  std::ofstream cfg(out_dir / "effective_config.yaml");
  if (!cfg) throw ArtifactError("cannot write effective config in " +
                                out_dir.string());
  cfg << run_config_yaml(run);
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [path, hash] : consumed) j[path] = hash;
  std::ofstream con(out_dir / "consumed.json");
  con << j.dump(2) << "\n";
}

}  // namespace framers
