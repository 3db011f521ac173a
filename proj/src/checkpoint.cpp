#include "framers/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace framers {

namespace fs = std::filesystem;
using nlohmann::json;

void save_npy(const fs::path& path, const Matd& array) {
  std::ostringstream dict;
  dict << "{'descr': '<f8', 'fortran_order': False, 'shape': (" << array.rows()
       << ", " << array.cols() << "), }";
  std::string header = dict.str();
  // pad so that magic + 2 + 2 + len(header) is a multiple of 64
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArtifactError("cannot write " + path.string());
  out.write("\x93NUMPY\x01\x00", 8);
  const std::uint16_t hlen = std::uint16_t(header.size());
  out.write(reinterpret_cast<const char*>(&hlen), 2);
  out.write(header.data(), std::streamsize(header.size()));
  // Matd is row-major, matching C order.
  out.write(reinterpret_cast<const char*>(array.data()),
            std::streamsize(array.size() * sizeof(double)));
}

Matd load_npy(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot read " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0)
    throw ArtifactError("not an npy file: " + path.string());
  std::uint16_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 2);
  std::string header(hlen, '\0');
  in.read(header.data(), hlen);
  if (header.find("'<f8'") == std::string::npos)
    throw ArtifactError("unsupported npy dtype in " + path.string());
  if (header.find("'fortran_order': False") == std::string::npos)
    throw ArtifactError("unsupported npy order in " + path.string());
  const auto lp = header.find('(');
  const auto rp = header.find(')', lp);
  if (lp == std::string::npos || rp == std::string::npos)
    throw ArtifactError("bad npy shape in " + path.string());
  std::string shape = header.substr(lp + 1, rp - lp - 1);
  for (char& c : shape)
    if (c == ',') c = ' ';
  std::istringstream ss(shape);
  Eigen::Index rows = 0, cols = 1;
  ss >> rows;
  if (!(ss >> cols)) cols = 1;
  Matd array(rows, cols);
  in.read(reinterpret_cast<char*>(array.data()),
          std::streamsize(array.size() * sizeof(double)));
  if (!in) throw ArtifactError("truncated npy file: " + path.string());
  return array;
}

json model_config_to_json(const ModelConfig& cfg) {
  return json{{"t_raw", cfg.clip.t_raw},
              {"stride", cfg.clip.stride},
              {"height", cfg.clip.height},
              {"width", cfg.clip.width},
              {"channels", cfg.clip.channels},
              {"temporal_patch", cfg.temporal_patch},
              {"spatial_patch", cfg.spatial_patch},
              {"embed_dim", cfg.embed_dim},
              {"encoder_depth", cfg.encoder_depth},
              {"encoder_heads", cfg.encoder_heads},
              {"decoder_dim", cfg.decoder_dim},
              {"decoder_depth", cfg.decoder_depth},
              {"decoder_heads", cfg.decoder_heads},
              {"mlp_ratio", cfg.mlp_ratio},
              {"learnable_pos", cfg.learnable_pos},
              {"trainable_mask_token", cfg.trainable_mask_token}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.clip.t_raw = j.at("t_raw").get<int>();
  cfg.clip.stride = j.at("stride").get<int>();
  cfg.clip.height = j.at("height").get<int>();
  cfg.clip.width = j.at("width").get<int>();
  cfg.clip.channels = j.at("channels").get<int>();
  cfg.temporal_patch = j.at("temporal_patch").get<int>();
  cfg.spatial_patch = j.at("spatial_patch").get<int>();
  cfg.embed_dim = j.at("embed_dim").get<int>();
  cfg.encoder_depth = j.at("encoder_depth").get<int>();
  cfg.encoder_heads = j.at("encoder_heads").get<int>();
  cfg.decoder_dim = j.at("decoder_dim").get<int>();
  cfg.decoder_depth = j.at("decoder_depth").get<int>();
  cfg.decoder_heads = j.at("decoder_heads").get<int>();
  cfg.mlp_ratio = j.at("mlp_ratio").get<double>();
  cfg.learnable_pos = j.value("learnable_pos", false);
  cfg.trainable_mask_token = j.value("trainable_mask_token", true);
  return cfg;
}

namespace {

struct Fnv1a {
  std::uint64_t h = 14695981039346656037ull;
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  }
  void update(const std::string& s) { update(s.data(), s.size()); }
};

}  // namespace

std::string hash_arrays(const std::string& config_dump,
                        const NamedArrays& arrays) {
  Fnv1a fnv;
  fnv.update(config_dump);
  for (const auto& [name, m] : arrays) {
    fnv.update(name);
    const std::int64_t dims[2] = {m.rows(), m.cols()};
    fnv.update(dims, sizeof dims);
    fnv.update(m.data(), std::size_t(m.size()) * sizeof(double));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)fnv.h);
  return buf;
}

void write_array_checkpoint(const fs::path& dir, const CheckpointInfo& info,
                            const NamedArrays& arrays) {
  fs::create_directories(dir / "params");
  json m;
  m["format_version"] = info.format_version;
  m["kind"] = info.kind;
  m["config"] = info.config;
  m["step"] = info.step;
  m["seed"] = info.seed;
  m["model_hash"] = info.model_hash;
  json plist = json::array();
  for (const auto& [name, arr] : arrays) {
    plist.push_back({{"name", name}, {"rows", arr.rows()}, {"cols", arr.cols()}});
    save_npy(dir / "params" / (name + ".npy"), arr);
  }
  m["params"] = plist;
  std::ofstream(dir / "manifest.json") << m.dump(2) << "\n";
}

CheckpointInfo read_checkpoint_info(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in)
    throw ArtifactError("checkpoint manifest not found: " +
                        (dir / "manifest.json").string());
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw ArtifactError("bad checkpoint manifest in " + dir.string() + ": " +
                        e.what());
  }
  CheckpointInfo info;
  info.format_version = m.at("format_version").get<int>();
  info.kind = m.at("kind").get<std::string>();
  info.config = m.at("config");
  info.step = m.at("step").get<std::int64_t>();
  info.seed = m.at("seed").get<std::uint64_t>();
  info.model_hash = m.at("model_hash").get<std::string>();
  return info;
}

LoadedCheckpoint read_array_checkpoint(const fs::path& dir) {
  LoadedCheckpoint ck;
  ck.info = read_checkpoint_info(dir);
  std::ifstream in(dir / "manifest.json");
  json m;
  in >> m;
  NamedArrays ordered;
  for (const auto& p : m.at("params")) {
    const std::string name = p.at("name").get<std::string>();
    Matd arr = load_npy(dir / "params" / (name + ".npy"));
    if (arr.rows() != p.at("rows").get<Eigen::Index>() ||
        arr.cols() != p.at("cols").get<Eigen::Index>())
      throw ArtifactError("parameter '" + name +
                          "' shape disagrees with manifest in " + dir.string());
    ordered.emplace_back(name, arr);
    ck.arrays[name] = std::move(arr);
  }
  // verify integrity against the recorded hash
  const std::string h = hash_arrays(ck.info.config.dump(), ordered);
  if (h != ck.info.model_hash)
    throw ArtifactError("checkpoint hash mismatch in " + dir.string() +
                        ": manifest says " + ck.info.model_hash +
                        ", arrays hash to " + h);
  return ck;
}

}  // namespace framers
