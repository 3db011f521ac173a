#include "framers/labels.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace framers {

namespace fs = std::filesystem;
using nlohmann::json;

void LabelRecord::validate() const {
  const std::size_t n = losses.size();
  if (ranking.size() != n)
    throw InvalidInput("LabelRecord: ranking size != losses size");
  std::vector<char> seen(n, 0);
  for (int r : ranking) {
    if (r < 0 || std::size_t(r) >= n || seen[r])
      throw InvalidInput("LabelRecord: ranking is not a permutation");
    seen[r] = 1;
  }
  for (std::size_t i = 0; i + 1 < n; ++i)
    if (losses[ranking[i]] > losses[ranking[i + 1]])
      throw InvalidInput("LabelRecord: ranking not sorted by loss");
  for (double l : losses)
    if (!std::isfinite(l) || l < 0)
      throw InvalidInput("LabelRecord: losses must be finite and non-negative");
  if (gt_label != ranking[0])
    throw InvalidInput("LabelRecord: gt_label != argmin");
}

namespace {

json record_to_json(const LabelRecord& rec) {
  return json{{"clip_id", rec.clip_id},
              {"losses", rec.losses},
              {"ranking", rec.ranking},
              {"gt_label", rec.gt_label},
              {"model_hash", rec.model_hash}};
}

LabelRecord record_from_json(const json& j) {
  LabelRecord rec;
  rec.clip_id = j.at("clip_id").get<std::string>();
  rec.losses = j.at("losses").get<std::vector<double>>();
  rec.ranking = j.at("ranking").get<std::vector<int>>();
  rec.gt_label = j.at("gt_label").get<int>();
  rec.model_hash = j.at("model_hash").get<std::string>();
  return rec;
}

}  // namespace

std::vector<std::string> existing_label_ids(const fs::path& out_dir,
                                            const std::string& model_hash) {
  const fs::path manifest_path = out_dir / "labels_manifest.json";
  if (!fs::exists(manifest_path)) return {};
  json m;
  std::ifstream(manifest_path) >> m;
  const std::string have_hash = m.at("model_hash").get<std::string>();
  if (have_hash != model_hash)
    throw ArtifactError(
        "label dataset in " + out_dir.string() + " was built with model " +
        have_hash + "; refusing to mix with model " + model_hash);
  std::vector<std::string> ids;
  std::ifstream in(out_dir / "labels.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ids.push_back(json::parse(line).at("clip_id").get<std::string>());
  }
  return ids;
}

std::vector<LabelRecord> read_label_dataset(const fs::path& out_dir,
                                            std::string* model_hash_out) {
  const fs::path file = out_dir / "labels.jsonl";
  std::ifstream in(file);
  if (!in) throw ArtifactError("label file not found: " + file.string());
  std::vector<LabelRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      records.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ArtifactError("bad label record at " + file.string() + ":" +
                          std::to_string(lineno) + ": " + e.what());
    }
  }
  if (model_hash_out) {
    json m;
    std::ifstream(out_dir / "labels_manifest.json") >> m;
    *model_hash_out = m.at("model_hash").get<std::string>();
  }
  return records;
}

LabelDatasetStats write_label_dataset(const std::vector<LabelRecord>& fresh,
                                      const fs::path& out_dir,
                                      const std::string& model_hash,
                                      int classes) {
  fs::create_directories(out_dir);
  std::vector<LabelRecord> all;
  if (fs::exists(out_dir / "labels.jsonl")) {
    std::string have_hash;
    all = read_label_dataset(out_dir, &have_hash);
    if (have_hash != model_hash)
      throw ArtifactError("label dataset in " + out_dir.string() +
                          " was built with model " + have_hash +
                          "; refusing to mix with model " + model_hash);
  }
  for (const LabelRecord& rec : fresh) {
    rec.validate();
    all.push_back(rec);
  }
  // canonical order: sorted by clip_id, so completion order never matters
  std::sort(all.begin(), all.end(),
            [](const LabelRecord& a, const LabelRecord& b) {
              return a.clip_id < b.clip_id;
            });
  std::ofstream out(out_dir / "labels.jsonl");
  for (const LabelRecord& rec : all) out << record_to_json(rec).dump() << "\n";

  json m;
  m["format_version"] = 1;
  m["model_hash"] = model_hash;
  m["classes"] = classes;
  m["count"] = all.size();
  std::ofstream(out_dir / "labels_manifest.json") << m.dump(2) << "\n";

  LabelDatasetStats stats;
  stats.evaluated = int(fresh.size());
  stats.total = int(all.size());
  return stats;
}

}  // namespace framers
