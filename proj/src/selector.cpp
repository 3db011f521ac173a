#include "framers/selector.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace framers {

using nlohmann::json;

std::string ablation_table_text(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "blocks  dropout  top-1%   top-5%   best-epoch\n";
  char line[96];
  for (const AblationRow& r : rows) {
    std::snprintf(line, sizeof line, "%-7d %-8.2f %-8.2f %-8.2f %d\n",
                  r.blocks, r.dropout, 100.0 * r.top1, 100.0 * r.top5,
                  r.best_epoch);
    out << line;
  }
  out << "reference (full scale): 3 blocks, 0.10 dropout -> top-1 27.10, "
         "top-5 50.52, best epoch 224; not expected at this scale\n";
  return out.str();
}

void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ArtifactError("cannot write " + path.string());
  out << "blocks,dropout,top1,top5,best_epoch\n";
  for (const AblationRow& r : rows)
    out << r.blocks << "," << r.dropout << "," << r.top1 << "," << r.top5
        << "," << r.best_epoch << "\n";
}

void write_selector_trace_csv(const std::vector<SelectorEpochRow>& trace,
                              const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ArtifactError("cannot write " + path.string());
  out << "epoch,train_loss,top1,top5\n";
  for (const SelectorEpochRow& r : trace)
    out << r.epoch << "," << r.train_loss << "," << r.top1 << "," << r.top5
        << "\n";
}

json selector_config_to_json(const SelectorConfig& cfg) {
  return json{{"in_dim", cfg.in_dim},     {"t_tok", cfg.t_tok},
              {"k", cfg.k},               {"proj_dim", cfg.proj_dim},
              {"blocks", cfg.blocks},     {"hidden", cfg.widths()},
              {"dropout", cfg.dropout},   {"classes", cfg.classes}};
}

SelectorConfig selector_config_from_json(const json& j) {
  SelectorConfig cfg;
  cfg.in_dim = j.at("in_dim").get<int>();
  cfg.t_tok = j.at("t_tok").get<int>();
  cfg.k = j.at("k").get<int>();
  cfg.proj_dim = j.at("proj_dim").get<int>();
  cfg.blocks = j.at("blocks").get<int>();
  cfg.hidden = j.at("hidden").get<std::vector<int>>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.classes = j.at("classes").get<int>();
  cfg.validate();
  return cfg;
}

}  // namespace framers
