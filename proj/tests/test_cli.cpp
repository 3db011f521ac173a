#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <opencv2/imgcodecs.hpp>

#include "framers/clip.hpp"
#include "framers/codec.hpp"
#include "framers/config.hpp"
#include "framers/labels.hpp"

using namespace framers;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("framers_cli_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string bin() { return FRAMERS_BIN; }

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int line_count(const std::string& text) {
  int n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

RunResult run_cli(const std::string& cmd, const fs::path& io_dir) {
  static int counter = 0;
  const fs::path out = io_dir / ("stdout." + std::to_string(counter));
  const fs::path err = io_dir / ("stderr." + std::to_string(counter));
  ++counter;
  const int status =
      std::system((cmd + " >" + out.string() + " 2>" + err.string()).c_str());
  RunResult res;
  res.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  res.out = slurp(out);
  res.err = slurp(err);
  return res;
}

}  // namespace

TEST_CASE("the toy pipeline runs end to end through the binary") {
  TempDir tmp("pipe");
  const std::vector<std::string> sets = {
      "data.clips=4",          "pretrain.steps=10", "pretrain.batch_size=2",
      "pretrain.log_every=1", "selector.epochs=10"};
  std::string base = " --preset toy";
  for (const std::string& s : sets) base += " --set " + s;
  const fs::path w1 = tmp.path / "run1";
  const fs::path w1b = tmp.path / "run1b";
  const fs::path w2 = tmp.path / "run2";

  RunResult pre = run_cli(
      bin() + " pretrain" + base + " --seed 5 --out-dir " + w1.string(), tmp.path);
  REQUIRE(pre.code == 0);
  CHECK(pre.out.find("pretrained 10 steps") != std::string::npos);
  CHECK(fs::exists(w1 / "checkpoint" / "manifest.json"));
  CHECK(fs::exists(w1 / "effective_config.yaml"));
  const std::string trace1 = slurp(w1 / "pretrain_trace.csv");
  CHECK(trace1.rfind("step,lr,loss\n", 0) == 0);
  CHECK(line_count(trace1) == 11);

  // same seed reruns byte-identically, a different seed does not
  REQUIRE(run_cli(bin() + " pretrain" + base + " --seed 5 --out-dir " +
                      w1b.string(), tmp.path).code == 0);
  CHECK(slurp(w1b / "pretrain_trace.csv") == trace1);
  REQUIRE(run_cli(bin() + " pretrain" + base + " --seed 6 --out-dir " +
                      w2.string(), tmp.path).code == 0);
  CHECK(slurp(w2 / "pretrain_trace.csv") != trace1);

  RunResult lab = run_cli(
      bin() + " gen-labels" + base + " --seed 5 --out-dir " + w1.string(), tmp.path);
  REQUIRE(lab.code == 0);
  CHECK(lab.out.find("evaluated 4, skipped 0, total 4") != std::string::npos);
  std::string label_hash;
  CHECK(read_label_dataset(w1 / "labels", &label_hash).size() == 4);
  RunResult lab2 = run_cli(
      bin() + " gen-labels" + base + " --seed 5 --out-dir " + w1.string(), tmp.path);
  REQUIRE(lab2.code == 0);
  CHECK(lab2.out.find("evaluated 0, skipped 4, total 4") != std::string::npos);

  RunResult sel = run_cli(
      bin() + " train-selector" + base + " --seed 5 --out-dir " + w1.string(),
      tmp.path);
  REQUIRE(sel.code == 0);
  CHECK(sel.out.find("selector: best epoch") != std::string::npos);
  CHECK(fs::exists(w1 / "selector" / "manifest.json"));
  CHECK(slurp(w1 / "selector_trace.csv")
            .rfind("epoch,train_loss,top1,top5\n", 0) == 0);

  const fs::path blob_path = w1 / "c.frrs";
  RunResult cmp = run_cli(bin() + " compress" + base +
                              " --seed 5 --out-dir " + w1.string() +
                              " --index 1 --policy oracle --out " +
                              blob_path.string(), tmp.path);
  REQUIRE(cmp.code == 0);
  CHECK(cmp.out.find("kept slots [") != std::string::npos);
  CHECK(slurp(blob_path).rfind("FRRS", 0) == 0);
  RunResult dec = run_cli(bin() + " decompress" + base +
                              " --seed 5 --out-dir " + w1.string() +
                              " --input " + blob_path.string() + " --out " +
                              (w1 / "recon").string(), tmp.path);
  REQUIRE(dec.code == 0);

  // kept frames survive the full binary round trip untouched
  std::vector<std::string> mirror = sets;
  mirror.push_back("seed=5");
  RunConfig run = load_run_config(std::nullopt, "toy", mirror, false);
  std::vector<PlantedClip> ds =
      make_planted_dataset(run.model.clip, run.model.temporal_patch,
                           run.data.clips, run.data.planted_slots, run.seed);
  const VideoClip& src = ds[1].clip;
  VideoClip recon = read_clip_raw(w1 / "recon");
  REQUIRE(recon.spec == src.spec);
  FrrsMeta meta = read_frrs_meta(read_frrs_file(blob_path));
  REQUIRE(meta.clip_id == src.clip_id);
  const int tp = run.model.temporal_patch;
  for (int slot : meta.keep_slots)
    for (int t = slot * tp; t < (slot + 1) * tp; ++t)
      for (int y = 0; y < src.spec.height; ++y)
        for (int x = 0; x < src.spec.width; ++x)
          for (int c = 0; c < 3; ++c)
            CHECK(recon.at(t, y, x, c) == src.at(t, y, x, c));

  RunResult ev = run_cli(bin() + " eval" + base + " --seed 5 --out-dir " +
                             w1.string() +
                             " --policies uniform,random,oracle", tmp.path);
  REQUIRE(ev.code == 0);
  const std::string report1 = slurp(w1 / "policy_report.csv");
  CHECK(report1.rfind("policy,clips,retained_fraction,mean_mse,mean_psnr\n",
                      0) == 0);
  CHECK(line_count(report1) == 4);
  CHECK(fs::exists(w1 / "policy_report.json"));
  REQUIRE(run_cli(bin() + " eval" + base + " --seed 5 --out-dir " +
                      w1b.string() + " --policies uniform,random,oracle",
                  tmp.path).code == 0);
  CHECK(slurp(w1b / "policy_report.csv") == report1);

  RunResult evl = run_cli(bin() + " eval" + base + " --seed 5 --out-dir " +
                              w1.string() + " --selector " +
                              (w1 / "selector").string() +
                              " --policies learned,oracle", tmp.path);
  REQUIRE(evl.code == 0);
  CHECK(evl.out.find("learned") != std::string::npos);

  // a selector paired with a different backbone is rejected
  RunResult cross = run_cli(bin() + " eval" + base + " --seed 6 --out-dir " +
                                w2.string() + " --selector " +
                                (w1 / "selector").string() +
                                " --policies learned", tmp.path);
  CHECK(cross.code == 2);
  CHECK(cross.err.find("selector was trained against model") !=
        std::string::npos);

  RunResult viz = run_cli(bin() + " visualize" + base + " --seed 5 --out-dir " +
                              w1.string() + " --clips 2 --policy uniform --out " +
                              (w1 / "grid.png").string(), tmp.path);
  REQUIRE(viz.code == 0);
  cv::Mat img = cv::imread((w1 / "grid.png").string(), cv::IMREAD_COLOR);
  REQUIRE_FALSE(img.empty());
  CHECK(img.cols == 16 * 64 + 15 * 2);
  CHECK(img.rows == 2 * (3 * 64 + 2 * 2) + 6);

  RunResult abl = run_cli(
      bin() + " ablation" + base + " --seed 5 --out-dir " + w1.string(), tmp.path);
  REQUIRE(abl.code == 0);
  CHECK(abl.out.find("reference (full scale)") != std::string::npos);
  CHECK(slurp(w1 / "ablation.csv")
            .rfind("blocks,dropout,top1,top5,best_epoch\n", 0) == 0);

  RunResult badclip = run_cli(bin() + " compress" + base +
                                  " --seed 5 --out-dir " + w1.string() +
                                  " --clip-id nope", tmp.path);
  CHECK(badclip.code == 2);
  CHECK(badclip.err.find("not found in the dataset") != std::string::npos);
  RunResult badviz = run_cli(bin() + " visualize" + base +
                                 " --seed 5 --out-dir " + w1.string() +
                                 " --clips 99", tmp.path);
  CHECK(badviz.code == 1);
  CHECK(badviz.err.find("usage error") != std::string::npos);
}

TEST_CASE("FRAMERS_SEED overrides the seed flag") {
  TempDir tmp("env");
  const std::string base = " make-data --preset toy --set data.clips=3";
  REQUIRE(run_cli(bin() + base + " --seed 5 --out-dir " +
                      (tmp.path / "a").string(), tmp.path).code == 0);
  REQUIRE(run_cli("FRAMERS_SEED=5 " + bin() + base + " --seed 777 --out-dir " +
                      (tmp.path / "b").string(), tmp.path).code == 0);
  PlantedDataset a = read_planted_dataset(tmp.path / "a" / "data");
  PlantedDataset b = read_planted_dataset(tmp.path / "b" / "data");
  REQUIRE(a.clips.size() == 3);
  REQUIRE(b.clips.size() == 3);
  CHECK(a.clips[0].clip.pixels == b.clips[0].clip.pixels);
  CHECK(a.clips[2].planted_slots == b.clips[2].planted_slots);
  CHECK(slurp(tmp.path / "b" / "effective_config.yaml").find("seed: 5") !=
        std::string::npos);
}

TEST_CASE("exit codes separate usage errors from runtime failures") {
  TempDir tmp("codes");
  CHECK(run_cli(bin(), tmp.path).code == 1);
  CHECK(run_cli(bin() + " bogus", tmp.path).code == 1);
  CHECK(run_cli(bin() + " pretrain --no-such-flag", tmp.path).code == 1);
  CHECK(run_cli(bin() + " decompress", tmp.path).code == 1);

  RunResult help = run_cli(bin() + " --help", tmp.path);
  CHECK(help.code == 0);
  CHECK(help.out.find("pretrain") != std::string::npos);
  CHECK(help.out.find("visualize") != std::string::npos);

  RunResult badpreset = run_cli(bin() + " pretrain --preset nope --out-dir " +
                                    (tmp.path / "x").string(), tmp.path);
  CHECK(badpreset.code == 1);
  CHECK(badpreset.err.find("usage error") != std::string::npos);

  RunResult nock = run_cli(bin() + " gen-labels --preset toy --checkpoint " +
                               (tmp.path / "missing").string() + " --out-dir " +
                               (tmp.path / "x").string(), tmp.path);
  CHECK(nock.code == 2);
  CHECK(nock.err.find("error:") != std::string::npos);

  CHECK(run_cli(bin() + " pretrain --config " +
                    (tmp.path / "absent.yaml").string(), tmp.path).code == 2);
}
