#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "framers/checkpoint.hpp"
#include "framers/labels.hpp"
#include "framers/patches.hpp"

using namespace framers;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("framers_labels_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

LabelRecord sample_record(const std::string& id, const std::string& hash) {
  LabelRecord rec;
  rec.clip_id = id;
  rec.losses = {0.3, 0.1, 0.2, 0.4};
  rec.ranking = {1, 2, 0, 3};
  rec.gt_label = 1;
  rec.model_hash = hash;
  return rec;
}

}  // namespace

TEST_CASE("record validation catches every malformation") {
  LabelRecord rec = sample_record("clip-a", "h");
  CHECK_NOTHROW(rec.validate());

  SUBCASE("size mismatch") {
    rec.ranking.pop_back();
    CHECK_THROWS_AS(rec.validate(), InvalidInput);
  }
  SUBCASE("duplicate entry") {
    rec.ranking = {1, 1, 0, 3};
    CHECK_THROWS_AS(rec.validate(), InvalidInput);
  }
  SUBCASE("out of range entry") {
    rec.ranking = {1, 2, 0, 4};
    CHECK_THROWS_AS(rec.validate(), InvalidInput);
  }
  SUBCASE("not sorted") {
    rec.ranking = {0, 1, 2, 3};
    CHECK_THROWS_AS(rec.validate(), InvalidInput);
  }
  SUBCASE("negative loss") {
    rec.losses[2] = -0.2;
    rec.ranking = {2, 1, 0, 3};
    rec.gt_label = 2;
    CHECK_THROWS_AS(rec.validate(), InvalidInput);
  }
  SUBCASE("non-finite loss") {
    rec.losses[3] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(rec.validate(), InvalidInput);
  }
  SUBCASE("label disagrees with argmin") {
    rec.gt_label = 2;
    CHECK_THROWS_AS(rec.validate(), InvalidInput);
  }
  SUBCASE("ties are fine") {
    rec.losses = {0.2, 0.2, 0.2, 0.2};
    rec.ranking = {0, 1, 2, 3};
    rec.gt_label = 0;
    CHECK_NOTHROW(rec.validate());
  }
}

TEST_CASE("combo losses match the closed form when the head is zeroed") {
  const ModelConfig cfg = ModelConfig::toy_preset();
  FrameMAE<double> model = FrameMAE<double>::init(cfg, 3);
  model.head.w.setZero();
  model.head.b.setZero();

  PlantedClip pc = make_planted_clip(cfg.clip, cfg.temporal_patch, {1, 6}, 17);
  // prediction is identically zero, so each combo's loss is the mean squared
  // pixel over its masked slots
  const PixelPatches<double> patches = patchify<double>(pc.clip, cfg);
  const int t_tok = cfg.t_tok();
  const int s_tok = cfg.s_tok();
  std::vector<double> slot_energy(t_tok, 0.0);
  for (int t = 0; t < t_tok; ++t)
    for (int s = 0; s < s_tok; ++s)
      slot_energy[t] += patches.row(t * s_tok + s).squaredNorm();

  LabelRecord rec = rank_combos(pc.clip, model, "zero-head", 2);
  rec.validate();
  const std::uint64_t n = n_combos(t_tok, 2);
  REQUIRE(rec.losses.size() == n);
  std::vector<double> expected(n);
  for (std::uint64_t c = 0; c < n; ++c) {
    const std::vector<int> keep = combo_to_slots({c, 2}, t_tok);
    double e = std::accumulate(slot_energy.begin(), slot_energy.end(), 0.0);
    for (int s : keep) e -= slot_energy[s];
    expected[c] = e / (double(t_tok - 2) * s_tok * cfg.patch_dim());
    CHECK(rec.losses[c] == doctest::Approx(expected[c]).epsilon(1e-12));
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return expected[a] < expected[b];
  });
  CHECK(rec.ranking == order);
  CHECK(rec.gt_label == order[0]);
  // both planted slots kept -> nothing informative is masked -> lowest loss
  CHECK(rec.gt_label == int(slots_to_combo({1, 6}, t_tok).index));
}

TEST_CASE("a constant clip ties every combo and keeps the identity ranking") {
  const ModelConfig cfg = ModelConfig::toy_preset();
  FrameMAE<double> model = FrameMAE<double>::init(cfg, 3);
  model.head.w.setZero();
  model.head.b.setZero();

  VideoClip clip;
  clip.spec = cfg.clip;
  clip.clip_id = "flat";
  clip.pixels.assign(std::size_t(cfg.clip.pixel_count()), kConstantGray);

  LabelRecord rec = rank_combos(clip, model, "zero-head", 2);
  std::vector<int> identity(rec.ranking.size());
  std::iota(identity.begin(), identity.end(), 0);
  CHECK(rec.ranking == identity);
  CHECK(rec.gt_label == 0);
  for (double l : rec.losses)
    CHECK(l == doctest::Approx(kConstantGray * kConstantGray).epsilon(1e-12));
}

TEST_CASE("ranking a clip twice gives identical records") {
  const ModelConfig cfg = ModelConfig::toy_preset();
  FrameMAE<double> model = FrameMAE<double>::init(cfg, 8);
  PlantedClip pc = make_planted_clip(cfg.clip, cfg.temporal_patch, {0, 3}, 4);
  LabelRecord a = rank_combos(pc.clip, model, "h", 2);
  LabelRecord b = rank_combos(pc.clip, model, "h", 2);
  CHECK(a.losses == b.losses);
  CHECK(a.ranking == b.ranking);
  CHECK(a.gt_label == b.gt_label);
  a.validate();
  for (double l : a.losses) CHECK(l > 0.0);
}

TEST_CASE("a poisoned model is reported, not recorded") {
  const ModelConfig cfg = ModelConfig::toy_preset();
  FrameMAE<double> model = FrameMAE<double>::init(cfg, 8);
  model.head.b(0, 0) = std::numeric_limits<double>::infinity();
  PlantedClip pc = make_planted_clip(cfg.clip, cfg.temporal_patch, {0, 3}, 4);
  CHECK_THROWS_WITH_AS(rank_combos(pc.clip, model, "h", 2),
                       doctest::Contains("non-finite"), ArtifactError);
}

TEST_CASE("label files round-trip and stay sorted by clip id") {
  TempDir tmp("roundtrip");
  std::vector<LabelRecord> fresh = {sample_record("clip-b", "h1"),
                                    sample_record("clip-a", "h1")};
  LabelDatasetStats stats = write_label_dataset(fresh, tmp.path, "h1", 4);
  CHECK(stats.evaluated == 2);
  CHECK(stats.total == 2);

  std::string hash;
  std::vector<LabelRecord> back = read_label_dataset(tmp.path, &hash);
  CHECK(hash == "h1");
  REQUIRE(back.size() == 2);
  CHECK(back[0].clip_id == "clip-a");
  CHECK(back[1].clip_id == "clip-b");
  CHECK(back[0].losses == fresh[0].losses);
  CHECK(back[0].ranking == fresh[0].ranking);
  CHECK(back[0].gt_label == fresh[0].gt_label);
  CHECK(back[0].model_hash == "h1");

  nlohmann::json m;
  std::ifstream(tmp.path / "labels_manifest.json") >> m;
  CHECK(m.at("classes").get<int>() == 4);
  CHECK(m.at("count").get<int>() == 2);
  CHECK(m.at("model_hash").get<std::string>() == "h1");

  // appending keeps earlier records and re-sorts
  LabelDatasetStats again =
      write_label_dataset({sample_record("clip-0", "h1")}, tmp.path, "h1", 4);
  CHECK(again.total == 3);
  back = read_label_dataset(tmp.path);
  CHECK(back[0].clip_id == "clip-0");
}

TEST_CASE("mixing label sets from different models is refused") {
  TempDir tmp("mix");
  write_label_dataset({sample_record("clip-a", "h1")}, tmp.path, "h1", 4);
  CHECK_THROWS_WITH_AS(
      write_label_dataset({sample_record("clip-b", "h2")}, tmp.path, "h2", 4),
      doctest::Contains("refusing to mix"), ArtifactError);
  CHECK_THROWS_WITH_AS(existing_label_ids(tmp.path, "h2"),
                       doctest::Contains("refusing to mix"), ArtifactError);
  CHECK(existing_label_ids(tmp.path, "h1") ==
        std::vector<std::string>{"clip-a"});
  CHECK(existing_label_ids(tmp.path / "nowhere", "h1").empty());
}

TEST_CASE("invalid fresh records never reach disk") {
  TempDir tmp("invalid");
  LabelRecord bad = sample_record("clip-a", "h1");
  bad.ranking = {1, 1, 0, 3};
  CHECK_THROWS_AS(write_label_dataset({bad}, tmp.path, "h1", 4), InvalidInput);
  CHECK_FALSE(fs::exists(tmp.path / "labels.jsonl"));
}

TEST_CASE("read errors carry the file and line") {
  TempDir tmp("readerr");
  CHECK_THROWS_WITH_AS(read_label_dataset(tmp.path),
                       doctest::Contains("label file not found"),
                       ArtifactError);

  std::ofstream out(tmp.path / "labels.jsonl");
  out << "{\"clip_id\":\"a\",\"losses\":[0.1],\"ranking\":[0],"
         "\"gt_label\":0,\"model_hash\":\"h\"}\n";
  out << "{broken\n";
  out.close();
  CHECK_THROWS_WITH_AS(read_label_dataset(tmp.path), doctest::Contains(":2"),
                       ArtifactError);
}

TEST_CASE("the oracle loop resumes instead of recomputing") {
  TempDir tmp("resume");
  const ModelConfig cfg = ModelConfig::toy_preset();
  FrameMAE<float> model = FrameMAE<float>::init(cfg, 12);
  const std::string hash = framemae_hash(model);

  auto planted = make_planted_dataset(cfg.clip, cfg.temporal_patch, 3, 2, 21);
  std::vector<VideoClip> clips;
  for (auto& pc : planted) clips.push_back(pc.clip);

  std::vector<VideoClip> first(clips.begin(), clips.begin() + 2);
  LabelDatasetStats s1 = build_label_dataset(first, model, hash, tmp.path, 2);
  CHECK(s1.evaluated == 2);
  CHECK(s1.skipped == 0);
  CHECK(s1.total == 2);

  LabelDatasetStats s2 = build_label_dataset(clips, model, hash, tmp.path, 2);
  CHECK(s2.evaluated == 1);
  CHECK(s2.skipped == 2);
  CHECK(s2.total == 3);

  std::vector<LabelRecord> back = read_label_dataset(tmp.path);
  REQUIRE(back.size() == 3);
  for (const LabelRecord& rec : back) {
    rec.validate();
    CHECK(rec.model_hash == hash);
    CHECK(rec.losses.size() == 28);
  }

  FrameMAE<float> other = FrameMAE<float>::init(cfg, 13);
  CHECK_THROWS_WITH_AS(
      build_label_dataset(clips, other, framemae_hash(other), tmp.path, 2),
      doctest::Contains("refusing to mix"), ArtifactError);
}
