#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "framers/checkpoint.hpp"
#include "framers/codec.hpp"
#include "framers/config.hpp"
#include "framers/labels.hpp"
#include "framers/mask.hpp"
#include "framers/model.hpp"
#include "framers/patches.hpp"
#include "framers/selector.hpp"
#include "framers/train.hpp"

namespace py = pybind11;
using namespace framers;

using Sf = float;

namespace {

py::array_t<double> clip_to_array(const VideoClip& clip) {
  const ClipSpec& s = clip.spec;
  py::array_t<double> out({s.t_raw, s.height, s.width, s.channels});
  std::copy(clip.pixels.begin(), clip.pixels.end(),
            out.mutable_data());
  return out;
}

VideoClip clip_from_array(py::array_t<double, py::array::c_style |
                                                  py::array::forcecast>
                              arr,
                          int stride, const std::string& clip_id,
                          int source_offset) {
  if (arr.ndim() != 4)
    throw InvalidInput("clip array must be [t, height, width, channels]");
  VideoClip clip;
  clip.spec.t_raw = int(arr.shape(0));
  clip.spec.height = int(arr.shape(1));
  clip.spec.width = int(arr.shape(2));
  clip.spec.channels = int(arr.shape(3));
  clip.spec.stride = stride;
  clip.spec.validate();
  clip.clip_id = clip_id;
  clip.source_offset = source_offset;
  clip.pixels.assign(arr.data(), arr.data() + arr.size());
  clip.validate();
  return clip;
}

template <class S>
py::array_t<S> mat_to_array(const MatX<S>& m) {
  py::array_t<S> out({Eigen::Index(m.rows()), Eigen::Index(m.cols())});
  std::copy(m.data(), m.data() + m.size(), out.mutable_data());
  return out;
}

template <class S>
MatX<S> mat_from_array(
    py::array_t<S, py::array::c_style | py::array::forcecast> arr) {
  if (arr.ndim() != 2) throw InvalidInput("expected a 2-d array");
  MatX<S> m(arr.shape(0), arr.shape(1));
  std::copy(arr.data(), arr.data() + arr.size(), m.data());
  return m;
}

struct PyModel {
  FrameMAE<Sf> model;
  std::string hash;

  static PyModel load(const std::filesystem::path& dir) {
    PyModel pm;
    CheckpointInfo info;
    pm.model = load_framemae<Sf>(dir, &info);
    pm.hash = info.model_hash;
    return pm;
  }
  static PyModel init(const ModelConfig& cfg, std::uint64_t seed) {
    PyModel pm;
    pm.model = FrameMAE<Sf>::init(cfg, seed);
    pm.hash = framemae_hash(pm.model);
    return pm;
  }
};

struct PySelector {
  Selector<Sf> sel;
  std::string paired_hash;

  static PySelector load(const std::filesystem::path& dir) {
    PySelector ps;
    ps.sel = load_selector<Sf>(dir, &ps.paired_hash);
    return ps;
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Frame-masked video autoencoder core";

  py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
  py::register_exception<ArtifactError>(m, "ArtifactError", PyExc_RuntimeError);

  py::class_<ClipSpec>(m, "ClipSpec")
      .def(py::init<>())
      .def_readwrite("t_raw", &ClipSpec::t_raw)
      .def_readwrite("stride", &ClipSpec::stride)
      .def_readwrite("height", &ClipSpec::height)
      .def_readwrite("width", &ClipSpec::width)
      .def_readwrite("channels", &ClipSpec::channels)
      .def("validate", &ClipSpec::validate);

  py::class_<VideoClip>(m, "VideoClip")
      .def(py::init(&clip_from_array), py::arg("pixels"), py::arg("stride") = 2,
           py::arg("clip_id") = "", py::arg("source_offset") = 0)
      .def_readonly("spec", &VideoClip::spec)
      .def_readwrite("clip_id", &VideoClip::clip_id)
      .def_readwrite("source_offset", &VideoClip::source_offset)
      .def_property_readonly("pixels", &clip_to_array);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("clip", &ModelConfig::clip)
      .def_readwrite("temporal_patch", &ModelConfig::temporal_patch)
      .def_readwrite("spatial_patch", &ModelConfig::spatial_patch)
      .def_readwrite("embed_dim", &ModelConfig::embed_dim)
      .def_readwrite("encoder_depth", &ModelConfig::encoder_depth)
      .def_readwrite("encoder_heads", &ModelConfig::encoder_heads)
      .def_readwrite("decoder_dim", &ModelConfig::decoder_dim)
      .def_readwrite("decoder_depth", &ModelConfig::decoder_depth)
      .def_readwrite("decoder_heads", &ModelConfig::decoder_heads)
      .def_readwrite("mlp_ratio", &ModelConfig::mlp_ratio)
      .def_readwrite("learnable_pos", &ModelConfig::learnable_pos)
      .def_readwrite("trainable_mask_token", &ModelConfig::trainable_mask_token)
      .def("t_tok", &ModelConfig::t_tok)
      .def("s_tok", &ModelConfig::s_tok)
      .def("n_tokens", &ModelConfig::n_tokens)
      .def("patch_dim", &ModelConfig::patch_dim)
      .def("validate", &ModelConfig::validate)
      .def_static("paper_preset", &ModelConfig::paper_preset)
      .def_static("toy_preset", &ModelConfig::toy_preset)
      .def_static("tiny_preset", &ModelConfig::tiny_preset);

  m.def("n_combos", &n_combos, py::arg("n"), py::arg("k"));
  m.def(
      "combo_to_slots",
      [](std::uint64_t index, int k, int t_tok) {
        return combo_to_slots(ComboIndex{index, k}, t_tok);
      },
      py::arg("index"), py::arg("k"), py::arg("t_tok"));
  m.def(
      "slots_to_combo",
      [](const std::vector<int>& slots, int t_tok) {
        return slots_to_combo(slots, t_tok).index;
      },
      py::arg("slots"), py::arg("t_tok"));
  m.def(
      "make_frame_mask",
      [](int t_tok, int masked_count, std::uint64_t seed) {
        const FrameMask mask = make_frame_mask(t_tok, masked_count, seed);
        std::vector<bool> out(mask.masked.begin(), mask.masked.end());
        return out;
      },
      py::arg("t_tok"), py::arg("masked_count"), py::arg("seed"));

  m.def(
      "patchify",
      [](const VideoClip& clip, const ModelConfig& cfg) {
        return mat_to_array(patchify<double>(clip, cfg));
      },
      py::arg("clip"), py::arg("config"));
  m.def(
      "unpatchify",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> arr,
         const ModelConfig& cfg) {
        return clip_to_array(unpatchify<double>(mat_from_array(arr), cfg));
      },
      py::arg("patches"), py::arg("config"));

  m.def(
      "make_planted_clip",
      [](const ClipSpec& spec, int temporal_patch,
         const std::vector<int>& slots, std::uint64_t seed,
         const std::string& clip_id) {
        PlantedClip pc =
            make_planted_clip(spec, temporal_patch, slots, seed, clip_id);
        return py::make_tuple(pc.clip, pc.planted_slots);
      },
      py::arg("spec"), py::arg("temporal_patch"), py::arg("slots"),
      py::arg("seed"), py::arg("clip_id") = "");
  m.def(
      "make_planted_dataset",
      [](const ClipSpec& spec, int temporal_patch, int n_clips, int k_planted,
         std::uint64_t seed) {
        std::vector<py::tuple> out;
        for (PlantedClip& pc :
             make_planted_dataset(spec, temporal_patch, n_clips, k_planted,
                                  seed))
          out.push_back(py::make_tuple(pc.clip, pc.planted_slots));
        return out;
      },
      py::arg("spec"), py::arg("temporal_patch"), py::arg("n_clips"),
      py::arg("k_planted"), py::arg("seed"));

  py::class_<PyModel>(m, "Model")
      .def_static("load", &PyModel::load, py::arg("checkpoint_dir"))
      .def_static("init", &PyModel::init, py::arg("config"), py::arg("seed"))
      .def_readonly("hash", &PyModel::hash)
      .def_property_readonly(
          "config", [](const PyModel& pm) { return pm.model.cfg; })
      .def(
          "save",
          [](PyModel& pm, const std::filesystem::path& dir, std::int64_t step,
             std::uint64_t seed) { save_framemae(dir, pm.model, step, seed); },
          py::arg("dir"), py::arg("step") = 0, py::arg("seed") = 0)
      .def(
          "extract_features",
          [](const PyModel& pm, const VideoClip& clip) {
            return mat_to_array(pm.model.extract_features(clip).tokens);
          },
          py::arg("clip"))
      .def(
          "reconstruct",
          [](const PyModel& pm, const VideoClip& clip,
             const std::vector<int>& keep_slots) {
            return pm.model.reconstruct_clip(clip, keep_slots);
          },
          py::arg("clip"), py::arg("keep_slots"))
      .def(
          "rank_combos",
          [](const PyModel& pm, const VideoClip& clip, int k) {
            LabelRecord rec = rank_combos(clip, pm.model, pm.hash, k);
            return py::make_tuple(rec.losses, rec.ranking, rec.gt_label);
          },
          py::arg("clip"), py::arg("k") = 2)
      .def(
          "masked_loss",
          [](const PyModel& pm, const VideoClip& clip,
             const std::vector<int>& keep_slots) {
            const FrameMask mask = mask_from_combo(
                slots_to_combo(keep_slots, pm.model.cfg.t_tok()),
                pm.model.cfg.t_tok());
            typename FrameMAE<Sf>::Cache cache;
            return double(pm.model.forward_loss(
                clip, mask, LossScope::kMaskedOnly, cache));
          },
          py::arg("clip"), py::arg("keep_slots"));

  py::class_<PySelector>(m, "Selector")
      .def_static("load", &PySelector::load, py::arg("checkpoint_dir"))
      .def_readonly("paired_hash", &PySelector::paired_hash)
      .def(
          "logits",
          [](const PySelector& ps,
             py::array_t<Sf, py::array::c_style | py::array::forcecast>
                 features) {
            VecX<Sf> v = ps.sel.forward(mat_from_array<Sf>(features));
            return std::vector<double>(v.data(), v.data() + v.size());
          },
          py::arg("features"))
      .def(
          "predict",
          [](const PySelector& ps,
             py::array_t<Sf, py::array::c_style | py::array::forcecast>
                 features) {
            VecX<Sf> v = ps.sel.forward(mat_from_array<Sf>(features));
            int best = 0;
            for (int c = 1; c < int(v.size()); ++c)
              if (v(c) > v(best)) best = c;
            return best;
          },
          py::arg("features"));

  m.def(
      "compress",
      [](PyModel& pm, const VideoClip& clip, const std::string& policy, int k,
         std::uint64_t seed, PySelector* selector) {
        std::vector<std::uint8_t> blob = compress_clip(
            pm.model, selector ? &selector->sel : nullptr, clip,
            policy_from_string(policy), k, seed);
        return py::bytes(reinterpret_cast<const char*>(blob.data()),
                         blob.size());
      },
      py::arg("model"), py::arg("clip"), py::arg("policy") = "uniform",
      py::arg("k") = 2, py::arg("seed") = 0, py::arg("selector") = nullptr);
  m.def(
      "decompress",
      [](PyModel& pm, const py::bytes& data) {
        const std::string s = data;
        std::vector<std::uint8_t> blob(s.begin(), s.end());
        return decompress_clip(blob, pm.model);
      },
      py::arg("model"), py::arg("data"));
  m.def(
      "frrs_meta",
      [](const py::bytes& data) {
        const std::string s = data;
        std::vector<std::uint8_t> blob(s.begin(), s.end());
        const FrrsMeta meta = read_frrs_meta(blob);
        py::dict d;
        d["format_version"] = meta.format_version;
        d["clip_id"] = meta.clip_id;
        d["keep_slots"] = meta.keep_slots;
        d["policy"] = meta.policy;
        d["model_hash"] = meta.model_hash;
        d["temporal_patch"] = meta.temporal_patch;
        return d;
      },
      py::arg("data"));

  m.def(
      "pretrain",
      [](const std::vector<VideoClip>& clips, const ModelConfig& cfg,
         std::int64_t steps, int batch_size, int masked_count, double lr,
         std::uint64_t seed) {
        PretrainConfig pt;
        pt.steps = steps;
        pt.batch_size = batch_size;
        pt.masked_count = masked_count;
        pt.optim.lr = lr;
        TrainState<Sf> st = pretrain<Sf>(clips, cfg, pt, seed);
        PyModel pm;
        pm.model = std::move(st.model);
        pm.hash = framemae_hash(pm.model);
        std::vector<py::tuple> trace;
        for (const TraceRow& r : st.trace)
          trace.push_back(py::make_tuple(r.step, r.lr, r.loss));
        return py::make_tuple(std::move(pm), trace);
      },
      py::arg("clips"), py::arg("config"), py::arg("steps") = 100,
      py::arg("batch_size") = 8, py::arg("masked_count") = 3,
      py::arg("lr") = 1e-3, py::arg("seed") = 0);
}
