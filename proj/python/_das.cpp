// Python bindings. Images cross the boundary as float32 arrays shaped (H, W, C)
// with values in [0, 1]; masks as bool arrays shaped (H, W).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "das/attack.hpp"
#include "das/attention.hpp"
#include "das/evalharness.hpp"
#include "das/imageproc.hpp"
#include "das/parallel.hpp"
#include "das/runconfig.hpp"

namespace py = pybind11;
using namespace das;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using BoolArray = py::array_t<bool, py::array::c_style | py::array::forcecast>;

Image to_image(const FloatArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw py::value_error("image must be (H, W) or (H, W, C)");
  const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  if (h <= 0 || w <= 0 || (c != 1 && c != 3)) throw py::value_error("image needs positive size and 1 or 3 channels");
  Image img(w, h, c);
  const float* p = a.data();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) img.at(k, y, x) = p[(static_cast<std::size_t>(y) * w + x) * c + k];
  return img;
}

FloatArray from_image(const Image& img) {
  FloatArray a({img.height, img.width, img.channels});
  float* p = a.mutable_data();
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int k = 0; k < img.channels; ++k)
        p[(static_cast<std::size_t>(y) * img.width + x) * img.channels + k] = img.at(k, y, x);
  return a;
}

BinaryMap to_mask(const BoolArray& a) {
  if (a.ndim() != 2) throw py::value_error("mask must be (H, W)");
  BinaryMap m(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  const bool* p = a.data();
  for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = p[i] ? 1 : 0;
  return m;
}

BoolArray from_mask(const BinaryMap& m) {
  BoolArray a({m.height, m.width});
  bool* p = a.mutable_data();
  for (std::size_t i = 0; i < m.bits.size(); ++i) p[i] = m.bits[i] != 0;
  return a;
}

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

}  // namespace

PYBIND11_MODULE(_das, m) {
  m.doc() = "Attention-distracting adversarial camouflage on a software renderer";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("set_thread_count", [](std::size_t n) { set_thread_count(n); }, py::arg("n"));
  m.def("read_png", [](const std::filesystem::path& p) { return from_image(read_png(p)); }, py::arg("path"));
  m.def("write_png", [](const std::filesystem::path& p, const FloatArray& a) { write_png(p, to_image(a)); },
        py::arg("path"), py::arg("image"));

  m.def("ssim", [](const FloatArray& a, const FloatArray& b) { return ssim(to_image(a), to_image(b)); },
        py::arg("a"), py::arg("b"));
  m.def(
      "canny",
      [](const FloatArray& gray, double sigma, double low, double high) {
        return from_mask(canny(to_image(gray), CannyParams{sigma, low, high}));
      },
      py::arg("gray"), py::arg("sigma") = 1.4, py::arg("low") = 0.1, py::arg("high") = 0.3);
  m.def(
      "connected_components",
      [](const BoolArray& mask, int connectivity) {
        const BinaryMap bm = to_mask(mask);
        const ComponentSet cs = connected_components(bm, Image(bm.width, bm.height, 1, 1.0f), connectivity);
        py::array_t<int> labels({bm.height, bm.width});
        std::copy(cs.labels.begin(), cs.labels.end(), labels.mutable_data());
        return py::make_tuple(labels, cs.count);
      },
      py::arg("mask"), py::arg("connectivity") = 4);

  m.def(
      "distraction_loss",
      [](const FloatArray& map, double tau, int connectivity) {
        if (map.ndim() != 2) throw py::value_error("attention map must be (H, W)");
        AttentionMap am{static_cast<int>(map.shape(1)), static_cast<int>(map.shape(0)),
                        std::vector<float>(map.data(), map.data() + map.size()), false};
        return distraction_loss(am, tau, connectivity);
      },
      py::arg("map"), py::arg("tau") = 0.5, py::arg("connectivity") = 4);
  m.def(
      "evasion_loss",
      [](const FloatArray& t_adv, const FloatArray& t0, const BoolArray& edge, double beta) {
        return evasion_loss(to_image(t_adv).to_tensor(), to_image(t0).to_tensor(), to_mask(edge), beta);
      },
      py::arg("t_adv"), py::arg("t0"), py::arg("edge"), py::arg("beta") = 8.0);
  m.def("smooth_loss", [](const FloatArray& img) { return smooth_loss(to_image(img)); }, py::arg("image"));

  py::class_<RenderCondition>(m, "RenderCondition")
      .def(py::init([](double distance, double yaw, double pitch, double light, int background_id) {
             RenderCondition c{distance, yaw, pitch, light, background_id};
             c.validate();
             return c;
           }),
           py::arg("distance") = 8.0, py::arg("yaw") = 0.0, py::arg("pitch") = 30.0, py::arg("light") = 1.0,
           py::arg("background_id") = 0)
      .def_readwrite("distance", &RenderCondition::distance)
      .def_readwrite("yaw", &RenderCondition::yaw)
      .def_readwrite("pitch", &RenderCondition::pitch)
      .def_readwrite("light", &RenderCondition::light)
      .def_readwrite("background_id", &RenderCondition::background_id)
      .def("__eq__", [](const RenderCondition& a, const RenderCondition& b) { return a == b; })
      .def("__repr__", [](const RenderCondition& c) { return "RenderCondition(" + to_json(c).dump() + ")"; });

  py::class_<Classifier>(m, "Classifier")
      .def_static("load", &Classifier::load, py::arg("dir"))
      .def_static(
          "initialize",
          [](const std::string& arch, int classes, int input_size, std::uint64_t seed) {
            for (const auto& spec : default_architectures(classes, input_size))
              if (spec.name == arch) return Classifier::initialize(spec, seed);
            throw py::value_error("unknown architecture '" + arch + "'");
          },
          py::arg("arch"), py::arg("classes") = 4, py::arg("input_size") = 96, py::arg("seed") = 1,
          "Untrained model with one of the built-in architectures.")
      .def_property_readonly("name", [](const Classifier& c) { return c.spec().name; })
      .def_property_readonly("classes", &Classifier::classes)
      .def_property_readonly("input_size", &Classifier::input_size)
      .def("predict", [](const Classifier& c, const FloatArray& img) { return predict(c, to_image(img)); })
      .def("predict_label", [](const Classifier& c, const FloatArray& img) { return predict_label(c, to_image(img)); })
      .def(
          "attention",
          [](const Classifier& c, const FloatArray& img, int label, const std::string& variant) {
            const AttentionMap am = attention(c, to_image(img), label, parse_attention_variant(variant));
            py::array_t<float> out({am.height, am.width});
            std::copy(am.values.begin(), am.values.end(), out.mutable_data());
            return out;
          },
          py::arg("image"), py::arg("label"), py::arg("variant") = "gradcam_pp");

  py::class_<Scene>(m, "Scene")
      .def_property_readonly("class_names",
                             [](const Scene& s) {
                               std::vector<std::string> n;
                               for (const auto& c : s.classes) n.push_back(c.name);
                               return n;
                             })
      .def_readonly("image_size", &Scene::image_size)
      .def(
          "render",
          [](const Scene& s, int class_id, const RenderCondition& cond, std::optional<FloatArray> texture) {
            if (class_id < 0 || class_id >= static_cast<int>(s.classes.size())) throw py::index_error("class_id");
            if (!texture) return from_image(render_view(s, class_id, cond));
            return from_image(render_view(s, class_id, cond, TextureAtlas(to_image(*texture))));
          },
          py::arg("class_id"), py::arg("condition"), py::arg("texture") = py::none());

  py::class_<RunConfig>(m, "RunConfig")
      .def_property(
          "output_dir", [](const RunConfig& c) { return c.output_dir; },
          [](RunConfig& c, const std::filesystem::path& p) { c.output_dir = p; })
      .def_property(
          "models_dir", [](const RunConfig& c) { return c.models_dir; },
          [](RunConfig& c, const std::filesystem::path& p) { c.models_dir = p; })
      .def_property("seed", [](const RunConfig& c) { return c.seed; }, &RunConfig::set_seed)
      .def_readonly("architectures", &RunConfig::architectures)
      .def_readonly("attention_model", &RunConfig::attention_model)
      .def("conditions", &run_conditions)
      .def("scene", &load_run_scene)
      .def("models", &load_run_models)
      .def("to_dict", [](const RunConfig& c) { return to_py(c.to_json()); });

  m.def("load_config", &load_run_config, py::arg("path"));

  m.def(
      "run_attack",
      [](const RunConfig& cfg, bool write) {
        nlohmann::json report;
        {
          py::gil_scoped_release release;
          const Experiment ex = make_experiment(cfg, load_run_models(cfg));
          const RunResult run = run_experiment(ex);
          if (write) dump_artifacts(cfg.output_dir, ex, run);
          report = run.report.to_json();
          report["steps"] = run.attack.trace.size();
        }
        return to_py(report);
      },
      py::arg("config"), py::arg("write_artifacts") = true,
      "Runs the attack with the configured models and returns the evaluation report.");
}
