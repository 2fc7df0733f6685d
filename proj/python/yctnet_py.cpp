// numpy-facing bindings; tensors cross the boundary as copies.

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <torch/torch.h>

#include "yctnet/config.hpp"
#include "yctnet/engine.hpp"
#include "yctnet/error.hpp"
#include "yctnet/losses.hpp"
#include "yctnet/metrics.hpp"
#include "yctnet/model.hpp"
#include "yctnet/volume.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;

namespace {

template <typename T>
torch::Tensor to_tensor(const py::array_t<T, py::array::c_style | py::array::forcecast>& a, torch::ScalarType dtype) {
  std::vector<int64_t> shape(a.shape(), a.shape() + a.ndim());
  return torch::from_blob(const_cast<T*>(a.data()), shape, dtype).clone();
}

torch::Tensor float_tensor(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  return to_tensor<float>(a, torch::kFloat32);
}

torch::Tensor label_tensor(const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& a) {
  return to_tensor<int64_t>(a, torch::kInt64);
}

template <typename T>
py::array_t<T> to_numpy(const torch::Tensor& t) {
  const auto c = t.contiguous();
  py::array_t<T> out(c.sizes().vec());
  std::memcpy(out.mutable_data(), c.data_ptr<T>(), c.numel() * sizeof(T));
  return out;
}

yct::ModelConfig model_from(const std::string& json_text) {
  const auto j = nlohmann::json::parse(json_text);
  return j.contains("model") ? yct::parse_config_document(j).model : yct::model_config_from_json(j);
}

class Model {
 public:
  Model(const std::string& config_json, uint64_t seed) : net_(yct::build_model(model_from(config_json), seed)) {}
  explicit Model(yct::YCTNet net) : net_(std::move(net)) {}

  py::array_t<float> forward(const py::array_t<float, py::array::c_style | py::array::forcecast>& x) {
    torch::NoGradGuard ng;
    return to_numpy<float>(net_->forward(float_tensor(x)));
  }
  py::array_t<float> probabilities(const py::array_t<float, py::array::c_style | py::array::forcecast>& x) {
    torch::NoGradGuard ng;
    return to_numpy<float>(net_->probabilities(float_tensor(x)));
  }
  int64_t parameter_count() const { return yct::count_parameters(*net_); }
  std::string config_json() const { return yct::to_json(net_->config()).dump(); }
  void save(const fs::path& dir) {
    yct::save_checkpoint(net_, {net_->config(), yct::TrainConfig{}, 0, 0, ""}, dir);
  }
  static Model load(const fs::path& dir) { return Model(yct::load_checkpoint(dir).model); }

 private:
  yct::YCTNet net_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Y-CT-Net core bindings";
  yct::configure_runtime(1);

  auto base = py::register_exception<yct::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<yct::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<yct::ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<yct::IoError>(m, "IoError", base.ptr());
  py::register_exception<yct::NumericError>(m, "NumericError", base.ptr());

  m.def("preset", [](const std::string& name) { return yct::to_json(yct::preset(name)).dump(); }, py::arg("name"));
  m.def(
      "validate_config",
      [](const std::string& json_text) {
        const auto doc = yct::parse_config_document(nlohmann::json::parse(json_text));
        yct::validate(doc.model);
        yct::validate(doc.train, doc.model);
      },
      py::arg("document_json"));
  m.def(
      "trace_shapes",
      [](const std::string& config_json) {
        const auto trace = yct::trace_shapes(model_from(config_json));
        std::vector<std::pair<std::string, std::vector<int64_t>>> out;
        for (const auto& [name, shape] : trace.entries()) out.emplace_back(name, std::vector<int64_t>(shape.begin() + 1, shape.end()));
        return out;
      },
      py::arg("config_json"));

  m.def(
      "generate_phantom",
      [](int64_t grid, int classes, uint64_t seed, double noise) {
        yct::PhantomSpec s;
        s.grid_size = grid;
        s.num_classes = classes;
        s.seed = seed;
        s.noise_sigma = noise;
        auto [img, lbl] = yct::generate_phantom(s);
        return py::make_tuple(to_numpy<float>(img.data.to(torch::kFloat32)), to_numpy<int64_t>(lbl.data.to(torch::kInt64)));
      },
      py::arg("grid"), py::arg("classes") = 4, py::arg("seed") = 0, py::arg("noise") = 0.1);

  m.def(
      "dice_ce_loss",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& probs,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& target) {
        return yct::dice_ce_loss(to_tensor<double>(probs, torch::kFloat64), to_tensor<double>(target, torch::kFloat64))
            .item<double>();
      },
      py::arg("probs"), py::arg("target"));
  m.def(
      "dice_score",
      [](const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& pred,
         const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& gt,
         int cls) { return yct::dice_score(label_tensor(pred), label_tensor(gt), cls); },
      py::arg("pred"), py::arg("gt"), py::arg("cls"));
  m.def(
      "hd95",
      [](const py::array_t<bool, py::array::c_style | py::array::forcecast>& a,
         const py::array_t<bool, py::array::c_style | py::array::forcecast>& b, std::array<double, 3> spacing) {
        const auto r = yct::hd95(to_tensor<bool>(a, torch::kBool), to_tensor<bool>(b, torch::kBool),
                                 {spacing[0], spacing[1], spacing[2]});
        return py::make_tuple(r.value, r.defined);
      },
      py::arg("a"), py::arg("b"), py::arg("spacing") = std::array<double, 3>{1.0, 1.0, 1.0});

  m.def(
      "plan_windows",
      [](std::array<int64_t, 3> shape, std::array<int64_t, 3> roi, double overlap) {
        std::vector<std::array<int64_t, 3>> out;
        for (const auto& o : yct::plan_windows({shape[0], shape[1], shape[2]}, {roi[0], roi[1], roi[2]}, overlap).offsets)
          out.push_back({o[0], o[1], o[2]});
        return out;
      },
      py::arg("shape"), py::arg("roi"), py::arg("overlap"));
  m.def(
      "sliding_window",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& image, std::array<int64_t, 3> roi,
         double overlap, const std::function<py::array_t<float>(py::array_t<float>)>& predictor, bool gaussian) {
        yct::StitchOptions o;
        o.gaussian = gaussian;
        const yct::Predictor pred = [&](const torch::Tensor& x) { return float_tensor(predictor(to_numpy<float>(x))); };
        return to_numpy<float>(
            yct::sliding_window_inference(float_tensor(image), {roi[0], roi[1], roi[2]}, overlap, pred, o));
      },
      py::arg("image"), py::arg("roi"), py::arg("overlap"), py::arg("predictor"), py::arg("gaussian") = false);

  m.def(
      "write_phantom_dataset",
      [](const fs::path& dir, int count, int64_t size, int classes, uint64_t seed) {
        yct::PhantomSpec s;
        s.grid_size = size;
        s.num_classes = classes;
        s.seed = seed;
        const auto manifest = yct::write_phantom_dataset(dir, count, s);
        return py::make_tuple(manifest.train, manifest.val);
      },
      py::arg("dir"), py::arg("count"), py::arg("size") = 64, py::arg("classes") = 4, py::arg("seed") = 0);
  m.def(
      "train",
      [](const std::string& document_json, const fs::path& data, const fs::path& out) {
        const auto doc = yct::parse_config_document(nlohmann::json::parse(document_json));
        yct::TrainResult r;
        {
          py::gil_scoped_release release;
          r = yct::train(doc.model, doc.train, yct::load_cases(data, "train"), out);
        }
        std::vector<std::pair<int64_t, double>> curve;
        for (const auto& p : r.curve) curve.emplace_back(p.step, p.loss);
        return curve;
      },
      py::arg("document_json"), py::arg("data"), py::arg("out"));
  m.def(
      "evaluate_checkpoint",
      [](const fs::path& checkpoint, const fs::path& data, const std::string& split, double overlap) {
        py::gil_scoped_release release;
        return yct::evaluate_checkpoint(checkpoint, yct::load_cases(data, split), overlap).to_json().dump();
      },
      py::arg("checkpoint"), py::arg("data"), py::arg("split") = "val", py::arg("overlap") = 0.5);
  m.def(
      "grad_check",
      [](const std::string& config_json, int64_t size, int params, uint64_t seed) {
        auto cfg = model_from(config_json);
        cfg.input_size = {size, size, size};
        yct::PhantomSpec s;
        s.grid_size = size;
        s.num_classes = cfg.num_classes;
        s.seed = seed;
        auto [img, lbl] = yct::generate_phantom(s);
        py::gil_scoped_release release;
        return yct::grad_check(cfg, img.data, lbl.data[0], params, seed).to_json().dump();
      },
      py::arg("config_json"), py::arg("size") = 16, py::arg("params") = 100, py::arg("seed") = 0);

  py::class_<Model>(m, "Model")
      .def(py::init<const std::string&, uint64_t>(), py::arg("config_json"), py::arg("seed") = 0)
      .def("forward", &Model::forward, py::arg("x"))
      .def("probabilities", &Model::probabilities, py::arg("x"))
      .def("parameter_count", &Model::parameter_count)
      .def("config_json", &Model::config_json)
      .def("save", &Model::save, py::arg("dir"))
      .def_static("load", &Model::load, py::arg("dir"));
}
