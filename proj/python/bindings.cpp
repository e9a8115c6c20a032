#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "vitc/checkpoint.hpp"
#include "vitc/data.hpp"
#include "vitc/error.hpp"
#include "vitc/lra.hpp"
#include "vitc/report.hpp"
#include "vitc/trainer.hpp"
#include "vitc/vtp.hpp"

namespace py = pybind11;
using namespace vitc;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

Dataset to_dataset(const FloatArray& images, const IntArray& labels, std::size_t num_classes) {
  if (images.ndim() != 4) throw Error(ErrorCode::DimensionMismatch, "images must be (N, H, W, C)");
  if (labels.ndim() != 1 || labels.shape(0) != images.shape(0)) {
    throw Error(ErrorCode::DimensionMismatch, "labels must be (N,) matching the image count");
  }
  Dataset ds;
  ds.height = static_cast<std::size_t>(images.shape(1));
  ds.width = static_cast<std::size_t>(images.shape(2));
  ds.channels = static_cast<std::size_t>(images.shape(3));
  ds.num_classes = num_classes;
  ds.images.assign(images.data(), images.data() + images.size());
  ds.labels.assign(labels.data(), labels.data() + labels.size());
  return ds;
}

py::tuple from_dataset(const Dataset& ds) {
  FloatArray images({ds.size(), ds.height, ds.width, ds.channels});
  std::copy(ds.images.begin(), ds.images.end(), images.mutable_data());
  IntArray labels(static_cast<py::ssize_t>(ds.size()));
  std::copy(ds.labels.begin(), ds.labels.end(), labels.mutable_data());
  return py::make_tuple(images, labels);
}

FloatArray to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  FloatArray out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

py::dict log_entry(const EpochLog& e) {
  py::dict d;
  d["epoch"] = e.epoch;
  d["ce_loss"] = e.ce_loss;
  d["l1_loss"] = e.l1_loss;
  d["test_acc"] = e.test_acc ? py::cast(*e.test_acc) : py::none();
  d["seconds"] = e.seconds;
  return d;
}

}  // namespace

PYBIND11_MODULE(_vitc, m) {
  m.doc() = "Vision transformer compression: VTP pruning and low-rank attention";

  // Held for the interpreter's lifetime; exceptions carry the error code
  // string as `.code`.
  static PyObject* error_type = py::exception<Error>(m, "VitcError").inc_ref().ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type, exc.ptr());
    }
  });

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("image_h", &ModelConfig::image_h)
      .def_readwrite("image_w", &ModelConfig::image_w)
      .def_readwrite("channels", &ModelConfig::channels)
      .def_readwrite("patch_size", &ModelConfig::patch_size)
      .def_readwrite("embed_dim", &ModelConfig::embed_dim)
      .def_readwrite("mlp_dim", &ModelConfig::mlp_dim)
      .def_readwrite("num_layers", &ModelConfig::num_layers)
      .def_readwrite("num_heads", &ModelConfig::num_heads)
      .def_readwrite("num_classes", &ModelConfig::num_classes)
      .def_readwrite("head_hidden", &ModelConfig::head_hidden)
      .def_readwrite("dropout", &ModelConfig::dropout)
      .def_property(
          "lra", [](const ModelConfig& c) { return std::string(to_string(c.lra.variant)); },
          [](ModelConfig& c, const std::string& v) { c.lra.variant = parse_lra_variant(v); })
      .def_property(
          "rank", [](const ModelConfig& c) { return c.lra.rank; },
          [](ModelConfig& c, std::size_t k) { c.lra.rank = k; })
      .def("validate", &ModelConfig::validate)
      .def("__eq__", [](const ModelConfig& a, const ModelConfig& b) { return a == b; });

  m.def("reference_config", &reference_config, py::arg("patch_size"), py::arg("embed_dim"), py::arg("mlp_dim"),
        py::arg("num_layers"));
  m.def("config_param_count", py::overload_cast<const ModelConfig&>(&count_parameters), py::arg("config"));
  m.def(
      "lra_param_count",
      [](const ModelConfig& c, const std::string& variant, std::size_t rank) {
        return lra_param_count(c, {parse_lra_variant(variant), rank});
      },
      py::arg("config"), py::arg("variant"), py::arg("rank"));
  m.def("compression_percent", &compression_percent, py::arg("params_base"), py::arg("params_compressed"));
  m.def("relative_error_increase", &relative_error_increase, py::arg("acc_base"), py::arg("acc_compressed"));
  m.def("model_size_mib", &model_size_mib, py::arg("params"));

  py::class_<VitModel>(m, "VitModel")
      .def_static("create", &VitModel::create, py::arg("config"), py::arg("seed") = 0)
      .def_static(
          "create_lra",
          [](const ModelConfig& c, const std::string& variant, std::size_t rank, std::uint64_t seed) {
            return VitModel::create(build_lra_attention(c, {parse_lra_variant(variant), rank}), seed);
          },
          py::arg("config"), py::arg("variant"), py::arg("rank"), py::arg("seed") = 0)
      .def_static(
          "create_hybrid",
          [](const ModelConfig& c, const std::string& variant, std::size_t rank, std::uint64_t seed) {
            PruneConfig pc;
            pc.placement = MaskPlacement::Ffn;
            return build_hybrid(c, {parse_lra_variant(variant), rank}, pc, seed);
          },
          py::arg("config"), py::arg("variant"), py::arg("rank"), py::arg("seed") = 0)
      .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p); }, py::arg("path"))
      .def("save", [](const VitModel& self, const std::filesystem::path& p) { save_checkpoint(self, p); },
           py::arg("path"))
      .def_readonly("config", &VitModel::config)
      .def_property_readonly("param_count", [](const VitModel& self) { return count_parameters(self); })
      .def_property_readonly("has_masks", &VitModel::has_masks)
      .def("clone", &VitModel::clone)
      .def(
          "attach_masks",
          [](VitModel& self, const std::string& placement) { attach_masks(self, parse_mask_placement(placement)); },
          py::arg("placement") = "full")
      .def("prune", [](const VitModel& self, double rate) { return prune(self, rate); }, py::arg("rate"))
      .def("mask_values",
           [](const VitModel& self) {
             py::list out;
             for (const MaskRef& r : collect_masks(self).masks)
               out.append(py::make_tuple(r.block, std::string(to_string(r.site)), to_numpy(r.values)));
             return out;
           })
      .def("parameters",
           [](const VitModel& self) {
             py::dict out;
             for (const auto& [name, t] : self.named_parameters(true)) out[py::str(name)] = to_numpy(t);
             return out;
           })
      .def(
          "predict",
          [](const VitModel& self, const FloatArray& images, std::size_t batch_size) {
            IntArray labels(images.ndim() ? images.shape(0) : 0);
            std::fill(labels.mutable_data(), labels.mutable_data() + labels.size(), 0);
            const Dataset ds = to_dataset(images, labels, self.config.num_classes);
            py::gil_scoped_release release;
            Tensor logits = predict_logits(self, ds, batch_size);
            py::gil_scoped_acquire acquire;
            return to_numpy(logits);
          },
          py::arg("images"), py::arg("batch_size") = 256)
      .def(
          "evaluate",
          [](const VitModel& self, const FloatArray& images, const IntArray& labels) {
            const Dataset ds = to_dataset(images, labels, self.config.num_classes);
            py::gil_scoped_release release;
            return evaluate(self, ds);
          },
          py::arg("images"), py::arg("labels"));

  m.def(
      "make_synthetic",
      [](std::size_t n, std::size_t classes, std::uint64_t seed, std::size_t h, std::size_t w, std::size_t c) {
        return from_dataset(make_synthetic(n, classes, seed, h, w, c));
      },
      py::arg("n"), py::arg("classes") = 10, py::arg("seed") = 0, py::arg("height") = 32, py::arg("width") = 32,
      py::arg("channels") = 3);
  m.def(
      "load_cifar10",
      [](const std::filesystem::path& dir, std::size_t train_limit, std::size_t test_limit) {
        const auto [train_set, test_set] = load_cifar10(dir, train_limit, test_limit);
        return py::make_tuple(from_dataset(train_set), from_dataset(test_set));
      },
      py::arg("directory"), py::arg("train_limit") = 0, py::arg("test_limit") = 0);

  m.def(
      "train",
      [](VitModel& model, const FloatArray& train_images, const IntArray& train_labels,
         std::optional<FloatArray> test_images, std::optional<IntArray> test_labels, std::size_t epochs,
         std::size_t batch_size, float lr, float lambda, std::uint64_t seed, std::size_t eval_every) {
        const std::size_t k = model.config.num_classes;
        const Dataset train_set = to_dataset(train_images, train_labels, k);
        Dataset test_set;
        if (test_images && test_labels) test_set = to_dataset(*test_images, *test_labels, k);
        TrainConfig tc;
        tc.epochs = epochs;
        tc.batch_size = batch_size;
        tc.lr = lr;
        tc.lambda = lambda;
        tc.seed = seed;
        tc.eval_every = eval_every;
        std::vector<EpochLog> log;
        {
          py::gil_scoped_release release;
          log = train(model, train_set, test_set, tc);
        }
        py::list out;
        for (const EpochLog& e : log) out.append(log_entry(e));
        return out;
      },
      py::arg("model"), py::arg("train_images"), py::arg("train_labels"), py::arg("test_images") = py::none(),
      py::arg("test_labels") = py::none(), py::arg("epochs") = 1, py::arg("batch_size") = 64, py::arg("lr") = 1e-4f,
      py::arg("lambda_") = 1e-4f, py::arg("seed") = 0, py::arg("eval_every") = 1);

  m.def(
      "mask_statistics",
      [](const VitModel& model, std::size_t bins) {
        const MaskStatistics s = mask_statistics(collect_masks(model), bins);
        py::dict d;
        d["attention_mean"] = s.attention_mean;
        d["ffn_mean"] = s.ffn_mean;
        d["attention_above_0.8"] = s.attention_above_08;
        d["attention_counts"] = s.attention_hist.counts;
        d["ffn_counts"] = s.ffn_hist.counts;
        d["range"] = py::make_tuple(s.attention_hist.lo, s.attention_hist.hi);
        return d;
      },
      py::arg("model"), py::arg("bins") = 20);
}
