// Python bindings for the main operations: kernel evaluation, the model,
// synthetic data, federated simulation, metrics and checkpoints.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "fqkl/checkpoint.hpp"
#include "fqkl/data.hpp"
#include "fqkl/federated.hpp"
#include "fqkl/metrics.hpp"
#include "fqkl/model.hpp"
#include "fqkl/qkernel.hpp"
#include "fqkl/rng.hpp"

namespace py = pybind11;
using namespace fqkl;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vec(const DArray& a) {
  if (a.ndim() != 1) throw py::value_error("expected a 1-d array");
  return std::vector<double>(a.data(), a.data() + a.shape(0));
}

Tensor to_tensor(const DArray& a) {
  std::vector<std::size_t> shape(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<std::size_t>(i)] = a.shape(i);
  return Tensor::from(std::move(shape),
                      std::vector<double>(a.data(), a.data() + a.size()));
}

py::array from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

// explicit shape vector: the plain-integer array_t constructor produces a
// stride-0 view in pybind11 3.x
template <class T, class Seq>
py::array make_1d(const Seq& v) {
  py::array_t<T> out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array from_vec(const std::vector<double>& v) { return make_1d<double>(v); }

KernelConfig make_kernel_config(std::size_t dim, std::size_t block, std::size_t depth) {
  KernelConfig cfg{dim, block, depth};
  cfg.validate();
  return cfg;
}

ModelConfig make_model_config(std::size_t channels, std::size_t window, std::size_t classes,
                              const std::vector<std::size_t>& conv_filters,
                              const std::vector<std::size_t>& conv_width, std::size_t rnn_layers,
                              std::size_t hidden, std::size_t landmarks, std::size_t block,
                              std::size_t depth, double dropout, bool gate_bias, bool baseline,
                              bool mean_pool) {
  if (conv_filters.size() != conv_width.size() || conv_filters.empty()) {
    throw py::value_error("conv_filters and conv_width must be equal-length, non-empty lists");
  }
  ModelConfig cfg;
  cfg.in_channels = channels;
  cfg.window = window;
  cfg.classes = classes;
  cfg.conv.clear();
  for (std::size_t i = 0; i < conv_filters.size(); ++i) cfg.conv.push_back({conv_filters[i], conv_width[i]});
  cfg.rnn_layers = rnn_layers;
  cfg.hidden = hidden;
  cfg.landmarks = landmarks;
  cfg.kernel_block = block;
  cfg.kernel_depth = depth;
  cfg.dropout = dropout;
  cfg.gate_bias = gate_bias;
  cfg.baseline = baseline;
  cfg.mean_pool = mean_pool;
  cfg.validate();
  return cfg;
}

WindowedDataset dataset_from_arrays(const DArray& windows, const py::array_t<long>& labels,
                                    int num_classes) {
  if (windows.ndim() != 3) throw py::value_error("windows must be M x T x d");
  WindowedDataset ds;
  ds.windows = to_tensor(windows);
  ds.labels.assign(labels.data(), labels.data() + labels.size());
  ds.subjects.assign(ds.labels.size(), 0);
  for (std::size_t i = 0; i < ds.subjects.size(); ++i) ds.subjects[i] = static_cast<int>(i % 8);
  ds.num_classes = num_classes;
  ds.validate();
  return ds;
}

// Owns one configured network and its parameters.
struct PyModel {
  ModelConfig cfg;
  ParamTree params;

  PyModel(ModelConfig c, std::uint64_t seed) : cfg(std::move(c)) {
    Rng rng(derive_seed(seed, seed_stream::kInit));
    params = init_params(cfg, rng);
  }

  py::array forward(const DArray& window) const {
    return from_tensor(model_forward(to_tensor(window), cfg, params, nullptr, false));
  }

  py::dict count() const {
    const ParamCount c = count_params(cfg);
    py::dict rows;
    for (const auto& r : c.rows) rows[py::str(r.component)] = r.count;
    py::dict out;
    out["components"] = rows;
    out["total"] = c.total;
    return out;
  }

  void save(const std::string& path) const { save_checkpoint_file(path, params); }

  void load(const std::string& path) {
    ParamTree loaded = load_checkpoint_file(path);
    if (!loaded.congruent_with(params)) {
      throw py::value_error("checkpoint does not match this model's tensor names/shapes");
    }
    params = std::move(loaded);
  }
};

py::dict record_to_dict(const RoundRecord& r) {
  py::dict d;
  d["round"] = r.round;
  d["accuracy"] = r.accuracy;
  d["precision"] = r.precision;
  d["recall"] = r.recall;
  d["f1"] = r.f1;
  d["train_loss"] = r.train_loss;
  d["seconds"] = r.seconds;
  return d;
}

}  // namespace

PYBIND11_MODULE(_fqkl, m) {
  m.doc() = "federated kernel-gate LSTM core";

  m.def(
      "kernel_value",
      [](const DArray& a, const DArray& b, const DArray& w, std::size_t block, std::size_t depth) {
        const auto av = to_vec(a), bv = to_vec(b), wv = to_vec(w);
        return kernel_value(av, bv, wv, make_kernel_config(av.size(), block, depth));
      },
      py::arg("a"), py::arg("b"), py::arg("w"), py::arg("block") = 4, py::arg("depth") = 0,
      "Fidelity kernel of two angle-encoded feature vectors, in [0, 1].");

  m.def(
      "kernel_grad",
      [](const DArray& a, const DArray& b, const DArray& w, std::size_t block, std::size_t depth) {
        const auto av = to_vec(a), bv = to_vec(b), wv = to_vec(w);
        const KernelGrad g = kernel_grad(av, bv, wv, make_kernel_config(av.size(), block, depth));
        return py::make_tuple(from_vec(g.da), from_vec(g.db), from_vec(g.dw));
      },
      py::arg("a"), py::arg("b"), py::arg("w"), py::arg("block") = 4, py::arg("depth") = 0,
      "Exact kernel gradients (d kappa / da, db, dw).");

  m.def(
      "gram_matrix",
      [](const DArray& x, const DArray& w, std::size_t block, std::size_t depth) {
        const Tensor xt = to_tensor(x);
        if (xt.rank() != 2) throw py::value_error("X must be N x D");
        return from_tensor(gram_matrix(xt, to_vec(w), make_kernel_config(xt.extent(1), block, depth)));
      },
      py::arg("x"), py::arg("w"), py::arg("block") = 4, py::arg("depth") = 0,
      "Pairwise kernel matrix of the rows of X (symmetric, unit diagonal).");

  m.def(
      "gen_synthetic",
      [](int classes, std::size_t windows_per_class, std::size_t window, std::size_t channels,
         double noise_sd, std::uint64_t seed) {
        const WindowedDataset ds =
            gen_synthetic(classes, windows_per_class, window, channels, noise_sd, seed);
        py::dict out;
        out["windows"] = from_tensor(ds.windows);
        out["labels"] = make_1d<long>(ds.labels);
        out["subjects"] = make_1d<long>(ds.subjects);
        out["num_classes"] = ds.num_classes;
        return out;
      },
      py::arg("classes") = 4, py::arg("windows_per_class") = 100, py::arg("window") = 64,
      py::arg("channels") = 3, py::arg("noise_sd") = 0.3, py::arg("seed") = 42,
      "Deterministic multichannel sine-class dataset.");

  m.def(
      "compute_metrics",
      [](const py::array_t<long>& confusion) {
        if (confusion.ndim() != 2) throw py::value_error("confusion must be C x C");
        ConfusionMatrix cm(confusion.shape(0), std::vector<std::int64_t>(confusion.shape(1)));
        for (py::ssize_t i = 0; i < confusion.shape(0); ++i) {
          for (py::ssize_t j = 0; j < confusion.shape(1); ++j) cm[i][j] = confusion.at(i, j);
        }
        const MetricsReport r = compute_metrics(cm);
        py::dict out;
        out["accuracy"] = r.accuracy;
        out["precision"] = r.precision;
        out["recall"] = r.recall;
        out["f1"] = r.f1;
        return out;
      },
      py::arg("confusion"), "Accuracy plus macro precision/recall/F1 from a confusion matrix.");

  py::class_<PyModel>(m, "Model")
      .def(py::init([](std::size_t channels, std::size_t window, std::size_t classes,
                       const std::vector<std::size_t>& conv_filters,
                       const std::vector<std::size_t>& conv_width, std::size_t rnn_layers,
                       std::size_t hidden, std::size_t landmarks, std::size_t block,
                       std::size_t depth, double dropout, bool gate_bias, bool baseline,
                       bool mean_pool, std::uint64_t seed) {
             return PyModel(make_model_config(channels, window, classes, conv_filters, conv_width,
                                              rnn_layers, hidden, landmarks, block, depth, dropout,
                                              gate_bias, baseline, mean_pool),
                            seed);
           }),
           py::arg("channels") = 3, py::arg("window") = 100, py::arg("classes") = 2,
           py::arg("conv_filters") = std::vector<std::size_t>{64},
           py::arg("conv_width") = std::vector<std::size_t>{11}, py::arg("rnn_layers") = 2,
           py::arg("hidden") = 64, py::arg("landmarks") = 16, py::arg("block") = 4,
           py::arg("depth") = 0, py::arg("dropout") = 0.5, py::arg("gate_bias") = false,
           py::arg("baseline") = false, py::arg("mean_pool") = false, py::arg("seed") = 42)
      .def("forward", &PyModel::forward, py::arg("window"),
           "Class logits for one window (T x d), eval mode.")
      .def("count_params", &PyModel::count)
      .def("save_checkpoint", &PyModel::save, py::arg("path"))
      .def("load_checkpoint", &PyModel::load, py::arg("path"));

  m.def(
      "run_federated",
      [](const DArray& train_windows, const py::array_t<long>& train_labels,
         const DArray& test_windows, const py::array_t<long>& test_labels, int classes,
         const std::vector<std::size_t>& conv_filters, const std::vector<std::size_t>& conv_width,
         std::size_t rnn_layers, std::size_t hidden, std::size_t landmarks, std::size_t block,
         std::size_t depth, double dropout, bool baseline, std::size_t clients,
         std::size_t local_epochs, std::size_t rounds, std::size_t batch, double lr,
         double weight_decay, std::uint64_t seed, std::optional<std::string> checkpoint_path) {
        const WindowedDataset train = dataset_from_arrays(train_windows, train_labels, classes);
        const WindowedDataset test = dataset_from_arrays(test_windows, test_labels, classes);
        const ModelConfig cfg =
            make_model_config(train.channels(), train.window_len(), classes, conv_filters,
                              conv_width, rnn_layers, hidden, landmarks, block, depth, dropout,
                              false, baseline, false);
        FedConfig fed;
        fed.clients = clients;
        fed.local_epochs = local_epochs;
        fed.rounds = rounds;
        fed.hyper.batch = batch;
        fed.hyper.adam.lr = lr;
        fed.hyper.adam.weight_decay = weight_decay;
        const FedRunResult result = run_federated(fed, cfg, train, test, seed);
        if (checkpoint_path) save_checkpoint_file(*checkpoint_path, result.final_params);
        py::list records;
        for (const auto& r : result.records) records.append(record_to_dict(r));
        return records;
      },
      py::arg("train_windows"), py::arg("train_labels"), py::arg("test_windows"),
      py::arg("test_labels"), py::arg("classes"),
      py::arg("conv_filters") = std::vector<std::size_t>{8},
      py::arg("conv_width") = std::vector<std::size_t>{9}, py::arg("rnn_layers") = 1,
      py::arg("hidden") = 16, py::arg("landmarks") = 8, py::arg("block") = 4, py::arg("depth") = 0,
      py::arg("dropout") = 0.1, py::arg("baseline") = false, py::arg("clients") = 3,
      py::arg("local_epochs") = 4, py::arg("rounds") = 10, py::arg("batch") = 32,
      py::arg("lr") = 5e-3, py::arg("weight_decay") = 1e-4, py::arg("seed") = 42,
      py::arg("checkpoint_path") = std::nullopt,
      "Synchronous in-process federated rounds; returns one record dict per round.");

  m.attr("__version__") = "0.1.0";
}
