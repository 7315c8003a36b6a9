#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>
#include <sstream>

#include "disent/cli.hpp"
#include "disent/config.hpp"
#include "disent/error.hpp"
#include "disent/evaluation.hpp"
#include "disent/losses.hpp"
#include "disent/training.hpp"

namespace py = pybind11;
using namespace disent;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const DoubleArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

DoubleArray to_array(const Tensor& t) {
  DoubleArray out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

std::vector<int> to_labels(const IntArray& a) { return {a.data(), a.data() + a.size()}; }

IntArray to_label_array(const std::vector<int>& v) {
  IntArray out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

template <typename T>
T from_json_text(const std::string& text) {
  try {
    return nlohmann::json::parse(text).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(e.what());
  }
}

py::dict dataset_dict(const Dataset& d) {
  py::dict out;
  out["images"] = to_array(d.images);
  out["exp_labels"] = to_label_array(d.exp_labels);
  out["id_labels"] = to_label_array(d.id_labels);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the disent package";

  auto base = py::register_exception<Error>(m, "DisentError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<LoadError>(m, "LoadError", base.ptr());

  m.def("reconstruction_loss", [](const DoubleArray& x, const DoubleArray& x_hat) {
    return reconstruction_loss(to_tensor(x), to_tensor(x_hat));
  });
  m.def("expression_loss", [](const DoubleArray& probs, const IntArray& labels) {
    const Tensor p = to_tensor(probs);
    return expression_loss(p, one_hot(to_labels(labels), p.rank() == 2 ? p.dim(1) : 0));
  });
  m.def("fooling_loss", [](const DoubleArray& probs) { return fooling_loss(to_tensor(probs)); });

  m.def("cosine_similarity", [](const DoubleArray& a, const DoubleArray& b) {
    return cosine_similarity(std::span<const double>(a.data(), a.size()), std::span<const double>(b.data(), b.size()));
  });
  m.def(
      "linear_probe",
      [](const DoubleArray& codes, const IntArray& labels, std::size_t folds, std::size_t iterations,
         double learning_rate, std::uint64_t seed) {
        const std::vector<int> y = to_labels(labels);
        const ProbeResult r = linear_probe(to_tensor(codes), y, {folds, iterations, learning_rate, seed});
        py::dict out;
        out["accuracy"] = r.accuracy;
        out["chance"] = r.chance;
        out["gap"] = r.gap;
        out["n_eval"] = r.n_eval;
        out["fold_accuracy"] = r.fold_accuracy;
        return out;
      },
      py::arg("codes"), py::arg("labels"), py::arg("folds") = 5, py::arg("iterations") = 300,
      py::arg("learning_rate") = 0.01, py::arg("seed") = 0);

  m.def("generate_synthetic", [](const std::string& spec_json) {
    return dataset_dict(generate_synthetic_dataset(from_json_text<SyntheticSpec>(spec_json)));
  });
  m.def("render", [](const std::string& spec_json, int exp, int id) {
    return to_array(render(from_json_text<SyntheticSpec>(spec_json), exp, id));
  });

  m.def("train_synthetic", [](const std::string& run_json, const std::string& checkpoint_path) {
    const RunConfig cfg = from_json_text<RunConfig>(run_json);
    const Dataset data = generate_synthetic_dataset(cfg.synthetic);
    const Splits s = split(data, cfg.train.split, cfg.train.seed);
    TrainResult r;
    {
      py::gil_scoped_release release;
      r = train(cfg.model, cfg.train, s.train, s.val);
    }
    save_checkpoint({cfg.model, cfg.train, r.state}, checkpoint_path);
    py::list rows;
    for (const auto& row : r.metrics) {
      py::dict d;
      d["step"] = row.step;
      d["l_exp"] = row.report.l_exp;
      d["l_adv_exp"] = row.report.l_adv_exp;
      d["acc_c_exp"] = row.acc_c_exp;
      d["acc_c_adv"] = row.acc_c_adv;
      rows.append(d);
    }
    return rows;
  });
  m.def("encode", [](const std::string& checkpoint_path, const DoubleArray& images) {
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    const Model model(ck.model_config);
    const RepresentationPair codes = model.encode(ck.state.params, to_tensor(images));
    return py::make_tuple(to_array(codes.code_exp), to_array(codes.code_non_exp));
  });

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::vector<const char*> argv = {"disent"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    int code = 0;
    {
      py::gil_scoped_release release;
      code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  });
}
