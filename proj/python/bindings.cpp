// Copyright 2026 The fusedrive Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "fusedrive/checkpoint.hpp"
#include "fusedrive/cli.hpp"
#include "fusedrive/gradcheck.hpp"
#include "fusedrive/manifest.hpp"
#include "fusedrive/metrics.hpp"
#include "fusedrive/model.hpp"
#include "fusedrive/refinement.hpp"
#include "fusedrive/synthetic.hpp"

namespace py = pybind11;
using namespace fusedrive;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor ToTensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor::FromData(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array ToArray(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Mask MaskOrAll(const std::optional<std::vector<int>>& mask, std::size_t rows) {
  if (!mask) return Mask(rows, 1);
  Mask m;
  for (int v : *mask) m.push_back(v != 0);
  return m;
}

py::dict BundleToDict(const FeatureBundle& b) {
  py::dict d;
  d["sample_id"] = b.sample_id;
  d["global"] = ToArray(b.global);
  d["local"] = ToArray(b.local);
  d["local_mask"] = std::vector<int>(b.local_mask.begin(), b.local_mask.end());
  d["text"] = ToArray(b.text);
  d["text_mask"] = std::vector<int>(b.text_mask.begin(), b.text_mask.end());
  d["label"] = std::vector<int>(b.label.begin(), b.label.end());
  d["descriptions"] = b.descriptions;
  return d;
}

py::dict DecisionToDict(const DecisionOutput& o) {
  py::dict d;
  d["logits"] = o.logits;
  d["probabilities"] = o.probabilities;
  d["decisions"] = std::vector<int>(o.decisions.begin(), o.decisions.end());
  py::list explanations;
  for (const ClassExplanation& x : o.explanations) {
    py::dict e;
    e["class_index"] = x.class_index;
    e["vision"] = x.vision;
    e["text"] = x.text;
    explanations.append(e);
  }
  d["explanations"] = explanations;
  d["refinement_unavailable"] = o.refinement_unavailable;
  return d;
}

// A loaded checkpoint ready for inference.
class Predictor {
 public:
  explicit Predictor(const std::filesystem::path& path)
      : checkpoint_(load_checkpoint(path)), model_(ModelFromCheckpoint(checkpoint_)) {}

  py::dict predict(const std::filesystem::path& bundle, bool refined,
                   std::optional<std::size_t> k, std::optional<std::size_t> k_hat,
                   std::optional<double> lambda) const {
    DecisionConfig config = checkpoint_.decision;
    if (k) config.k = *k;
    if (k_hat) config.k_hat = *k_hat;
    if (lambda) config.lambda = *lambda;
    config.Validate(checkpoint_.dims.input.n, checkpoint_.dims.input.s);
    const FeatureBundle b = read_bundle(bundle, checkpoint_.dims.input);
    const DecisionOutput out = refined ? fusedrive::predict_refined(b, model_, config) : fusedrive::predict(b, model_, config);
    return DecisionToDict(out);
  }

  std::string mode() const { return std::string(BranchModeName(checkpoint_.mode)); }
  std::vector<std::string> class_names() const { return checkpoint_.class_names; }
  bool has_surrogate() const { return model_.surrogate.has_value(); }
  std::string parameter_hash() const { return ParameterHash(model_.main_parameters()); }

 private:
  Checkpoint checkpoint_;
  Model model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "fusedrive core bindings";

  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error;
  error.call_once_and_store_result([&]() { return py::exception<Error>(m, "FusedriveError"); });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const std::string message = std::string(ErrorKindName(e.kind())) + ": " + e.what();
      py::set_error(error.get_stored(), message.c_str());
    }
  });

  m.def(
      "topk_avg_pool",
      [](const Array& scores, std::optional<std::vector<int>> mask, std::size_t k) {
        if (scores.ndim() != 2) throw py::value_error("scores must be 2-D");
        const Cam cam{ToTensor(scores), MaskOrAll(mask, static_cast<std::size_t>(scores.shape(0)))};
        return ToArray(topk_avg_pool(cam, k));
      },
      py::arg("scores"), py::arg("mask") = py::none(), py::arg("k"),
      "Per-column mean of the k largest valid scores.");

  m.def(
      "select_topk",
      [](const Array& scores, std::optional<std::vector<int>> mask, std::size_t k) {
        const Cam cam{ToTensor(scores), MaskOrAll(mask, static_cast<std::size_t>(scores.shape(0)))};
        return select_topk(cam, k);
      },
      py::arg("scores"), py::arg("mask") = py::none(), py::arg("k"));

  m.def(
      "fuse", [](const Array& p_v, const Array& p_l, double lambda) {
        return ToArray(fuse(ToTensor(p_v), ToTensor(p_l), lambda));
      },
      py::arg("p_v"), py::arg("p_l"), py::arg("lam"));

  m.def(
      "refine_cam",
      [](const Array& cam, const Array& surrogate_cam) {
        const std::size_t rows = static_cast<std::size_t>(cam.shape(0));
        return ToArray(refine_cam(Cam{ToTensor(cam), Mask(rows, 1)}, Cam{ToTensor(surrogate_cam), Mask(rows, 1)})
                           .scores);
      },
      py::arg("cam"), py::arg("surrogate_cam"));

  m.def(
      "f1_report",
      [](const std::vector<std::vector<int>>& decisions, const std::vector<std::vector<int>>& labels) {
        if (decisions.size() != labels.size()) throw py::value_error("decisions and labels differ in length");
        const std::size_t classes = labels.empty() ? 0 : labels.front().size();
        ConfusionCounts counts(classes);
        for (std::size_t i = 0; i < labels.size(); ++i)
          accumulate(Label(decisions[i].begin(), decisions[i].end()), Label(labels[i].begin(), labels[i].end()),
                     counts);
        const F1Report r = f1_report(counts);
        py::dict d;
        d["per_class"] = r.per_class;
        d["f1_all"] = r.f1_all;
        d["mf1"] = r.mf1;
        return d;
      },
      py::arg("decisions"), py::arg("labels"));

  m.def(
      "generate_synthetic",
      [](const std::filesystem::path& out_dir, std::uint64_t seed, std::size_t n_train, std::size_t n_eval,
         std::size_t t, std::size_t d_global, std::size_t n, std::size_t d_local, std::size_t s,
         std::size_t d_text, double noise) {
        SyntheticSpec spec;
        spec.n_train = n_train;
        spec.n_eval = n_eval;
        spec.dims = BundleDims{t, d_global, n, d_local, s, d_text, spec.class_names.size()};
        spec.noise = noise;
        spec.Validate();
        generate_synthetic(spec, seed, out_dir);
        return out_dir / "manifest.json";
      },
      py::arg("out_dir"), py::arg("seed") = 0, py::arg("n_train") = 2000, py::arg("n_eval") = 500,
      py::arg("t") = 4, py::arg("d_global") = 64, py::arg("n") = 16, py::arg("d_local") = 64, py::arg("s") = 8,
      py::arg("d_text") = 64, py::arg("noise") = 1.0, "Writes a planted synthetic dataset; returns the manifest path.");

  m.def(
      "read_bundle", [](const std::filesystem::path& path) { return BundleToDict(read_bundle(path)); },
      py::arg("path"));

  m.def(
      "gradcheck",
      [](std::size_t samples, std::uint64_t seed) {
        GradcheckOptions o;
        o.samples = samples;
        o.seed = seed;
        py::gil_scoped_release release;
        return gradcheck(o).max_rel_error;
      },
      py::arg("samples") = 20, py::arg("seed") = 0, "Largest relative gradient error on the full-size model.");

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "fusedrive");
        std::vector<const char*> argv;
        for (const std::string& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = RunCli(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a command-line invocation in process; returns (exit_code, stdout, stderr).");

  py::class_<Predictor>(m, "Predictor")
      .def(py::init<const std::filesystem::path&>(), py::arg("checkpoint"))
      .def("predict", &Predictor::predict, py::arg("bundle"), py::arg("refined") = false, py::arg("k") = py::none(),
           py::arg("k_hat") = py::none(), py::arg("lam") = py::none())
      .def_property_readonly("mode", &Predictor::mode)
      .def_property_readonly("class_names", &Predictor::class_names)
      .def_property_readonly("has_surrogate", &Predictor::has_surrogate)
      .def_property_readonly("parameter_hash", &Predictor::parameter_hash);
}
