/*
 * Copyright 2026 The TUNA-CIL Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "tuna/errors.hpp"
#include "tuna/fusion.hpp"
#include "tuna/harness/checkpoint.hpp"
#include "tuna/harness/experiment.hpp"
#include "tuna/harness/protocol.hpp"
#include "tuna/inference.hpp"

namespace py = pybind11;
using namespace tuna;

namespace {

ExperimentConfig config_from(const std::string& text, std::optional<std::uint64_t> seed) {
  ExperimentConfig c = parse_config(text.empty() ? nlohmann::json::object() : nlohmann::json::parse(text));
  if (seed) c.seed = seed;
  c.apply_seed();
  c.validate();
  return c;
}

py::array_t<double> tokens_array(const std::vector<Instance>& items, std::size_t seq_len, std::size_t token_dim) {
  py::array_t<double> out({items.size(), seq_len, token_dim});
  double* dst = out.mutable_data();
  for (const auto& it : items) dst = std::copy(it.tokens.begin(), it.tokens.end(), dst);
  return out;
}

py::array_t<int> labels_array(const std::vector<Instance>& items) {
  py::array_t<int> out(static_cast<py::ssize_t>(items.size()));
  int* dst = out.mutable_data();
  for (const auto& it : items) *dst++ = it.label;
  return out;
}

std::vector<double> flat_tokens(const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
  return std::vector<double>(x.data(), x.data() + x.size());
}

py::dict prediction_dict(const Prediction& p) {
  py::dict d;
  d["class_id"] = p.class_id;
  d["selected_task"] = p.selected_task;
  d["per_adapter_entropy"] = p.per_adapter_entropy;
  d["combined_probs"] = p.combined_probs;
  return d;
}

struct PyModel {
  ModelState state;
  std::string config;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Orthogonal task adapters, sign/magnitude fusion and entropy-routed ensemble inference.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_IOError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

  m.def("entropy", [](const std::vector<double>& p) { return entropy(p); }, py::arg("probs"),
        "Shannon entropy in nats.");
  m.def("softmax", [](const std::vector<double>& z) { return softmax_probs(z); }, py::arg("logits"));
  m.def(
      "select_by_entropy",
      [](const std::vector<std::vector<double>>& probs) {
        const auto s = select_by_entropy(probs);
        return py::make_tuple(s.index, s.entropies);
      },
      py::arg("probs_per_adapter"), "Index of the minimum-entropy distribution (lowest index on ties) and all entropies.");
  m.def(
      "fuse_vectors",
      [](const std::vector<std::vector<double>>& vectors) {
        std::vector<TaskVector> tv(vectors.size());
        for (std::size_t i = 0; i < vectors.size(); ++i) tv[i].values = vectors[i];
        const auto r = fuse_vectors(tv);
        py::dict d;
        d["sign"] = std::vector<int>(r.sign.begin(), r.sign.end());
        d["magnitude"] = r.magnitude;
        d["universal"] = r.universal.values;
        return d;
      },
      py::arg("vectors"));
  m.def(
      "split_classes",
      [](std::size_t total, std::size_t base, std::size_t increment, std::uint64_t seed) {
        ProtocolSpec s;
        s.total_classes = total;
        s.base = base;
        s.increment = increment;
        s.shuffle_seed = seed;
        return split_classes(s);
      },
      py::arg("total_classes"), py::arg("base") = 0, py::arg("increment") = 10, py::arg("shuffle_seed") = 1993);

  m.def(
      "default_config", [] { return to_json(ExperimentConfig{}).dump(); }, "Default configuration as JSON text.");
  m.def(
      "synthetic_stream",
      [](const std::string& config, std::optional<std::uint64_t> seed) {
        const auto c = config_from(config, seed);
        const auto stream = build_stream(c);
        py::list tasks;
        for (const auto& t : stream.tasks) {
          py::dict d;
          d["classes"] = t.classes;
          d["train_x"] = tokens_array(t.train, stream.seq_len, stream.token_dim);
          d["train_y"] = labels_array(t.train);
          d["test_x"] = tokens_array(t.test, stream.seq_len, stream.token_dim);
          d["test_y"] = labels_array(t.test);
          tasks.append(d);
        }
        return tasks;
      },
      py::arg("config") = "", py::arg("seed") = py::none());
  m.def(
      "run_experiment",
      [](const std::string& config, std::optional<std::uint64_t> seed, const std::string& out_dir) {
        const auto c = config_from(config, seed);
        std::string report;
        {
          py::gil_scoped_release release;
          const auto result = run_experiment(c);
          if (!out_dir.empty()) write_outputs(result, out_dir);
          report = to_json(result.report).dump();
        }
        return report;
      },
      py::arg("config") = "", py::arg("seed") = py::none(), py::arg("out_dir") = "",
      "Runs the full protocol and returns the report as JSON text.");
  m.def(
      "fuse_adapter_files",
      [](const std::vector<std::string>& paths, const std::string& out) {
        std::vector<AdapterSet> sets;
        for (const auto& p : paths) sets.push_back(load_adapter(p));
        save_adapter(fuse(sets), out);
      },
      py::arg("paths"), py::arg("out"));

  py::class_<PyModel>(m, "Model")
      .def_static(
          "load",
          [](const std::string& path) {
            auto loaded = load_checkpoint(path);
            return PyModel{std::move(loaded.state), loaded.config.dump()};
          },
          py::arg("path"))
      .def_property_readonly("num_tasks", [](const PyModel& p) { return p.state.adapters.size(); })
      .def_property_readonly("class_ids", [](const PyModel& p) { return p.state.classifier.class_ids; })
      .def_property_readonly("has_universal", [](const PyModel& p) { return p.state.universal.has_value(); })
      .def_property_readonly("config", [](const PyModel& p) { return p.config; })
      .def(
          "predict",
          [](const PyModel& p, const py::array_t<double, py::array::c_style | py::array::forcecast>& tokens,
             const std::string& strategy) {
            return prediction_dict(predict(flat_tokens(tokens), p.state, parse_strategy(strategy)));
          },
          py::arg("tokens"), py::arg("strategy") = "tuna");
}
