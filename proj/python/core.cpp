// SPDX-License-Identifier: Apache-2.0
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "s2pg/harness/harness.hpp"
#include "s2pg/variance_lab/variance_lab.hpp"

namespace py = pybind11;
using namespace s2pg;

namespace {

// json crosses the boundary as text; python's json module does the rest
py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::handle& obj) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

harness::ExperimentConfig config_of(const py::object& cfg, const std::vector<std::string>& overrides) {
  if (py::isinstance<py::dict>(cfg)) {
    auto doc = from_py(cfg);
    for (const auto& o : overrides) harness::apply_override(doc, o);
    return harness::ExperimentConfig::from_json(doc);
  }
  return harness::load_config(cfg.cast<std::filesystem::path>(), overrides);
}

py::dict step_dict(const envs::EnvStep& s) {
  py::dict d;
  d["obs"] = s.obs;
  d["privileged_state"] = s.privileged_state;
  d["reward"] = s.reward;
  d["absorbing"] = s.absorbing;
  d["last"] = s.last;
  d["success"] = s.success;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Stateful policy-gradient laboratory";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<envs::Env>(m, "Env")
      .def_property_readonly("name", &envs::Env::name)
      .def_property_readonly("obs_dim", &envs::Env::obs_dim)
      .def_property_readonly("state_dim", &envs::Env::state_dim)
      .def_property_readonly("action_dim", &envs::Env::action_dim)
      .def_property_readonly("action_bound", &envs::Env::action_bound)
      .def_property_readonly("horizon", &envs::Env::horizon)
      .def("reset", [](envs::Env& e, std::uint64_t seed) { return step_dict(e.reset(seed)); }, py::arg("seed"))
      .def("step", [](envs::Env& e, const std::vector<double>& a) { return step_dict(e.step(a)); }, py::arg("action"));

  m.def(
      "make_env", [](const py::dict& cfg) { return envs::make_env(envs::EnvConfig::from_json(from_py(cfg))); },
      py::arg("config"), "Env from {'name': ..., 'horizon': ..., 'params': {...}}");

  m.def("z_tilde", &variance::z_tilde, py::arg("Z"), py::arg("T"));
  m.def("z_bar", &variance::z_bar, py::arg("Z"), py::arg("T"));
  m.def("normalize_returns", &harness::normalize_returns, py::arg("curve"), py::arg("reference_high"),
        py::arg("reference_low"));

  m.def(
      "gradcheck",
      [](std::uint64_t seed) {
        std::vector<std::pair<std::string, double>> out;
        for (const auto& c : harness::gradcheck_suite(seed)) out.emplace_back(c.name, c.max_relative_error);
        return out;
      },
      py::arg("seed") = 0, "(case, max relative error) for every finite-difference check");

  m.def(
      "regime_experiment",
      [](const py::dict& cfg) {
        py::list rows;
        for (const auto& r : variance::regime_experiment(variance::RegimeConfig::from_json(from_py(cfg)))) {
          py::dict d;
          d["estimator"] = r.estimator;
          d["T"] = r.T;
          d["Z_target"] = r.Z_target;
          d["empirical_variance"] = r.empirical_variance;
          d["bound"] = r.bound;
          d["ratio"] = r.ratio;
          rows.append(d);
        }
        return rows;
      },
      py::arg("config") = py::dict());

  m.def(
      "load_config",
      [](const py::object& cfg, const std::vector<std::string>& overrides) {
        return to_py(config_of(cfg, overrides).to_json());
      },
      py::arg("config"), py::arg("overrides") = std::vector<std::string>{},
      "Validated config (file path or dict) with every default filled in");

  m.def(
      "run",
      [](const py::object& cfg, const std::vector<std::string>& overrides) {
        const auto config = config_of(cfg, overrides);
        harness::RunSummary s;
        {
          py::gil_scoped_release release;
          s = harness::run(config);
        }
        py::dict d;
        d["ok"] = s.ok;
        d["message"] = s.message;
        d["wallclock"] = s.wallclock;
        std::vector<std::string> files;
        for (const auto& f : s.files) files.push_back(f.string());
        d["files"] = files;
        py::list agg;
        for (const auto& p : s.aggregate) {
          py::dict row;
          row["step"] = p.step;
          row["mean_return"] = p.mean_return;
          row["ci_low"] = p.ci_low ? py::cast(*p.ci_low) : py::none();
          row["ci_high"] = p.ci_high ? py::cast(*p.ci_high) : py::none();
          row["mean_success"] = p.mean_success;
          row["normalized"] = p.normalized ? py::cast(*p.normalized) : py::none();
          agg.append(row);
        }
        d["aggregate"] = agg;
        return d;
      },
      py::arg("config"), py::arg("overrides") = std::vector<std::string>{},
      "Runs an experiment and writes its artifacts; returns the summary");
}
