#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "conjlab/conjlab.hpp"
#include "experiment.hpp"

namespace py = pybind11;
using namespace conjlab;

namespace {

Method method_from(const std::string& name) {
  if (name == "rk4") return Method::rk4;
  if (name == "euler") return Method::euler;
  throw InvalidArgument("method must be rk4 or euler");
}

}  // namespace

PYBIND11_MODULE(_conjlab, m) {
  m.doc() = "Similarity and conjugacy analysis of dynamical systems";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", error.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  auto numerical = py::register_exception<NumericalError>(m, "NumericalError", error.ptr());
  py::register_exception<BlowUpError>(m, "BlowUpError", numerical.ptr());
  py::register_exception<SingularMatrixError>(m, "SingularMatrixError", numerical.ptr());

  py::class_<SystemSpec>(m, "SystemSpec")
      .def_readonly("name", &SystemSpec::name)
      .def_readonly("dim", &SystemSpec::dim)
      .def_property_readonly("kind", [](const SystemSpec& s) { return to_string(s.kind); })
      .def_readonly("params", &SystemSpec::params)
      .def_static("lorenz", &SystemSpec::lorenz, py::arg("name"), py::arg("sigma"), py::arg("rho"), py::arg("beta"))
      .def_static("chua", &SystemSpec::chua, py::arg("name"), py::arg("alpha"), py::arg("beta"), py::arg("m0"),
                  py::arg("m1"))
      .def_static("chen", &SystemSpec::chen, py::arg("name"), py::arg("a"), py::arg("b"), py::arg("c"))
      .def_static("linear_affine", &SystemSpec::linear_affine, py::arg("name"), py::arg("A"), py::arg("B"))
      .def_static(
          "custom",
          [](std::string name, int dim, std::function<Vector(double, const Vector&)> f) {
            return SystemSpec::make_custom(std::move(name), dim, std::move(f));
          },
          py::arg("name"), py::arg("dim"), py::arg("field"))
      .def("field", [](const SystemSpec& s, double t, const Vector& x) { return eval_field(s, t, x); })
      .def("jacobian", [](const SystemSpec& s, double t, const Vector& x) { return eval_jacobian(s, t, x); })
      .def("__repr__", [](const SystemSpec& s) { return "<SystemSpec " + s.name + " (" + to_string(s.kind) + ")>"; });

  py::class_<Trajectory>(m, "Trajectory")
      .def(py::init<double, double, Matrix>(), py::arg("t0"), py::arg("dt"), py::arg("states"))
      .def_property_readonly("t0", &Trajectory::t0)
      .def_property_readonly("dt", &Trajectory::dt)
      .def_property_readonly("dim", &Trajectory::dim)
      .def_property_readonly("states", &Trajectory::states, "dim x samples")
      .def_property_readonly("times",
                             [](const Trajectory& tr) {
                               Vector t(static_cast<Eigen::Index>(tr.size()));
                               for (std::size_t k = 0; k < tr.size(); ++k) t(static_cast<Eigen::Index>(k)) = tr.time(k);
                               return t;
                             })
      .def("__len__", &Trajectory::size);

  m.def(
      "integrate",
      [](const SystemSpec& s, const Vector& x0, double horizon, double dt, const std::string& method, double t0) {
        return integrate(s, x0, t0, horizon, {method_from(method), dt});
      },
      py::arg("spec"), py::arg("x0"), py::arg("horizon"), py::arg("dt") = 0.01, py::arg("method") = "rk4",
      py::arg("t0") = 0.0);
  m.def("augment_time", &augment_time);
  m.def("expm", &expm);

  auto presets_mod = m.def_submodule("presets", "Systems and initial states of the chaotic-pair experiments");
  presets_mod.def("lorenz1", &presets::lorenz1);
  presets_mod.def("lorenz2", &presets::lorenz2);
  presets_mod.def("chua", &presets::chua);
  presets_mod.def("chen", &presets::chen);
  presets_mod.def("lorenz_x0", &presets::lorenz_x0);
  presets_mod.def("chua_y0", &presets::chua_y0);
  presets_mod.def("chen_z0", &presets::chen_z0);

  m.def("similarity_degree", &similarity_degree, py::arg("J"));
  m.def(
      "discrete_cost", [](const Matrix& K, const Trajectory& X, const Trajectory& Y) { return discrete_cost(K, X, Y); },
      py::arg("K"), py::arg("X"), py::arg("Y"));
  m.def(
      "similarity_curve",
      [](const Matrix& K, const Trajectory& X, const Trajectory& Y) { return evaluate_similarity_over_time(K, X, Y); },
      py::arg("K"), py::arg("X"), py::arg("Y"));

  py::class_<MapSequence>(m, "MapSequence")
      .def_readonly("start", &MapSequence::start)
      .def_readonly("matrices", &MapSequence::matrices)
      .def_readonly("invertible", &MapSequence::invertible)
      .def("at", &MapSequence::at)
      .def("flagged", &MapSequence::flagged)
      .def("__len__", &MapSequence::size);
  m.def("algorithm1_solve_Kt", &algorithm1_solve_Kt, py::arg("X"), py::arg("Y"));

  py::class_<Algorithm2Result>(m, "Algorithm2Result")
      .def_readonly("K", &Algorithm2Result::K)
      .def_readonly("index", &Algorithm2Result::index)
      .def_readonly("initial_rho", &Algorithm2Result::initial_rho)
      .def_property_readonly("rho", [](const Algorithm2Result& r) { return r.report.rho; })
      .def_property_readonly("J_N", [](const Algorithm2Result& r) { return r.report.J_N; })
      .def_readonly("candidate_rho", &Algorithm2Result::candidate_rho)
      .def_readonly("best_so_far", &Algorithm2Result::best_so_far)
      .def_readonly("all_flagged", &Algorithm2Result::all_flagged);
  m.def("algorithm2_best_constant_K", &algorithm2_best_constant_K, py::arg("X"), py::arg("Y"), py::arg("threads") = 0);
  m.def("best_constant_K_least_squares", &best_constant_K_least_squares, py::arg("X"), py::arg("Y"));

  py::class_<AffineMap>(m, "AffineMap")
      .def_readonly("M", &AffineMap::M)
      .def_readonly("b", &AffineMap::b)
      .def("__call__", &AffineMap::operator())
      .def("invertible", &AffineMap::invertible);
  py::class_<PiecewiseAffineMap>(m, "PiecewiseAffineMap")
      .def_property_readonly("breakpoints", &PiecewiseAffineMap::breakpoints)
      .def_property_readonly("maps", &PiecewiseAffineMap::maps)
      .def("segments", &PiecewiseAffineMap::segments)
      .def("apply", &PiecewiseAffineMap::apply, py::arg("t"), py::arg("x"))
      .def("to_json", [](const PiecewiseAffineMap& p) { return to_json(p); });
  m.def("rotation_between", &rotation_between, py::arg("u"), py::arg("v"));
  m.def("build_polyline_conjugacy", &build_polyline_conjugacy, py::arg("px"), py::arg("py"));
  m.def("polyline_residual", &polyline_residual, py::arg("pmap"), py::arg("px"), py::arg("py"),
        py::arg("per_segment") = 3);

  m.def("stationarity_residual", &stationarity_residual, py::arg("K"), py::arg("X"), py::arg("Y"));

  m.def(
      "predict_future",
      [](const std::vector<Trajectory>& history) { return predict_future(SegmentSeries(history)).state; },
      py::arg("history"), "Next-window state from consecutive equal-length windows, earliest first.");
  m.def(
      "infer_past", [](const std::vector<Trajectory>& future) { return infer_past(SegmentSeries(future)).state; },
      py::arg("future"));
  m.def("takens_dimension", &takens_dimension, py::arg("d_attractor"));

  m.def("decay_factor", &decay_factor, py::arg("M"), py::arg("eta"), py::arg("c1"), py::arg("c2"), py::arg("x0_norm"),
        py::arg("t1"));

  m.def(
      "run_experiment",
      [](const std::string& command, const std::string& config_json, const std::string& out_dir) {
        auto cfg = config_json.empty() ? cli::default_config() : cli::parse_config(config_json);
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        cfg.validate();
        return cli::run(command, cfg);
      },
      py::arg("command"), py::arg("config_json") = "", py::arg("out_dir") = "",
      "Runs a command-line subcommand in-process and returns the paths written.");
  m.attr("subcommands") = cli::subcommands();
  m.attr("schema_version") = cli::kSchemaVersion;
}
