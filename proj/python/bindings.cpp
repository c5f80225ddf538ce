#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "difflik/benchmarks.hpp"
#include "difflik/expansion.hpp"
#include "difflik/likelihood.hpp"
#include "difflik/model.hpp"
#include "difflik/parallel.hpp"

namespace py = pybind11;
using namespace difflik;

namespace {

ObservationSeries make_series(const std::vector<std::vector<double>>& x, double delta) {
  ObservationSeries s;
  s.delta = delta;
  s.x = x;
  return s;
}

py::dict report_dict(const EstimateReport& r) {
  py::dict d;
  py::dict theta;
  for (std::size_t i = 0; i < r.names.size(); ++i) theta[py::str(r.names[i])] = r.theta[i];
  d["theta"] = theta;
  if (r.standard_errors) {
    py::dict se;
    for (std::size_t i = 0; i < r.names.size(); ++i) se[py::str(r.names[i])] = (*r.standard_errors)[i];
    d["standard_errors"] = se;
  } else {
    d["standard_errors"] = py::none();
  }
  d["loglik"] = r.loglik;
  d["status"] = to_string(r.status);
  d["converged"] = r.converged();
  d["iterations"] = r.iterations;
  d["evaluations"] = r.evaluations;
  d["warnings"] = r.warnings;
  return d;
}

}  // namespace

PYBIND11_MODULE(_difflik, m) {
  m.doc() = "Closed-form transition density expansions and approximate maximum likelihood for diffusions";

  static py::exception<Error> error(m, "Error", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      error(e.what());
    }
  });

  py::class_<ModelSpec>(m, "Model")
      .def_readonly("name", &ModelSpec::name)
      .def_readonly("dims", &ModelSpec::m)
      .def_readonly("params", &ModelSpec::params)
      .def_readonly("presets", &ModelSpec::presets)
      .def_property_readonly("has_lamperti", [](const ModelSpec& s) { return s.lamperti.has_value(); })
      .def("violation", &ModelSpec::violation, py::arg("theta"))
      .def("__repr__", [](const ModelSpec& s) { return "<Model " + s.name + " m=" + std::to_string(s.m) + ">"; });

  m.def("load_model", &load_model, py::arg("path"));
  m.def("parse_model", [](const std::string& text) { return parse_model(text); }, py::arg("text"));
  m.def("benchmark_model", [](const std::string& kind) { return benchmark_model(parse_kind(kind)); }, py::arg("kind"));
  m.def("benchmark_preset",
        [](const std::string& kind, const std::string& name) { return benchmark_preset(parse_kind(kind), name); },
        py::arg("kind"), py::arg("name") = "benchmark");

  py::class_<DensityExpansion>(m, "Expansion")
      .def_property_readonly("order", &DensityExpansion::order)
      .def("density",
           [](const DensityExpansion& e, double delta, const std::vector<double>& x) { return e.evaluate(delta, x); },
           py::arg("delta"), py::arg("x"))
      .def("log_density",
           [](const DensityExpansion& e, double delta, const std::vector<double>& x) {
             return e.log_density(delta, x);
           },
           py::arg("delta"), py::arg("x"))
      .def("corrections",
           [](const DensityExpansion& e) {
             // one {exponents: coefficient} map per order, in the standardized variable
             py::list out;
             for (const auto& t : e.terms()) {
               py::dict q;
               for (const auto& [exp, c] : t.q.terms()) {
                 py::tuple key(exp.size());
                 for (std::size_t i = 0; i < exp.size(); ++i) key[i] = exp[i];
                 q[key] = c;
               }
               out.append(q);
             }
             return out;
           });

  m.def("expand",
        [](const ModelSpec& model, const ParameterValues& theta, const std::vector<double>& x0, int order) {
          return expand(model, theta, x0, order);
        },
        py::arg("model"), py::arg("theta"), py::arg("x0"), py::arg("order"));

  m.def("approx_loglik",
        [](const ModelSpec& model, const ParameterValues& theta, const std::vector<std::vector<double>>& x,
           double delta, int order, bool lamperti) {
          const ObservationSeries s = make_series(x, delta);
          py::gil_scoped_release release;
          return approx_loglik(model, theta, s, order, lamperti);
        },
        py::arg("model"), py::arg("theta"), py::arg("x"), py::arg("delta"), py::arg("order"),
        py::arg("lamperti") = false);

  m.def("fit",
        [](const ModelSpec& model, const std::vector<std::vector<double>>& x, double delta, int order,
           const std::vector<double>& start, bool lamperti, std::map<std::string, std::pair<double, double>> box) {
          const ObservationSeries s = make_series(x, delta);
          FitOptions opt;
          for (const auto& [name, b] : box) opt.box[name] = Interval{b.first, b.second};
          EstimateReport r;
          {
            py::gil_scoped_release release;
            r = fit(model, s, order, start, opt, lamperti);
          }
          return report_dict(r);
        },
        py::arg("model"), py::arg("x"), py::arg("delta"), py::arg("order"), py::arg("start"),
        py::arg("lamperti") = false, py::arg("box") = std::map<std::string, std::pair<double, double>>{});

  m.def("simulate",
        [](const std::string& kind, const ParameterValues& theta, double delta, std::size_t n,
           const std::vector<double>& x0, std::uint64_t seed) {
          return simulate(parse_kind(kind), theta, delta, n, x0, seed).x;
        },
        py::arg("kind"), py::arg("theta"), py::arg("delta"), py::arg("n"), py::arg("x0"), py::arg("seed"));

  m.def("exact_log_density",
        [](const std::string& kind, const ParameterValues& theta, double delta, const std::vector<double>& x,
           const std::vector<double>& x0) { return exact_log_density(parse_kind(kind), theta, delta, x, x0); },
        py::arg("kind"), py::arg("theta"), py::arg("delta"), py::arg("x"), py::arg("x0"));

  m.def("exact_mle",
        [](const std::string& kind, const std::vector<std::vector<double>>& x, double delta) {
          const ObservationSeries s = make_series(x, delta);
          EstimateReport r;
          {
            py::gil_scoped_release release;
            r = exact_mle(parse_kind(kind), s);
          }
          return report_dict(r);
        },
        py::arg("kind"), py::arg("x"), py::arg("delta"));

  m.def("thread_count", &thread_count);
  m.def("set_thread_count", &set_thread_count, py::arg("n"));
}
