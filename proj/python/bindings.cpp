#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "psel/bounds.hpp"
#include "psel/cli.hpp"
#include "psel/config.hpp"
#include "psel/errors.hpp"
#include "psel/estimators.hpp"
#include "psel/model.hpp"
#include "psel/montecarlo.hpp"
#include "psel/selection.hpp"
#include "psel/special.hpp"

namespace py = pybind11;
using namespace psel;

namespace {

ObservationSet observations(const std::vector<std::vector<double>>& populations) {
  ObservationSet x;
  x.populations = populations;
  return x;
}

py::dict summary_dict(const McSummary& s) {
  py::list rows;
  for (const auto& r : s.rows) {
    py::dict row;
    row["sweep_value"] = r.sweep_value;
    row["estimator"] = r.estimator;
    row["psmse"] = r.psmse;
    row["psmse_se"] = r.psmse_se;
    row["bias_sel"] = r.bias_sel;
    row["bias_sel_se"] = r.bias_sel_se;
    row["bias_unsel"] = r.bias_unsel;
    row["bias_unsel_se"] = r.bias_unsel_se;
    row["frequency"] = Vector(r.bias.frequency);
    row["conditional_bias"] = Matrix(r.bias.conditional);
    row["indicator_bias"] = Matrix(r.bias.indicator);
    row["indicator_bias_se"] = Matrix(r.bias.indicator_se);
    row["conditional_mse"] = Vector(r.conditional_mse);
    row["psi_crb"] = r.psi_crb;
    row["biased_psi_crb"] = r.biased_psi_crb;
    row["failures"] = r.failures;
    row["nonconverged"] = r.nonconverged;
    rows.append(row);
  }
  py::dict out;
  out["rows"] = rows;
  out["workers"] = s.workers;
  out["config"] = dump_config(s.config);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Estimation after parameter selection";

  py::register_exception<Error>(m, "PselError");

  py::enum_<Family>(m, "Family")
      .value("GAUSSIAN_LINEAR", Family::GaussianLinear)
      .value("EXPONENTIAL", Family::Exponential)
      .value("UNIFORM", Family::Uniform);

  py::class_<ModelSpec>(m, "ModelSpec")
      .def_static("gaussian", &ModelSpec::gaussian, py::arg("noise_variances"), py::arg("N"))
      .def_static("exponential", &ModelSpec::exponential, py::arg("M"), py::arg("N"))
      .def_static("uniform", &ModelSpec::uniform, py::arg("M"), py::arg("N"))
      .def_readonly("family", &ModelSpec::family)
      .def_readonly("M", &ModelSpec::M)
      .def_readonly("N", &ModelSpec::N)
      .def_readonly("noise_variances", &ModelSpec::noise_variances);

  py::class_<SelectionRule>(m, "SelectionRule")
      .def_static("sms", &SelectionRule::sms)
      .def_static("randomized", &SelectionRule::randomized, py::arg("weights"))
      .def_property_readonly("randomized_rule", [](const SelectionRule& r) { return r.kind == RuleKind::Randomized; })
      .def_readonly("weights", &SelectionRule::weights);

  py::enum_<PsfimMethod>(m, "PsfimMethod")
      .value("DEFINITION", PsfimMethod::Definition)
      .value("SCORE", PsfimMethod::ScoreForm)
      .value("HESSIAN", PsfimMethod::HessianForm)
      .value("CLOSED", PsfimMethod::ClosedForm);

  py::class_<EstimateResult>(m, "EstimateResult")
      .def_readonly("theta_hat", &EstimateResult::theta_hat)
      .def_readonly("selected_m", &EstimateResult::selected_m)
      .def_readonly("iterations", &EstimateResult::iterations)
      .def_readonly("final_score_norm", &EstimateResult::final_score_norm)
      .def_readonly("converged", &EstimateResult::converged)
      .def_readonly("boundary_hit", &EstimateResult::boundary_hit)
      .def_readonly("theta_standard_error", &EstimateResult::theta_standard_error);

  py::class_<ComponentBound>(m, "ComponentBound")
      .def_readonly("m", &ComponentBound::m)
      .def_readonly("pr_select", &ComponentBound::pr_select)
      .def_readonly("pr_se", &ComponentBound::pr_se)
      .def_readonly("bound", &ComponentBound::bound)
      .def_readonly("bound_se", &ComponentBound::bound_se);

  py::class_<PsiCrbReport>(m, "PsiCrbReport")
      .def_readonly("per_component", &PsiCrbReport::per_component)
      .def_readonly("aggregate", &PsiCrbReport::aggregate)
      .def_readonly("aggregate_se", &PsiCrbReport::aggregate_se);

  m.def("normal_cdf", &normal_cdf);
  m.def("inverse_mills", &inverse_mills);
  m.def("c_factor", &c_factor);
  m.def("zeta_factor", &zeta_factor, py::arg("delta"), py::arg("kappa"));

  m.def("ml_estimate", [](const ModelSpec& model, const std::vector<std::vector<double>>& pops) {
    return ml_estimate(model, observations(pops));
  });
  m.def("fim", &fim);
  m.def("select", [](const SelectionRule& rule, const ModelSpec& model, const std::vector<std::vector<double>>& pops) {
    return select(rule, model, observations(pops));
  });
  m.def(
      "selection_probability",
      [](const SelectionRule& rule, const ModelSpec& model, const Vector& theta, int sel) {
        return selection_probability(rule, model, theta, sel).value;
      },
      py::arg("rule"), py::arg("model"), py::arg("theta"), py::arg("m"));
  m.def("grad_log_selection_probability", &grad_log_selection_probability);

  m.def(
      "psfim",
      [](const ModelSpec& model, const SelectionRule& rule, const Vector& theta, int sel, PsfimMethod method,
         long long reps, std::uint64_t seed) {
        McOptions opts;
        opts.replications = reps;
        opts.seed = seed;
        return psfim(model, rule, theta, sel, method, opts).J;
      },
      py::arg("model"), py::arg("rule"), py::arg("theta"), py::arg("m"), py::arg("method") = PsfimMethod::ClosedForm,
      py::arg("replications") = 100000, py::arg("seed") = 0);
  m.def(
      "psi_crb",
      [](const ModelSpec& model, const SelectionRule& rule, const Vector& theta, PsfimMethod method, long long reps,
         std::uint64_t seed) {
        McOptions opts;
        opts.replications = reps;
        opts.seed = seed;
        return psi_crb(model, rule, theta, method, opts);
      },
      py::arg("model"), py::arg("rule"), py::arg("theta"), py::arg("method") = PsfimMethod::ClosedForm,
      py::arg("replications") = 100000, py::arg("seed") = 0);
  m.def("psi_crb_gaussian_closed", &psi_crb_gaussian_closed, py::arg("theta"), py::arg("noise_variances"),
        py::arg("N"));
  m.def("psi_crb_exponential_n1", py::overload_cast<double, double>(&psi_crb_exponential_n1), py::arg("theta_m"),
        py::arg("theta_k"));
  m.def("analytic_conditional_bias", &analytic_conditional_bias);

  auto solver = [](int max_iterations, double tol) {
    SolverConfig cfg;
    cfg.max_iterations = max_iterations;
    cfg.score_tolerance = tol;
    return cfg;
  };
  m.def(
      "psml_newton_raphson",
      [solver](const ModelSpec& model, const SelectionRule& rule, const std::vector<std::vector<double>>& pops,
               std::optional<int> selected, int max_iterations, double tol) {
        return psml_newton_raphson(model, rule, observations(pops), solver(max_iterations, tol), selected);
      },
      py::arg("model"), py::arg("rule"), py::arg("populations"), py::arg("selected") = py::none(),
      py::arg("max_iterations") = 200, py::arg("score_tolerance") = 1e-10);
  m.def(
      "psml_fisher_scoring",
      [solver](const ModelSpec& model, const SelectionRule& rule, const std::vector<std::vector<double>>& pops,
               std::optional<int> selected, int max_iterations, double tol) {
        return psml_fisher_scoring(model, rule, observations(pops), solver(max_iterations, tol), selected);
      },
      py::arg("model"), py::arg("rule"), py::arg("populations"), py::arg("selected") = py::none(),
      py::arg("max_iterations") = 200, py::arg("score_tolerance") = 1e-10);
  m.def(
      "psml_mbp",
      [solver](const ModelSpec& model, const SelectionRule& rule, const std::vector<std::vector<double>>& pops,
               std::optional<int> selected, int max_iterations, double tol) {
        return psml_mbp(model, rule, observations(pops), solver(max_iterations, tol), MbpVariant::Exact, selected);
      },
      py::arg("model"), py::arg("rule"), py::arg("populations"), py::arg("selected") = py::none(),
      py::arg("max_iterations") = 200, py::arg("score_tolerance") = 1e-10);
  m.def("psml_exponential_closed", [](const ModelSpec& model, const std::vector<std::vector<double>>& pops) {
    return psml_exponential_closed(model, observations(pops));
  });
  m.def("uv_estimate", [](const ModelSpec& model, const std::vector<std::vector<double>>& pops) {
    return uv_estimate(model, observations(pops));
  });

  m.def(
      "run_experiment",
      [](const std::string& config_json) {
        const ExperimentConfig cfg = parse_config(config_json);
        McSummary summary;
        {
          py::gil_scoped_release release;
          summary = run_experiment(cfg);
        }
        return summary_dict(summary);
      },
      py::arg("config_json"));
  m.def("dump_config", [](const std::string& config_json) { return dump_config(parse_config(config_json)); });
  m.def("preset_names", &preset_names);
  m.def(
      "preset_config",
      [](const std::string& name, std::optional<std::uint64_t> seed, std::optional<long long> reps, bool fast) {
        PresetOverrides o;
        o.seed = seed;
        o.replications = reps;
        o.fast = fast;
        return dump_config(preset_config(name, o));
      },
      py::arg("name"), py::arg("seed") = py::none(), py::arg("replications") = py::none(), py::arg("fast") = false);
  m.attr("__version__") = kToolVersion;
}
