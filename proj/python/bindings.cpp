#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "survhte/did_test.hpp"
#include "survhte/dgp.hpp"
#include "survhte/harness.hpp"
#include "survhte/io.hpp"
#include "survhte/methods.hpp"
#include "survhte/metrics.hpp"
#include "survhte/survival.hpp"

namespace py = pybind11;
using namespace survhte;

namespace {

Flags to_flags(const std::vector<int>& v) {
  Flags f(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) f[i] = v[i] != 0;
  return f;
}

std::vector<int> from_flags(const Flags& f) { return {f.begin(), f.end()}; }

py::dict estimate_dict(const metrics::Estimate& e) {
  py::dict d;
  d["mean"] = e.mean;
  d["half_width"] = e.half_width;
  d["count"] = e.count;
  return d;
}

py::dict record_dict(const harness::RepetitionRecord& r) {
  py::dict d;
  d["scenario"] = r.scenario;
  d["arr_index"] = r.arr_index;
  d["arr1"] = r.arr1;
  d["rep"] = r.rep;
  d["method"] = std::string(methods::method_name(r.method));
  d["het_p"] = r.het_p;
  d["degenerate"] = r.degenerate;
  d["top_var"] = r.top_var;
  d["importance"] = r.importance;
  d["accuracy"] = r.accuracy;
  d["fit_seconds"] = r.fit_seconds;
  d["rule"] = r.rule;
  d["note"] = r.note;
  return d;
}

}  // namespace

PYBIND11_MODULE(_survhte, m) {
  m.doc() = "Subgroup analysis benchmark for time-to-event randomized trials";

  py::class_<TrialData>(m, "TrialData")
      .def(py::init([](Matrix x, std::vector<int> w, std::vector<double> time, std::vector<int> event,
                       std::optional<std::vector<int>> g) {
             TrialData d;
             d.covariates = std::move(x);
             d.treatment = to_flags(w);
             d.time = std::move(time);
             d.event = to_flags(event);
             if (g) d.true_subgroup = to_flags(*g);
             d.validate();
             return d;
           }),
           py::arg("covariates"), py::arg("treatment"), py::arg("time"), py::arg("event"),
           py::arg("true_subgroup") = py::none())
      .def_property_readonly("covariates", [](const TrialData& d) { return d.covariates; })
      .def_property_readonly("treatment", [](const TrialData& d) { return from_flags(d.treatment); })
      .def_property_readonly("time", [](const TrialData& d) { return d.time; })
      .def_property_readonly("event", [](const TrialData& d) { return from_flags(d.event); })
      .def_property_readonly("true_subgroup",
                             [](const TrialData& d) -> std::optional<std::vector<int>> {
                               if (!d.true_subgroup) return std::nullopt;
                               return from_flags(*d.true_subgroup);
                             })
      .def_property_readonly("n", &TrialData::n)
      .def_property_readonly("p", &TrialData::p)
      .def("slice", &TrialData::slice)
      .def("event_count", &TrialData::event_count);

  // Survival core
  m.def(
      "kaplan_meier",
      [](const std::vector<double>& time, const std::vector<int>& event) {
        const SurvivalCurve c = kaplan_meier(time, to_flags(event));
        return py::make_tuple(c.times, c.survival);
      },
      py::arg("time"), py::arg("event"), "Product-limit estimate as (times, survival).");
  m.def(
      "fit_cox",
      [](const Matrix& x, const std::vector<double>& time, const std::vector<int>& event, double ridge,
         const std::vector<int>& unpenalized) {
        const CoxFit f = fit_cox(x, time, to_flags(event), ridge, to_flags(unpenalized));
        py::dict d;
        d["coefficients"] = Vector(f.coefficients);
        d["covariance"] = Matrix(f.covariance);
        d["wald_p"] = f.wald_p;
        d["converged"] = f.converged;
        d["iterations"] = f.iterations;
        d["penalized_loglik"] = f.penalized_loglik;
        return d;
      },
      py::arg("design"), py::arg("time"), py::arg("event"), py::arg("ridge") = 0.0,
      py::arg("unpenalized") = std::vector<int>{});
  m.def(
      "logrank_test",
      [](const std::vector<double>& time, const std::vector<int>& event, const std::vector<int>& group) {
        const LogRankResult r = logrank_test(time, to_flags(event), to_flags(group));
        return py::make_tuple(r.z, r.p_value);
      },
      py::arg("time"), py::arg("event"), py::arg("group"), "Returns (z, p_value).");
  m.def(
      "diff_in_diff_test",
      [](const TrialData& d, const std::vector<int>& subgroup, std::uint64_t seed) {
        Rng rng(seed);
        const TestResult t = diff_in_diff_test(d, to_flags(subgroup), rng);
        py::dict out;
        out["statistic"] = t.statistic;
        out["p_value"] = t.p_value;
        out["degenerate"] = t.degenerate;
        return out;
      },
      py::arg("data"), py::arg("subgroup"), py::arg("seed") = 0);

  // Data generation
  py::class_<dgp::GeneratorConfig>(m, "GeneratorConfig")
      .def(py::init([](std::size_t p, std::optional<Vector> gamma, std::optional<std::string> subgroup,
                       std::optional<std::pair<double, double>> censoring, std::size_t n) {
             dgp::GeneratorConfig c;
             c.p = p;
             c.gamma = gamma ? *gamma : dgp::prognostic_vector(p);
             c.subgroup = subgroup ? SubgroupDefinition::parse(*subgroup)
                                   : SubgroupDefinition::at_least({p - 4, p - 3, p - 2, p - 1});
             if (censoring) c.censoring = dgp::BetaCensoring{censoring->first, censoring->second, 20.0};
             c.n = n;
             c.validate();
             return c;
           }),
           py::arg("p"), py::arg("gamma") = py::none(), py::arg("subgroup") = py::none(),
           py::arg("censoring") = py::none(), py::arg("n") = 500)
      .def_readwrite("n", &dgp::GeneratorConfig::n)
      .def_readonly("p", &dgp::GeneratorConfig::p)
      .def_property_readonly("gamma", [](const dgp::GeneratorConfig& c) { return Vector(c.gamma); })
      .def_property_readonly("subgroup", [](const dgp::GeneratorConfig& c) { return c.subgroup.describe(); })
      .def("calibration_hash", &dgp::GeneratorConfig::calibration_hash);

  py::class_<dgp::CalibrationCurve>(m, "CalibrationCurve")
      .def_readonly("beta_grid", &dgp::CalibrationCurve::beta_grid)
      .def_readonly("arr0", &dgp::CalibrationCurve::arr0)
      .def_readonly("arr1", &dgp::CalibrationCurve::arr1)
      .def_readonly("prevalence", &dgp::CalibrationCurve::prevalence)
      .def_readonly("mc_size", &dgp::CalibrationCurve::mc_size)
      .def_readonly("seed", &dgp::CalibrationCurve::seed)
      .def_readonly("config_hash", &dgp::CalibrationCurve::config_hash);

  py::class_<dgp::HeterogeneityPoint>(m, "HeterogeneityPoint")
      .def_readonly("arr1_target", &dgp::HeterogeneityPoint::arr1_target)
      .def_readonly("arr0_target", &dgp::HeterogeneityPoint::arr0_target)
      .def_readonly("beta1", &dgp::HeterogeneityPoint::beta1)
      .def_readonly("beta0", &dgp::HeterogeneityPoint::beta0);

  m.def("prognostic_vector", &dgp::prognostic_vector, py::arg("p"));
  m.def(
      "calibrate",
      [](const dgp::GeneratorConfig& c, std::size_t mc_size, std::uint64_t seed, std::size_t grid_points,
         unsigned workers) {
        py::gil_scoped_release release;
        return dgp::calibrate(c, dgp::beta_grid(grid_points), mc_size, seed, workers);
      },
      py::arg("config"), py::arg("mc_size"), py::arg("seed"), py::arg("grid_points") = 201, py::arg("workers") = 1);
  m.def("max_null_arr1", &dgp::max_null_arr1, py::arg("curve"));
  m.def("heterogeneity_point", &dgp::heterogeneity_point, py::arg("curve"), py::arg("arr1"));
  m.def("arr_grid", &dgp::arr_grid, py::arg("curve"), py::arg("n_points") = 10);
  m.def("solve_null_constraint", &dgp::solve_null_constraint, py::arg("arr1"), py::arg("prevalence"));
  m.def("generate_trial", &dgp::generate_trial, py::arg("config"), py::arg("point"), py::arg("seed"));
  m.def("survival_at", &dgp::survival_at, py::arg("t"), py::arg("lp"));
  m.def("write_calibration", &io::write_calibration, py::arg("path"), py::arg("curve"));
  m.def("read_calibration", &io::read_calibration, py::arg("path"));
  m.def("read_trial", &io::read_trial, py::arg("path"));
  m.def("write_trial", py::overload_cast<const std::filesystem::path&, const TrialData&>(&io::write_trial),
        py::arg("path"), py::arg("data"));

  // Methods
  py::class_<methods::SubgroupPredictor>(m, "SubgroupPredictor")
      .def("predict",
           [](const methods::SubgroupPredictor& s, const Matrix& x) { return from_flags(s.predict(x)); })
      .def("describe", &methods::SubgroupPredictor::describe);

  m.def("method_names", [] {
    std::vector<std::string> out;
    for (auto id : methods::kAllMethods) out.emplace_back(methods::method_name(id));
    return out;
  });
  m.def("is_predictive", [](const std::string& name) { return methods::is_predictive(methods::parse_method(name)); });
  m.def(
      "fit_method",
      [](const std::string& name, const TrialData& train, std::uint64_t seed, std::optional<std::string> truth) {
        const auto id = methods::parse_method(name);
        const SubgroupDefinition def = truth ? SubgroupDefinition::parse(*truth) : SubgroupDefinition{};
        Rng rng(seed);
        methods::MethodResult r;
        {
          py::gil_scoped_release release;
          r = methods::fit_method(id, train, rng, def);
        }
        py::dict d;
        d["method"] = name;
        d["het_p"] = r.het_p;
        d["degenerate"] = r.het_degenerate;
        d["importance"] = r.importance;
        d["predictor"] = r.predictor ? py::cast(*r.predictor) : py::none();
        d["fit_seconds"] = r.fit_seconds;
        d["note"] = r.note;
        return d;
      },
      py::arg("method"), py::arg("train"), py::arg("seed") = 0, py::arg("truth") = py::none(),
      "Fits one method; `truth` is the generating rule, needed by the oracle.");

  // Metrics
  m.def(
      "rejection_rate",
      [](const std::vector<double>& p, double alpha) { return estimate_dict(metrics::rejection_rate(p, alpha)); },
      py::arg("pvalues"), py::arg("alpha") = 0.05);
  m.def(
      "top_rank_hit",
      [](const std::vector<double>& imp, const std::vector<std::size_t>& predictive) {
        return metrics::top_rank_hit(imp, predictive);
      },
      py::arg("importance"), py::arg("predictive"), "`predictive` holds 0-based variable indices.");
  m.def(
      "average_precision",
      [](const std::vector<double>& imp, const std::vector<int>& labels) {
        return metrics::average_precision(imp, to_flags(labels));
      },
      py::arg("importance"), py::arg("labels"));
  m.def(
      "classification_accuracy",
      [](const methods::SubgroupPredictor& s, const TrialData& d) { return metrics::classification_accuracy(s, d); },
      py::arg("predictor"), py::arg("validation"));

  // Harness
  py::register_exception<harness::ConfigError>(m, "ConfigError", PyExc_ValueError);
  m.def(
      "run_benchmark",
      [](const std::filesystem::path& scenario, std::optional<std::size_t> reps, std::optional<std::size_t> arr_points,
         std::optional<std::vector<std::string>> method_list, unsigned workers,
         std::optional<std::filesystem::path> out_dir) {
        harness::ScenarioSpec spec = harness::load_scenario(scenario);
        if (reps) spec.repetitions = *reps;
        if (arr_points) spec.arr_points = *arr_points;
        if (method_list) {
          spec.methods.clear();
          for (const auto& n : *method_list) spec.methods.push_back(methods::parse_method(n));
        }
        harness::RunOptions opt;
        opt.workers = workers;
        opt.write_outputs = out_dir.has_value();
        if (out_dir) spec.output_dir = *out_dir;
        harness::BenchmarkReport report;
        {
          py::gil_scoped_release release;
          const auto curve = harness::load_or_calibrate(spec, workers);
          report = harness::run_benchmark(spec, curve, opt);
        }
        py::list records;
        for (const auto& r : report.records) records.append(record_dict(r));
        py::list aggregates;
        for (const auto& a : report.aggregates) {
          py::dict d = estimate_dict(a.estimate);
          d["scenario"] = a.scenario;
          d["arr1"] = a.arr1;
          d["method"] = a.method;
          d["metric"] = a.metric;
          aggregates.append(d);
        }
        py::dict out;
        out["records"] = records;
        out["aggregates"] = aggregates;
        out["spec_hash"] = report.spec_hash;
        return out;
      },
      py::arg("scenario"), py::arg("reps") = py::none(), py::arg("arr_points") = py::none(),
      py::arg("methods") = py::none(), py::arg("workers") = 1, py::arg("out_dir") = py::none(),
      "Runs a scenario file; outputs are written only when out_dir is given.");
}
