#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "aenp/config_error.hpp"
#include "aenp/eqlab.hpp"
#include "aenp/experiment.hpp"
#include "aenp/models.hpp"
#include "aenp/taskgen.hpp"
#include "aenp/tensor.hpp"

namespace py = pybind11;
using namespace aenp;

namespace {

nlohmann::json parse(const std::string& text) { return nlohmann::json::parse(text.empty() ? "{}" : text); }

py::dict task_dict(const Task& t) {
  py::dict d;
  d["x_context"] = t.x_context;
  d["y_context"] = t.y_context;
  d["x_target"] = t.x_target;
  d["y_target"] = t.y_target;
  d["beta"] = t.beta;
  d["mode"] = to_string(t.mode);
  d["seed"] = t.seed;
  d["context_lo"] = t.context_lo;
  d["context_hi"] = t.context_hi;
  return d;
}

Task task_from(const py::dict& d) {
  Task t;
  t.x_context = d["x_context"].cast<std::vector<double>>();
  t.y_context = d["y_context"].cast<std::vector<double>>();
  t.x_target = d["x_target"].cast<std::vector<double>>();
  t.y_target = d["y_target"].cast<std::vector<double>>();
  t.beta = d["beta"].cast<int>();
  return t;
}

// Owns a model built from a config or loaded from a finished train run.
class PyModel {
 public:
  explicit PyModel(const std::string& config_json) {
    ModelConfig cfg;
    from_json(parse(config_json), cfg);
    cfg.finalize();
    model_ = make_model(cfg);
  }
  explicit PyModel(std::unique_ptr<Model> m) : model_(std::move(m)) {}

  std::pair<std::vector<double>, std::vector<double>> predict(const std::vector<double>& xc,
                                                              const std::vector<double>& yc,
                                                              const std::vector<double>& xt, bool bank) const {
    NoGradGuard guard;
    const auto p = model_->forward(xc, yc, xt, bank ? BankMode::active : BankMode::off);
    return {p.mean.to_vector(), p.variance.to_vector()};
  }
  std::string config_json() const { return nlohmann::json(model_->config()).dump(); }
  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto& [name, t] : model_->params().items()) n += t.numel();
    return n;
  }

 private:
  std::unique_ptr<Model> model_;
};

}  // namespace

PYBIND11_MODULE(_aenp, m) {
  m.doc() = "Approximately equivariant neural processes: models, task generator and operator lab.";
  m.attr("git_describe") = git_describe();

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def(
      "sample_task",
      [](std::uint64_t seed, std::uint64_t index, const std::string& mode, const std::string& sampler,
         const std::string& process) {
        TaskSamplerConfig s;
        GibbsProcessConfig p;
        from_json(parse(sampler), s);
        from_json(parse(process), p);
        return task_dict(sample_task(seed, Stream::plot, index, task_mode_from_string(mode), s, p));
      },
      py::arg("seed"), py::arg("index"), py::arg("mode") = "ID", py::arg("sampler") = "", py::arg("process") = "");

  m.def(
      "oracle_loglik",
      [](const py::dict& task, const std::string& kind, bool context_as_target) {
        return gp_posterior_loglik(task_from(task), GibbsProcessConfig{},
                                   kind == "mixture" ? OracleKind::mixture : OracleKind::known_beta,
                                   context_as_target);
      },
      py::arg("task"), py::arg("kind") = "known_beta", py::arg("context_as_target") = false);

  py::class_<PyModel>(m, "Model")
      .def(py::init<const std::string&>(), py::arg("config_json"))
      .def("predict", &PyModel::predict, py::arg("x_context"), py::arg("y_context"), py::arg("x_target"),
           py::arg("bank") = true)
      .def("config_json", &PyModel::config_json)
      .def("num_parameters", &PyModel::num_parameters);

  m.def(
      "load_run", [](const std::filesystem::path& dir) { return PyModel(load_run(dir).model); }, py::arg("run_dir"));

  m.def(
      "operator_lab",
      [](const std::string& config_json) {
        const nlohmann::json j = run_operator_lab(parse_lab_config(parse(config_json)));
        return j.dump();
      },
      py::arg("config_json") = "");

  m.def(
      "run_experiment",
      [](const std::string& config_json, bool force) {
        py::gil_scoped_release release;
        return run_experiment(parse_experiment(parse(config_json)), {force, true}).string();
      },
      py::arg("config_json"), py::arg("force") = false);
}
