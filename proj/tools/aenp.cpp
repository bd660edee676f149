// Command-line front end.
//
//   aenp train    --config run.json [--set train.lr=1e-3 ...] [--out DIR] [--force]
//   aenp eval     --config eval.json --checkpoint RUN_DIR --out DIR
//   aenp ablate-b --config ablate.json --out DIR
//   aenp eqlab    [--config lab.json] --out DIR
//   aenp plot     --run RUN_DIR [--tasks N] [--out DIR]
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure, 1 anything else.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aenp/config_error.hpp"
#include "aenp/experiment.hpp"
#include "aenp/report.hpp"
#include "aenp/tensor.hpp"
#include "json.hpp"

using namespace aenp;

namespace {

nlohmann::json load_document(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path, {"--config"});
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what(), {"--config"});
  }
}

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  bool force = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "Experiment JSON file");
  cmd->add_option("-s,--set", c.overrides, "Dotted override, e.g. train.lr=1e-3 (repeatable)");
  cmd->add_option("-o,--out", c.out, "Output directory (overrides output_dir)");
  cmd->add_flag("-f,--force", c.force, "Overwrite an existing run directory");
  cmd->add_flag("-q,--quiet", c.quiet, "No per-epoch progress");
}

int run_verb(const std::string& experiment, const Common& c, const std::string& checkpoint) {
  nlohmann::json doc = load_document(c.config);
  if (!doc.is_object()) throw ConfigError("experiment config must be a JSON object", {""});
  doc["experiment"] = experiment;
  for (const auto& o : c.overrides) apply_override(doc, o);
  if (!c.out.empty()) doc["output_dir"] = c.out;
  if (!checkpoint.empty()) doc["checkpoint"] = checkpoint;
  const ExperimentConfig cfg = parse_experiment(doc);
  const auto table = run_experiment(cfg, {c.force, c.quiet});
  std::cout << table.string() << "\n";
  return 0;
}

int plot_verb(const std::string& run_dir, std::size_t n_tasks, std::string out) {
  const std::filesystem::path dir(run_dir);
  std::ifstream in(dir / "config.json");
  if (!in) throw ConfigError("no config.json in " + run_dir, {"--run"});
  const nlohmann::json doc = nlohmann::json::parse(in);
  nlohmann::json clean = doc;
  for (const char* k : {"config_hash", "training_hash", "git"}) clean.erase(k);
  const ExperimentConfig cfg = parse_experiment(clean);
  const TrainedRun run = load_run(dir);
  const Provenance prov{doc.value("config_hash", config_hash(cfg)), git_describe(), cfg.train.seed};
  const std::filesystem::path target = out.empty() ? dir / "plots" : std::filesystem::path(out);
  for (std::size_t i = 0; i < n_tasks; ++i) {
    for (TaskMode mode : {TaskMode::id, TaskMode::ood}) {
      const Task task = sample_task(cfg.eval_seed, Stream::plot, i, mode, cfg.sampler, cfg.process);
      const auto path = target / ("plot_" + to_string(mode) + "_" + std::to_string(i) + ".svg");
      write_file(path, plot_task_svg(*run.model, task, cfg.sampler.target_margin, prov));
      std::cout << path.string() << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Approximately equivariant neural processes"};
  app.require_subcommand(1);

  Common train_opts, eval_opts, ablate_opts, lab_opts;
  std::string checkpoint;
  auto* train = app.add_subcommand("train", "Train a model, then evaluate and plot it");
  add_common(train, train_opts);
  auto* eval = app.add_subcommand("eval", "Evaluate a finished train run");
  add_common(eval, eval_opts);
  eval->add_option("--checkpoint", checkpoint, "Directory of a finished train run");
  auto* ablate = app.add_subcommand("ablate-b", "Train tilde models over a range of bank sizes");
  add_common(ablate, ablate_opts);
  auto* lab = app.add_subcommand("eqlab", "Run the operator approximation lab");
  add_common(lab, lab_opts);

  std::string plot_run, plot_out;
  std::size_t plot_tasks = 4;
  auto* plot = app.add_subcommand("plot", "Plot predictions of a finished train run");
  plot->add_option("--run", plot_run, "Directory of a finished train run")->required();
  plot->add_option("--tasks", plot_tasks, "Tasks per mode");
  plot->add_option("-o,--out", plot_out, "Output directory (default RUN/plots)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) return run_verb("train", train_opts, "");
    if (*eval) return run_verb("eval", eval_opts, checkpoint);
    if (*ablate) return run_verb("ablate_B", ablate_opts, "");
    if (*lab) return run_verb("eqlab", lab_opts, "");
    if (*plot) return plot_verb(plot_run, plot_tasks, plot_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    for (const auto& k : e.keys()) std::cerr << "  offending key: " << k << "\n";
    return 2;
  } catch (const OutputExists& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
