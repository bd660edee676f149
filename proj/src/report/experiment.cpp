#include "aenp/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include "aenp/checkpoint.hpp"
#include "aenp/config_error.hpp"
#include "aenp/eqlab.hpp"
#include "aenp/report.hpp"

#ifndef AENP_GIT_DESCRIBE
#define AENP_GIT_DESCRIBE "unknown"
#endif

namespace aenp {

const char* git_describe() { return AENP_GIT_DESCRIBE; }

void apply_full_profile(ModelConfig& m) {
  m.channels = 64;
  m.kernel_size = 21;
  m.conv_layers = 9;
  m.grid_density = 46;
  m.dz = is_grid_family(m.family) ? 64 : 128;
  m.heads = 8;
  m.head_dim = 16;
  m.layers = 9;
  m.mu_hidden = m.dz;
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form path=value", {assignment});
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override path '" + path + "' has an empty component", {path});
    if (!node->is_object()) throw ConfigError("override path '" + path + "' crosses a non-object", {path});
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = nlohmann::json::object();
    start = dot + 1;
  }
}

namespace {

const std::vector<std::string> kExperiments{"train", "eval", "ablate_B", "eqlab"};

std::string to_string(Profile p) { return p == Profile::desk ? "desk" : "full"; }

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return nlohmann::json::parse(in);
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_file(path, j.dump(2) + "\n"); }

Provenance provenance(const std::string& hash, std::uint64_t seed) { return {hash, git_describe(), seed}; }

// MANIFEST is the only file carrying wall-clock times.
class Manifest {
 public:
  Manifest(std::filesystem::path dir, const std::string& hash, std::uint64_t seed, const RunOptions& opts)
      : path_(dir / "MANIFEST") {
    if (std::filesystem::exists(path_) && !opts.force) {
      std::string note;
      try {
        const auto old = read_json(path_);
        note = old.value("config_hash", "") == hash ? " with the same config hash" : " with a different config hash";
      } catch (const std::exception&) {
      }
      throw OutputExists(dir.string() + " already holds a run" + note + "; pass --force to overwrite");
    }
    doc_ = {{"status", "running"}, {"config_hash", hash}, {"seed", seed}, {"git", git_describe()},
            {"started", timestamp()}, {"files", nlohmann::json::array()}};
    flush();
  }
  nlohmann::json& doc() { return doc_; }
  void add_file(const std::string& name) {
    doc_["files"].push_back(name);
    flush();
  }
  void finish(const std::string& status, const std::string& error = "") {
    doc_["status"] = status;
    doc_["finished"] = timestamp();
    if (!error.empty()) doc_["error"] = error;
    flush();
  }

 private:
  void flush() { write_json(path_, doc_); }
  std::filesystem::path path_;
  nlohmann::json doc_;
};

std::string label(const ModelConfig& m) {
  std::string s = to_string(m.family) + (m.tilde ? "~" : "");
  if (m.tilde) s += "[B=" + std::to_string(m.bank.count) + "]";
  return s;
}

}  // namespace

ExperimentConfig parse_experiment(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("experiment config must be a JSON object", {""});
  reject_unknown_keys(doc,
                      {"experiment", "profile", "model", "train", "sampler", "process", "output_dir",
                       "checkpoint", "ablate_counts", "eval_seed", "plot_tasks", "eqlab"},
                      "");
  ExperimentConfig cfg;
  read_optional(doc, "experiment", cfg.experiment, "");
  if (std::find(kExperiments.begin(), kExperiments.end(), cfg.experiment) == kExperiments.end()) {
    throw ConfigError("unknown experiment '" + cfg.experiment + "'", {"experiment"});
  }
  std::string profile = "desk";
  read_optional(doc, "profile", profile, "");
  if (profile == "paper") profile = "full";
  if (profile != "desk" && profile != "full") throw ConfigError("unknown profile '" + profile + "'", {"profile"});
  cfg.profile = profile == "desk" ? Profile::desk : Profile::full;

  if (doc.contains("model")) {
    const auto& m = doc.at("model");
    if (m.contains("family")) {
      std::string fam;
      read_optional(m, "family", fam, "model");
      cfg.model.family = family_from_string(fam);
    }
    if (cfg.profile == Profile::full) apply_full_profile(cfg.model);
    from_json(m, cfg.model);
  } else if (cfg.profile == Profile::full) {
    apply_full_profile(cfg.model);
  }
  cfg.model.finalize();
  if (doc.contains("train")) from_json(doc.at("train"), cfg.train);
  if (doc.contains("sampler")) from_json(doc.at("sampler"), cfg.sampler);
  if (doc.contains("process")) from_json(doc.at("process"), cfg.process);
  std::string out, ckpt;
  read_optional(doc, "output_dir", out, "");
  read_optional(doc, "checkpoint", ckpt, "");
  cfg.output_dir = out;
  cfg.checkpoint = ckpt;
  read_optional(doc, "ablate_counts", cfg.ablate_counts, "");
  for (int b : cfg.ablate_counts)
    if (b < 0) throw ConfigError("ablate_counts must be nonnegative", {"ablate_counts"});
  read_optional(doc, "eval_seed", cfg.eval_seed, "");
  read_optional(doc, "plot_tasks", cfg.plot_tasks, "");
  if (doc.contains("eqlab")) cfg.eqlab = doc.at("eqlab");
  if (!cfg.eqlab.is_object()) throw ConfigError("eqlab must be an object", {"eqlab"});
  if (cfg.output_dir.empty()) throw ConfigError("output_dir is required", {"output_dir"});
  if (cfg.experiment == "eval" && cfg.checkpoint.empty()) {
    throw ConfigError("eval needs checkpoint (a finished train run directory)", {"checkpoint"});
  }
  if (cfg.experiment == "ablate_B" && cfg.ablate_counts.empty()) {
    throw ConfigError("ablate_counts is empty", {"ablate_counts"});
  }
  return cfg;
}

nlohmann::json experiment_to_json(const ExperimentConfig& cfg) {
  return {{"experiment", cfg.experiment},
          {"profile", to_string(cfg.profile)},
          {"model", cfg.model},
          {"train", cfg.train},
          {"sampler", cfg.sampler},
          {"process", cfg.process},
          {"output_dir", cfg.output_dir.string()},
          {"checkpoint", cfg.checkpoint.string()},
          {"ablate_counts", cfg.ablate_counts},
          {"eval_seed", cfg.eval_seed},
          {"plot_tasks", cfg.plot_tasks},
          {"eqlab", cfg.eqlab}};
}

std::string config_hash(const ExperimentConfig& cfg) {
  auto j = experiment_to_json(cfg);
  j.erase("output_dir");
  j.erase("checkpoint");
  return hex64(fnv1a64(j.dump()));
}

std::string training_hash(const ModelConfig& model, const TrainConfig& train,
                          const TaskSamplerConfig& sampler, const GibbsProcessConfig& proc) {
  const nlohmann::json j = {{"format", 1}, {"model", model}, {"train", train}, {"sampler", sampler}, {"process", proc}};
  return hex64(fnv1a64(j.dump()));
}

TrainedRun run_train(const ExperimentConfig& cfg, const std::filesystem::path& dir, const RunOptions& opts) {
  const std::string hash = config_hash(cfg);
  const std::string thash = training_hash(cfg.model, cfg.train, cfg.sampler, cfg.process);
  std::filesystem::create_directories(dir);
  Manifest manifest(dir, hash, cfg.train.seed, opts);
  manifest.doc()["training_hash"] = thash;
  const Provenance prov = provenance(hash, cfg.train.seed);
  try {
    auto config_doc = experiment_to_json(cfg);
    config_doc["config_hash"] = hash;
    config_doc["training_hash"] = thash;
    config_doc["git"] = prov.git;
    write_json(dir / "config.json", config_doc);
    manifest.add_file("config.json");

    TrainedRun run;
    run.model = make_model(cfg.model);
    TrainHooks hooks;
    std::vector<EpochRecord> curve;
    const auto t0 = std::chrono::steady_clock::now();
    hooks.on_epoch = [&](const EpochRecord& r) {
      curve.push_back(r);
      write_file(dir / "loss_curve.csv", loss_curve_csv(curve, prov));
      if (!opts.quiet) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cerr << label(cfg.model) << " epoch " << r.epoch << "/" << cfg.train.epochs
                  << " train_loss=" << format_double(r.train_loss) << " val_loglik="
                  << format_double(r.val_loglik) << " elapsed=" << static_cast<long>(secs) << "s\n";
      }
    };
    hooks.on_divergence = [&](const Model& m) {
      save_checkpoint(dir / "checkpoint_last_good", m.params(),
                      {{"training_hash", thash}, {"model", m.config()}, {"note", "last good parameters"}});
    };
    run.result = train(*run.model, cfg.sampler, cfg.process, cfg.train, hooks);
    manifest.add_file("loss_curve.csv");

    nlohmann::json ck = {{"training_hash", thash},       {"config_hash", hash},
                         {"model", cfg.model},           {"train", cfg.train},
                         {"best_epoch", run.result.best_epoch},
                         {"best_val_loglik", run.result.best_val_loglik},
                         {"stopped_early", run.result.stopped_early},
                         {"model_hash", model_hash(run.model->params())},
                         {"git", prov.git}};
    save_checkpoint(dir / "checkpoint", run.model->params(), ck);
    manifest.add_file("checkpoint/params.bin");
    manifest.add_file("checkpoint/manifest.json");

    ResultsTable table;
    for (EvalMode mode : {EvalMode::id, EvalMode::ood}) {
      EvalConfig ec;
      ec.mode = mode;
      ec.n_tasks = cfg.train.eval_tasks;
      ec.seed = cfg.eval_seed;
      const EvalReport rep = evaluate(*run.model, cfg.sampler, cfg.process, ec);
      (mode == EvalMode::id ? run.id : run.ood) = rep;
      nlohmann::json j = rep;
      j["config_hash_experiment"] = hash;
      j["seed"] = cfg.train.seed;
      j["git"] = prov.git;
      const std::string name = "eval_" + to_string(mode) + ".json";
      write_json(dir / name, j);
      manifest.add_file(name);
      table.add(label(cfg.model), rep);
    }
    write_file(dir / "results.csv", table.to_csv(prov));
    manifest.add_file("results.csv");

    for (std::size_t i = 0; i < cfg.plot_tasks; ++i) {
      for (TaskMode mode : {TaskMode::id, TaskMode::ood}) {
        const Task task = sample_task(cfg.eval_seed, Stream::plot, i, mode, cfg.sampler, cfg.process);
        const std::string name = "plot_" + to_string(mode) + "_" + std::to_string(i) + ".svg";
        write_file(dir / name, plot_task_svg(*run.model, task, cfg.sampler.target_margin, prov));
        manifest.add_file(name);
      }
    }
    manifest.finish("complete");
    return run;
  } catch (const std::exception& e) {
    manifest.finish("partial", e.what());
    throw;
  }
}

bool run_complete(const std::filesystem::path& dir, const std::string& train_hash) {
  try {
    const auto m = read_json(dir / "MANIFEST");
    return m.value("status", "") == "complete" && m.value("training_hash", "") == train_hash;
  } catch (const std::exception&) {
    return false;
  }
}

TrainedRun load_run(const std::filesystem::path& dir) {
  const auto m = read_json(dir / "MANIFEST");
  if (m.value("status", "") != "complete") throw std::runtime_error(dir.string() + " is not a completed run");
  const auto doc = read_json(dir / "config.json");
  ModelConfig model;
  from_json(doc.at("model"), model);
  TrainedRun run;
  run.model = make_model(model);
  const auto ck = load_checkpoint(dir / "checkpoint", run.model->params());
  run.result.best_epoch = ck.value("best_epoch", std::size_t{0});
  run.result.best_val_loglik = ck.value("best_val_loglik", 0.0);
  run.result.stopped_early = ck.value("stopped_early", false);
  auto read_report = [&](const std::string& name) {
    const auto j = read_json(dir / name);
    EvalReport r;
    r.mean_loglik = j.at("mean_loglik").get<double>();
    r.std_error = j.at("stderr").get<double>();
    r.mode = eval_mode_from_string(j.at("mode").get<std::string>());
    r.n_tasks = j.at("n_tasks").get<std::size_t>();
    r.model_hash = j.at("model_hash").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    return r;
  };
  run.id = read_report("eval_ID.json");
  run.ood = read_report("eval_OOD.json");
  return run;
}

std::filesystem::path run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  const auto& dir = cfg.output_dir;
  const std::string hash = config_hash(cfg);
  if (cfg.experiment == "train") {
    run_train(cfg, dir, opts);
    return dir / "results.csv";
  }
  if (cfg.experiment == "eval") {
    const TrainedRun run = load_run(cfg.checkpoint);
    std::filesystem::create_directories(dir);
    Manifest manifest(dir, hash, cfg.eval_seed, opts);
    try {
      const Provenance prov = provenance(hash, cfg.eval_seed);
      ResultsTable table;
      for (EvalMode mode : {EvalMode::id, EvalMode::ood, EvalMode::context_as_target}) {
        EvalConfig ec;
        ec.mode = mode;
        ec.n_tasks = cfg.train.eval_tasks;
        ec.seed = cfg.eval_seed;
        const EvalReport rep = evaluate(*run.model, cfg.sampler, cfg.process, ec);
        nlohmann::json j = rep;
        j["config_hash_experiment"] = hash;
        j["seed"] = cfg.eval_seed;
        j["git"] = prov.git;
        const std::string name = "eval_" + to_string(mode) + ".json";
        write_json(dir / name, j);
        manifest.add_file(name);
        table.add(label(run.model->config()), rep);
      }
      write_file(dir / "results.csv", table.to_csv(prov));
      manifest.add_file("results.csv");
      manifest.finish("complete");
    } catch (const std::exception& e) {
      manifest.finish("partial", e.what());
      throw;
    }
    return dir / "results.csv";
  }
  if (cfg.experiment == "ablate_B") {
    std::filesystem::create_directories(dir);
    Manifest manifest(dir, hash, cfg.train.seed, opts);
    try {
      ResultsTable table;
      for (int b : cfg.ablate_counts) {
        ExperimentConfig sub = cfg;
        sub.experiment = "train";
        sub.model.tilde = b > 0;
        sub.model.bank.count = b;
        sub.model.finalize();
        const auto sub_dir = dir / ("B_" + std::to_string(b));
        const auto thash = training_hash(sub.model, sub.train, sub.sampler, sub.process);
        TrainedRun run = run_complete(sub_dir, thash) ? load_run(sub_dir) : run_train(sub, sub_dir, {true, opts.quiet});
        const std::string name = b > 0 ? label(sub.model) : label(sub.model) + "[B=0]";
        table.add(name, run.id);
        table.add(name, run.ood);
        manifest.add_file("B_" + std::to_string(b));
      }
      write_file(dir / "results.csv", table.to_csv(provenance(hash, cfg.train.seed)));
      manifest.add_file("results.csv");
      manifest.finish("complete");
    } catch (const std::exception& e) {
      manifest.finish("partial", e.what());
      throw;
    }
    return dir / "results.csv";
  }
  if (cfg.experiment == "eqlab") {
    std::filesystem::create_directories(dir);
    Manifest manifest(dir, hash, cfg.eval_seed, opts);
    try {
      const LabConfig lab = parse_lab_config(cfg.eqlab);
      const OperatorLabReport report = run_operator_lab(lab);
      const Provenance prov = provenance(hash, lab.seed);
      nlohmann::json j = report;
      j["config_hash"] = hash;
      j["seed"] = lab.seed;
      j["git"] = prov.git;
      write_json(dir / "operator_lab.json", j);
      manifest.add_file("operator_lab.json");
      write_file(dir / "operator_lab.csv", lab_csv(report, prov.config_hash, prov.seed, prov.git));
      manifest.add_file("operator_lab.csv");
      manifest.finish(report.all_passed ? "complete" : "complete-with-failures");
    } catch (const std::exception& e) {
      manifest.finish("partial", e.what());
      throw;
    }
    return dir / "operator_lab.csv";
  }
  throw ConfigError("unknown experiment '" + cfg.experiment + "'", {"experiment"});
}

}  // namespace aenp
