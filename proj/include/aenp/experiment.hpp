#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "aenp/models.hpp"
#include "aenp/taskgen.hpp"
#include "aenp/training.hpp"
#include "json.hpp"

namespace aenp {

/// `git describe` of the source tree at configure time.
const char* git_describe();

enum class Profile { desk, full };

/// One JSON document describing a run. Dotted overrides (train.lr=1e-3) are
/// applied to the document before it is parsed.
struct ExperimentConfig {
  std::string experiment = "train";  // train | eval | ablate_B | eqlab
  Profile profile = Profile::desk;
  ModelConfig model;
  TrainConfig train;
  TaskSamplerConfig sampler;
  GibbsProcessConfig process;
  std::filesystem::path output_dir;
  std::filesystem::path checkpoint;        // eval: directory of a finished train run
  std::vector<int> ablate_counts{0, 1, 2, 4, 8, 16};
  std::uint64_t eval_seed = 0;
  std::size_t plot_tasks = 2;
  nlohmann::json eqlab = nlohmann::json::object();
};

/// Full-width architecture sizes for `profile: full`.
void apply_full_profile(ModelConfig& model);

/// Sets a dotted path ("train.lr") from "path=value"; the value is parsed as
/// JSON when possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Parses and validates; throws ConfigError naming offending keys.
ExperimentConfig parse_experiment(const nlohmann::json& doc);
nlohmann::json experiment_to_json(const ExperimentConfig& cfg);

/// Hash of everything that determines the produced artifacts (paths excluded).
std::string config_hash(const ExperimentConfig& cfg);

/// Hash of the settings that determine a trained checkpoint.
std::string training_hash(const ModelConfig& model, const TrainConfig& train,
                          const TaskSamplerConfig& sampler, const GibbsProcessConfig& proc);

/// Raised when an output directory already holds a run and --force was not given.
class OutputExists : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunOptions {
  bool force = false;
  bool quiet = false;
};

/// Everything a finished train run leaves behind, reloaded.
struct TrainedRun {
  std::unique_ptr<Model> model;
  TrainResult result;
  EvalReport id;
  EvalReport ood;
};

/// Trains, evaluates on ID and OOD, writes checkpoint, curves, reports,
/// results table and plots into dir.
TrainedRun run_train(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                     const RunOptions& opts);

/// Loads a finished train run; throws if the directory is incomplete.
TrainedRun load_run(const std::filesystem::path& dir);

/// True when dir holds a completed train run with the given training hash.
bool run_complete(const std::filesystem::path& dir, const std::string& train_hash);

/// Dispatches on cfg.experiment. Returns the path of the results table.
std::filesystem::path run_experiment(const ExperimentConfig& cfg, const RunOptions& opts);

}  // namespace aenp
