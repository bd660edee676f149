#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "aenp/models.hpp"
#include "aenp/taskgen.hpp"
#include "json.hpp"

namespace aenp {

struct TrainConfig {
  double lr = 5e-4;
  std::size_t batch_size = 16;
  double clip_value = 0.5;
  double weight_decay = 0.01;
  std::size_t epochs = 30;
  std::size_t iters_per_epoch = 1000;
  // Early stopping only considers epochs at or beyond min_epochs.
  std::size_t min_epochs = 30;
  std::size_t patience = 10;
  double dropout_prob = -1.0;  // -1 uses the model's bank setting
  std::uint64_t seed = 0;
  std::size_t val_tasks = 2000;
  std::size_t eval_tasks = 8000;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Probability that a task's forward pass runs with the bank zeroed.
double effective_dropout(const TrainConfig& train, const ModelConfig& model);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loglik = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> curve;
  std::size_t best_epoch = 0;
  double best_val_loglik = 0.0;
  bool stopped_early = false;
};

/// Raised when a training loss turns non-finite. The parameters are left at
/// their last good values.
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& message, std::uint64_t task_index)
      : NumericalError(message), task_index(task_index) {}
  std::uint64_t task_index;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  // Called with the last good parameters before TrainingDiverged propagates.
  std::function<void(const Model&)> on_divergence;
};

/// Minimizes the negative mean target log-likelihood with AdamW. Task i of the
/// run is sample_task(cfg.seed, Stream::train, i, id); each task draws its own
/// bank dropout on Stream::dropout. Ends with the best validation parameters
/// loaded into the model.
TrainResult train(Model& model, const TaskSamplerConfig& sampler, const GibbsProcessConfig& proc,
                  const TrainConfig& cfg, const TrainHooks& hooks = {});

enum class EvalMode { id, ood, context_as_target };

std::string to_string(EvalMode mode);
EvalMode eval_mode_from_string(const std::string& s);

struct EvalConfig {
  EvalMode mode = EvalMode::id;
  std::size_t n_tasks = 8000;
  std::uint64_t seed = 0;
  BankMode bank = BankMode::active;
};

struct EvalReport {
  double mean_loglik = 0.0;
  double std_error = 0.0;  // sample std over tasks / sqrt(n_tasks)
  EvalMode mode = EvalMode::id;
  std::size_t n_tasks = 0;
  std::string model_hash;
  std::string config_hash;
};

void to_json(nlohmann::json& j, const EvalReport& r);

/// The fixed evaluation task stream for a mode. Context-as-target tasks are
/// in-distribution tasks scored on their own context points.
Task eval_task(const EvalConfig& cfg, std::size_t index, const TaskSamplerConfig& sampler,
               const GibbsProcessConfig& proc);

/// Mean over tasks of the per-task mean target log-likelihood.
EvalReport evaluate(const Model& model, const TaskSamplerConfig& sampler,
                    const GibbsProcessConfig& proc, const EvalConfig& cfg);

/// Same protocol with the exact Gibbs-process posterior in place of a model.
EvalReport evaluate_oracle(const TaskSamplerConfig& sampler, const GibbsProcessConfig& proc,
                           const EvalConfig& cfg, OracleKind kind);

/// FNV-1a over parameter names, shapes and values.
std::string model_hash(const ParamStore& params);

/// Hash of the configs that define a model's behaviour on a task stream.
std::string experiment_hash(const ModelConfig& model, const TaskSamplerConfig& sampler,
                            const GibbsProcessConfig& proc);

}  // namespace aenp
