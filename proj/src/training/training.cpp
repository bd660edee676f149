#include "aenp/training.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "aenp/config_error.hpp"
#include "aenp/optim.hpp"

namespace aenp {

void TrainConfig::validate() const {
  std::vector<std::string> bad;
  if (!(lr > 0.0)) bad.push_back("train.lr");
  if (batch_size < 1) bad.push_back("train.batch_size");
  if (!(clip_value >= 0.0)) bad.push_back("train.clip_value");
  if (!(weight_decay >= 0.0)) bad.push_back("train.weight_decay");
  if (epochs < 1) bad.push_back("train.epochs");
  if (iters_per_epoch < 1) bad.push_back("train.iters_per_epoch");
  if (!(dropout_prob == -1.0 || (dropout_prob >= 0.0 && dropout_prob <= 1.0))) {
    bad.push_back("train.dropout_prob");
  }
  if (val_tasks < 1) bad.push_back("train.val_tasks");
  if (eval_tasks < 1) bad.push_back("train.eval_tasks");
  if (!bad.empty()) throw ConfigError("invalid training configuration", bad);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr", c.lr},
       {"batch_size", c.batch_size},
       {"clip_value", c.clip_value},
       {"weight_decay", c.weight_decay},
       {"epochs", c.epochs},
       {"iters_per_epoch", c.iters_per_epoch},
       {"min_epochs", c.min_epochs},
       {"patience", c.patience},
       {"dropout_prob", c.dropout_prob},
       {"seed", c.seed},
       {"val_tasks", c.val_tasks},
       {"eval_tasks", c.eval_tasks}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const std::string p = "train";
  reject_unknown_keys(j,
                      {"lr", "batch_size", "clip_value", "weight_decay", "epochs",
                       "iters_per_epoch", "min_epochs", "patience", "dropout_prob", "seed",
                       "val_tasks", "eval_tasks"},
                      p);
  read_optional(j, "lr", c.lr, p);
  read_optional(j, "batch_size", c.batch_size, p);
  read_optional(j, "clip_value", c.clip_value, p);
  read_optional(j, "weight_decay", c.weight_decay, p);
  read_optional(j, "epochs", c.epochs, p);
  read_optional(j, "iters_per_epoch", c.iters_per_epoch, p);
  read_optional(j, "min_epochs", c.min_epochs, p);
  read_optional(j, "patience", c.patience, p);
  read_optional(j, "dropout_prob", c.dropout_prob, p);
  read_optional(j, "seed", c.seed, p);
  read_optional(j, "val_tasks", c.val_tasks, p);
  read_optional(j, "eval_tasks", c.eval_tasks, p);
  c.validate();
}

double effective_dropout(const TrainConfig& train, const ModelConfig& model) {
  if (!model.has_bank()) return 0.0;
  return train.dropout_prob >= 0.0 ? train.dropout_prob : model.bank.dropout_prob;
}

namespace {

std::vector<std::vector<double>> snapshot(const ParamStore& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params.items()) out.push_back(t.to_vector());
  return out;
}

void restore(ParamStore& params, const std::vector<std::vector<double>>& values) {
  auto& items = params.items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto dst = items[i].second.mutable_data();
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

double task_loglik(const Model& model, const Task& task, BankMode bank) {
  const auto pred = model.forward(task.x_context, task.y_context, task.x_target, bank);
  return gaussian_loglik(pred, task.y_target).item();
}

}  // namespace

TrainResult train(Model& model, const TaskSamplerConfig& sampler, const GibbsProcessConfig& proc,
                  const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  const double p_drop = effective_dropout(cfg, model.config());
  AdamWConfig opt_cfg;
  opt_cfg.lr = cfg.lr;
  opt_cfg.clip_value = cfg.clip_value;
  opt_cfg.weight_decay = cfg.weight_decay;
  AdamW opt(model.params(), opt_cfg);

  std::vector<Task> val;
  val.reserve(cfg.val_tasks);
  for (std::size_t i = 0; i < cfg.val_tasks; ++i) {
    val.push_back(sample_task(cfg.seed, Stream::validation, i, TaskMode::id, sampler, proc));
  }
  auto validate_model = [&] {
    NoGradGuard guard;
    double total = 0.0;
    for (const auto& t : val) total += task_loglik(model, t, BankMode::active);
    return total / static_cast<double>(val.size());
  };

  TrainResult result;
  result.best_val_loglik = -std::numeric_limits<double>::infinity();
  auto best = snapshot(model.params());
  std::size_t since_best = 0;
  const double scale = 1.0 / static_cast<double>(cfg.batch_size);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    for (std::size_t it = 0; it < cfg.iters_per_epoch; ++it) {
      model.params().zero_grad();
      const std::uint64_t base = ((epoch - 1) * cfg.iters_per_epoch + it) * cfg.batch_size;
      double batch_loss = 0.0;
      for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        const std::uint64_t index = base + b;
        bool failed = false;
        try {
          const Task task = sample_task(cfg.seed, Stream::train, index, TaskMode::id, sampler, proc);
          BankMode bank = BankMode::active;
          if (p_drop > 0.0 && Rng(cfg.seed, Stream::dropout, index).bernoulli(p_drop)) {
            bank = BankMode::off;
          }
          const auto pred = model.forward(task.x_context, task.y_context, task.x_target, bank);
          const Tensor loss = gaussian_loglik(pred, task.y_target) * -scale;
          if (!std::isfinite(loss.item())) failed = true;
          else {
            loss.backward();
            batch_loss += loss.item();
          }
        } catch (const NumericalError&) {
          failed = true;
        }
        if (failed) {
          if (hooks.on_divergence) hooks.on_divergence(model);
          throw TrainingDiverged("non-finite training loss at epoch " + std::to_string(epoch) +
                                     ", task index " + std::to_string(index) + " (seed " +
                                     std::to_string(cfg.seed) + ")",
                                 index);
        }
      }
      opt.step();
      loss_sum += batch_loss;
    }
    model.params().zero_grad();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(cfg.iters_per_epoch);
    rec.val_loglik = validate_model();
    if (!std::isfinite(rec.val_loglik)) {
      restore(model.params(), best);
      if (hooks.on_divergence) hooks.on_divergence(model);
      throw TrainingDiverged("non-finite validation log-likelihood at epoch " + std::to_string(epoch),
                             0);
    }
    result.curve.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);

    if (rec.val_loglik > result.best_val_loglik) {
      result.best_val_loglik = rec.val_loglik;
      result.best_epoch = epoch;
      best = snapshot(model.params());
      since_best = 0;
    } else {
      ++since_best;
    }
    if (cfg.patience > 0 && epoch >= cfg.min_epochs && since_best >= cfg.patience &&
        epoch < cfg.epochs) {
      result.stopped_early = true;
      break;
    }
  }
  restore(model.params(), best);
  return result;
}

std::string to_string(EvalMode mode) {
  switch (mode) {
    case EvalMode::id: return "ID";
    case EvalMode::ood: return "OOD";
    case EvalMode::context_as_target: return "context-as-target";
  }
  return "?";
}

EvalMode eval_mode_from_string(const std::string& s) {
  if (s == "ID" || s == "id") return EvalMode::id;
  if (s == "OOD" || s == "ood") return EvalMode::ood;
  if (s == "context-as-target" || s == "context_as_target") return EvalMode::context_as_target;
  throw ConfigError("unknown evaluation mode '" + s + "'", {"mode"});
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = {{"mean_loglik", r.mean_loglik},
       {"stderr", r.std_error},
       {"mode", to_string(r.mode)},
       {"n_tasks", r.n_tasks},
       {"model_hash", r.model_hash},
       {"config_hash", r.config_hash}};
}

Task eval_task(const EvalConfig& cfg, std::size_t index, const TaskSamplerConfig& sampler,
               const GibbsProcessConfig& proc) {
  switch (cfg.mode) {
    case EvalMode::id:
      return sample_task(cfg.seed, Stream::eval_id, index, TaskMode::id, sampler, proc);
    case EvalMode::ood:
      return sample_task(cfg.seed, Stream::eval_ood, index, TaskMode::ood, sampler, proc);
    case EvalMode::context_as_target: {
      Task t = sample_task(cfg.seed, Stream::eval_context, index, TaskMode::id, sampler, proc);
      t.x_target = t.x_context;
      t.y_target = t.y_context;
      return t;
    }
  }
  throw std::logic_error("eval_task: bad mode");
}

namespace {

template <typename Score>
EvalReport run_eval(const EvalConfig& cfg, const TaskSamplerConfig& sampler,
                    const GibbsProcessConfig& proc, Score&& score) {
  if (cfg.n_tasks == 0) throw ConfigError("evaluation needs at least one task", {"n_tasks"});
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < cfg.n_tasks; ++i) {
    const double v = score(eval_task(cfg, i, sampler, proc));
    sum += v;
    sum_sq += v * v;
  }
  const double n = static_cast<double>(cfg.n_tasks);
  EvalReport r;
  r.mean_loglik = sum / n;
  const double var = cfg.n_tasks > 1 ? std::max(0.0, (sum_sq - n * r.mean_loglik * r.mean_loglik) / (n - 1.0)) : 0.0;
  r.std_error = std::sqrt(var / n);
  r.mode = cfg.mode;
  r.n_tasks = cfg.n_tasks;
  return r;
}

}  // namespace

EvalReport evaluate(const Model& model, const TaskSamplerConfig& sampler,
                    const GibbsProcessConfig& proc, const EvalConfig& cfg) {
  NoGradGuard guard;
  auto r = run_eval(cfg, sampler, proc, [&](const Task& t) { return task_loglik(model, t, cfg.bank); });
  r.model_hash = model_hash(model.params());
  r.config_hash = experiment_hash(model.config(), sampler, proc);
  return r;
}

EvalReport evaluate_oracle(const TaskSamplerConfig& sampler, const GibbsProcessConfig& proc,
                           const EvalConfig& cfg, OracleKind kind) {
  auto r = run_eval(cfg, sampler, proc,
                    [&](const Task& t) { return gp_posterior_loglik(t, proc, kind, false); });
  r.model_hash = kind == OracleKind::known_beta ? "oracle-known-beta" : "oracle-mixture";
  r.config_hash = task_config_hash(sampler, proc);
  return r;
}

std::string model_hash(const ParamStore& params) {
  std::string bytes;
  for (const auto& [name, t] : params.items()) {
    bytes += name;
    bytes += shape_str(t.shape());
    const auto data = t.data();
    const auto* raw = reinterpret_cast<const char*>(data.data());
    bytes.append(raw, data.size() * sizeof(double));
  }
  return hex64(fnv1a64(bytes));
}

std::string experiment_hash(const ModelConfig& model, const TaskSamplerConfig& sampler,
                            const GibbsProcessConfig& proc) {
  nlohmann::json j = {{"model", model}, {"sampler", sampler}, {"process", proc}};
  return hex64(fnv1a64(j.dump()));
}

}  // namespace aenp
