#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "aenp/rng.hpp"
#include "json.hpp"

namespace aenp {

struct GibbsProcessConfig {
  double ell_low = 0.1;
  double ell_high = 4.0;
  double changepoint = 0.0;
  double noise_std = 0.2;
  double orientation_prob = 0.5;

  void validate() const;
};

enum class TaskMode { id, ood };

struct TaskSamplerConfig {
  int n_context_min = 1;
  int n_context_max = 64;
  int n_target = 128;
  double context_span = 4.0;
  double target_margin = 1.0;
  std::pair<double, double> id_center_range{-7.0, 7.0};
  std::pair<double, double> ood_center_range{13.0, 27.0};

  void validate() const;
};

struct Task {
  std::vector<double> x_context;
  std::vector<double> y_context;
  std::vector<double> x_target;
  std::vector<double> y_target;
  int beta = 0;
  TaskMode mode = TaskMode::id;
  std::uint64_t seed = 0;
  double context_lo = 0.0;
  double context_hi = 0.0;

  double target_lo(double margin = 1.0) const { return context_lo - margin; }
  double target_hi(double margin = 1.0) const { return context_hi + margin; }
};

void to_json(nlohmann::json& j, const GibbsProcessConfig& c);
void from_json(const nlohmann::json& j, GibbsProcessConfig& c);
void to_json(nlohmann::json& j, const TaskSamplerConfig& c);
void from_json(const nlohmann::json& j, TaskSamplerConfig& c);
std::string to_string(TaskMode mode);
TaskMode task_mode_from_string(const std::string& s);

/// Piecewise-constant lengthscale: ell_low left of the changepoint when
/// beta == 1, ell_high there when beta == 0, and the opposite on the right.
double lengthscale_profile(double x, int beta, const GibbsProcessConfig& cfg);

/// Gibbs kernel for inputs with lengthscales l1 = ell(x), l2 = ell(x2).
double gibbs_kernel(double x, double x2, double l1, double l2);
double gibbs_kernel(double x, double x2, int beta, const GibbsProcessConfig& cfg);

/// Row-major [a.size(), b.size()] cross covariance.
std::vector<double> gibbs_cross(const std::vector<double>& a, const std::vector<double>& b,
                                int beta, const GibbsProcessConfig& cfg);

/// One noiseless function draw at xs (Cholesky of the Gram, jitter ladder).
std::vector<double> sample_gp(const std::vector<double>& xs, int beta,
                              const GibbsProcessConfig& cfg, Rng& rng);

/// Draws task `index` of the given stream. Context and target values come from
/// one joint draw plus independent observation noise.
Task sample_task(std::uint64_t seed, Stream stream, std::uint64_t index, TaskMode mode,
                 const TaskSamplerConfig& sampler, const GibbsProcessConfig& proc);

/// Posterior predictive of noisy observations at x_t (variance includes noise).
struct GpPrediction {
  std::vector<double> mean;
  std::vector<double> variance;
};
GpPrediction gp_predict(const std::vector<double>& x_c, const std::vector<double>& y_c,
                        const std::vector<double>& x_t, int beta,
                        const GibbsProcessConfig& cfg);

/// log N(y_c; 0, K_beta + noise^2 I).
double gp_log_marginal(const std::vector<double>& x_c, const std::vector<double>& y_c, int beta,
                       const GibbsProcessConfig& cfg);

enum class OracleKind { known_beta, mixture };

/// Mean per-point log predictive density of the generating process.
/// known_beta conditions on the task's orientation; mixture weights both
/// orientations by their posterior given the context. With context_as_target
/// the context itself is scored.
double gp_posterior_loglik(const Task& task, const GibbsProcessConfig& cfg, OracleKind kind,
                           bool context_as_target = false);

std::string task_config_hash(const TaskSamplerConfig& sampler, const GibbsProcessConfig& proc);

/// JSON-lines: a header line {"config_hash", "count"} then one task per line.
void write_tasks_jsonl(const std::filesystem::path& path, const std::vector<Task>& tasks,
                       const std::string& config_hash);
std::vector<Task> read_tasks_jsonl(const std::filesystem::path& path, std::string* config_hash);

/// Binary columnar layout with the same content.
void write_tasks_binary(const std::filesystem::path& path, const std::vector<Task>& tasks,
                        const std::string& config_hash);
std::vector<Task> read_tasks_binary(const std::filesystem::path& path, std::string* config_hash);

}  // namespace aenp
