#pragma once

#include <memory>
#include <string>
#include <vector>

#include "aenp/nn.hpp"
#include "json.hpp"

namespace aenp {

enum class Family { convcnp, equivcnp, relaxedconvcnp, tetnp, pttetnp, tnp };

std::string to_string(Family f);
Family family_from_string(const std::string& s);
bool is_grid_family(Family f);

/// Fixed-input bank t_1..t_B: an MLP over position features whose output is
/// forced to zero outside the support interval.
struct BankConfig {
  int count = -1;                // B; -1 picks the family default
  std::string features = "";     // "raw" | "fourier"; empty picks the family default
  double support_lo = -7.0;
  double support_hi = 7.0;
  double dropout_prob = -1.0;    // -1 picks the family default (0.1 grid, 0.5 token)
  double fourier_period = 14.0;
};

struct ModelConfig {
  Family family = Family::convcnp;
  bool tilde = false;
  std::uint64_t seed = 0;

  // grid models
  int channels = 32;
  int kernel_size = 9;
  int conv_layers = 6;
  double grid_density = 20.0;
  double grid_margin = 0.1;
  int decoder_lengthscales = 5;

  // token models
  int dz = 64;
  int heads = 4;
  int head_dim = 8;
  int layers = 2;
  int mu_hidden = 16;
  int pseudo_tokens = 64;

  BankConfig bank;

  /// Fills family-dependent defaults and checks ranges; throws ConfigError.
  void finalize();
  /// True when a fixed-input bank exists (tilde with B > 0).
  bool has_bank() const;
};

void to_json(nlohmann::json& j, const BankConfig& c);
void from_json(const nlohmann::json& j, BankConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Factorized Gaussian over targets. variance = softplus(raw) + 1e-6.
struct GaussianPrediction {
  Tensor mean;      // [N_t]
  Tensor variance;  // [N_t]
};

/// Whether the fixed inputs take part in a forward pass. `off` is the strict
/// path: the bank is skipped entirely.
enum class BankMode { active, off };

class Model {
 public:
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {}
  virtual ~Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  virtual GaussianPrediction forward(const std::vector<double>& x_context,
                                     const std::vector<double>& y_context,
                                     const std::vector<double>& x_target,
                                     BankMode bank = BankMode::active) const = 0;

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  bool has_bank() const { return cfg_.has_bank(); }

 protected:
  ModelConfig cfg_;
  ParamStore params_;
};

std::unique_ptr<Model> make_model(ModelConfig cfg);

/// Mean over targets of log N(y; mean, variance).
Tensor gaussian_loglik(const GaussianPrediction& pred, const std::vector<double>& y);

// ---- building blocks exposed for testing ----

struct SetConvEncoding {
  std::vector<double> grid;  // grid positions
  Tensor channels;           // [T, 2]: density, normalized value
};

/// Grid k * spacing for k in [floor(lo / spacing), ceil(hi / spacing)] where
/// lo/hi are the data range widened by margin.
std::vector<double> make_grid(const std::vector<double>& a, const std::vector<double>& b,
                              double spacing, double margin);

/// Density and density-normalized value channels with an RBF of the given
/// lengthscale (tensor so it can be learned).
Tensor setconv_encode(const std::vector<double>& grid, const std::vector<double>& x_context,
                      const std::vector<double>& y_context, const Tensor& log_lengthscale);

/// conv1d(signal * (1 + modulation), kernel); modulation is [1, L].
Tensor relaxed_conv1d(const Tensor& signal, const Tensor& modulation, const Tensor& kernel);

/// Multi-head attention with optional translation-equivariant logits.
struct AttentionConfig {
  std::size_t dz = 0;
  std::size_t heads = 1;
  std::size_t head_dim = 1;
  std::size_t mu_hidden = 0;  // 0 disables the relative-position term
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& store, const std::string& name, AttentionConfig cfg, Rng& rng);

  /// queries [Nq, dz], keys [Nk, dz], positions [Nq] and [Nk]. Positions are
  /// only read when the relative-position term is enabled, and only through
  /// differences. Zero keys give a zero output.
  Tensor operator()(const Tensor& queries, const Tensor& keys, const Tensor& query_pos,
                    const Tensor& key_pos) const;

 private:
  AttentionConfig cfg_;
  Linear wq_, wk_, wv_, wo_;
  Mlp mu_;
};

}  // namespace aenp
