#pragma once

#include <cstdint>
#include <vector>

#include "aenp/nn.hpp"

namespace aenp {

struct AdamWConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  // Gradient values are clamped to [-clip_value, clip_value]; <= 0 disables.
  double clip_value = 0.5;
};

/// AdamW with decoupled weight decay and per-element gradient value clipping.
class AdamW {
 public:
  AdamW(ParamStore& params, AdamWConfig cfg);

  /// Applies one update from the gradients currently held by the parameters.
  void step();

  std::uint64_t steps() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  ParamStore& params_;
  AdamWConfig cfg_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace aenp
