#pragma once

#include "aenp/models.hpp"

namespace aenp::detail {

/// t(x) = mask(x) * P * MLP(features(x)); P is a bias-free projection present
/// only when the bank size differs from the output width.
class FixedInputBank {
 public:
  FixedInputBank() = default;
  FixedInputBank(ParamStore& store, const std::string& name, const BankConfig& cfg,
                 std::size_t hidden, std::size_t out_dim, Rng& rng);

  /// positions [N] -> [N, out_dim]; rows for positions outside the support
  /// are exactly zero.
  Tensor operator()(const Tensor& positions) const;
  bool valid() const { return !mlp_.layers.empty(); }

 private:
  BankConfig cfg_;
  Mlp mlp_;
  Tensor projection_;
  bool project_ = false;
};

}  // namespace aenp::detail
