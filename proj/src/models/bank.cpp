#include "bank.hpp"

#include <cmath>
#include <numbers>

namespace aenp::detail {

FixedInputBank::FixedInputBank(ParamStore& store, const std::string& name, const BankConfig& cfg,
                               std::size_t hidden, std::size_t out_dim, Rng& rng)
    : cfg_(cfg) {
  const auto b = static_cast<std::size_t>(cfg.count);
  const std::size_t in = cfg.features == "fourier" ? 2 * b : 1;
  // With Fourier features B counts coefficients and the MLP emits out_dim directly.
  const std::size_t mlp_out = cfg.features == "fourier" ? out_dim : b;
  mlp_ = Mlp(store, name + ".mlp", {in, hidden, hidden, mlp_out}, rng);
  project_ = mlp_out != out_dim;
  if (project_) projection_ = store.add_uniform(name + ".projection", {mlp_out, out_dim}, mlp_out, rng);
}

Tensor FixedInputBank::operator()(const Tensor& positions) const {
  const std::size_t n = positions.numel();
  const Tensor x = reshape(positions, {n, 1});
  Tensor feats;
  if (cfg_.features == "fourier") {
    const auto k_max = static_cast<std::size_t>(cfg_.count);
    std::vector<double> w(k_max);
    for (std::size_t k = 0; k < k_max; ++k)
      w[k] = 2.0 * std::numbers::pi * static_cast<double>(k + 1) / cfg_.fourier_period;
    const Tensor phase = x * Tensor::from({1, k_max}, std::move(w));
    feats = concat({sin(phase), cos(phase)}, 1);
  } else {
    feats = x;
  }
  Tensor t = mlp_(feats);
  if (project_) t = matmul(t, projection_);
  std::vector<double> mask(n);
  const auto p = positions.data();
  for (std::size_t i = 0; i < n; ++i)
    mask[i] = (p[i] >= cfg_.support_lo && p[i] <= cfg_.support_hi) ? 1.0 : 0.0;
  return t * Tensor::from({n, 1}, std::move(mask));
}

}  // namespace aenp::detail
