#include <algorithm>
#include <cmath>

#include "bank.hpp"
#include "models_internal.hpp"

namespace aenp {

std::vector<double> make_grid(const std::vector<double>& a, const std::vector<double>& b,
                              double spacing, double margin) {
  if (a.empty() && b.empty()) throw ShapeError("make_grid: no inputs");
  double lo = INFINITY, hi = -INFINITY;
  for (const auto* v : {&a, &b})
    for (double x : *v) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  const auto k_lo = static_cast<long long>(std::floor((lo - margin) / spacing));
  const auto k_hi = static_cast<long long>(std::ceil((hi + margin) / spacing));
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(k_hi - k_lo + 1));
  for (long long k = k_lo; k <= k_hi; ++k) grid.push_back(static_cast<double>(k) * spacing);
  return grid;
}

namespace detail {

Tensor squared_distances(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double r = a[i] - b[j];
      d[i * b.size() + j] = r * r;
    }
  return Tensor::from({a.size(), b.size()}, std::move(d));
}

Tensor rbf_coefficient(const Tensor& log_lengthscale) {
  // -1 / (2 l^2) = -0.5 * exp(-2 log l)
  return exp(log_lengthscale * -2.0) * -0.5;
}

}  // namespace detail

Tensor setconv_encode(const std::vector<double>& grid, const std::vector<double>& x_context,
                      const std::vector<double>& y_context, const Tensor& log_lengthscale) {
  if (x_context.size() != y_context.size()) throw ShapeError("setconv_encode: context sizes differ");
  const std::size_t nc = x_context.size();
  const Tensor w = exp(detail::squared_distances(grid, x_context) *
                       reshape(detail::rbf_coefficient(log_lengthscale), {1, 1}));
  const Tensor density = matmul(w, Tensor::full({nc, 1}, 1.0));
  const Tensor value = matmul(w, Tensor::from({nc, 1}, y_context));
  return concat({density, guarded_div(value, density)}, 1);
}

Tensor relaxed_conv1d(const Tensor& signal, const Tensor& modulation, const Tensor& kernel) {
  return conv1d(signal * (modulation + 1.0), kernel);
}

namespace detail {

namespace {

class GridModel final : public Model {
 public:
  explicit GridModel(ModelConfig cfg) : Model(std::move(cfg)) {
    Rng rng(cfg_.seed, Stream::init);
    const auto c = static_cast<std::size_t>(cfg_.channels);
    const auto k = static_cast<std::size_t>(cfg_.kernel_size);
    const auto j = static_cast<std::size_t>(cfg_.decoder_lengthscales);
    const double spacing = 1.0 / cfg_.grid_density;
    log_ell_enc_ = params_.add("encoder.log_lengthscale", {1}, {std::log(2.0 * spacing)});
    enc_mlp_ = Mlp(params_, "encoder.mlp", {2, c, c}, rng);
    const bool symmetric = cfg_.family == Family::equivcnp;
    for (int l = 0; l < cfg_.conv_layers; ++l) {
      const std::string name = "cnn." + std::to_string(l);
      if (symmetric) {
        kernels_.push_back(params_.add_uniform(name + ".half_kernel", {c, c, (k + 1) / 2}, c * k, rng));
      } else {
        kernels_.push_back(params_.add_uniform(name + ".kernel", {c, c, k}, c * k, rng));
      }
      biases_.push_back(params_.add_zeros(name + ".bias", {c, 1}));
    }
    std::vector<double> ells(j);
    for (std::size_t i = 0; i < j; ++i) {
      const double frac = j == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(j - 1);
      ells[i] = std::log(spacing) + frac * std::log(5.0);  // 1 to 5 grid cells
    }
    log_ell_dec_ = params_.add("decoder.log_lengthscales", {j, 1, 1}, ells);
    dec_mlp_ = Mlp(params_, "decoder.mlp", {j * c, c, c, 2}, rng);
    if (cfg_.has_bank()) {
      const std::size_t out = cfg_.family == Family::relaxedconvcnp
                                  ? static_cast<std::size_t>(cfg_.conv_layers)
                                  : c;
      bank_ = FixedInputBank(params_, "bank", cfg_.bank, c, out, rng);
    }
  }

  GaussianPrediction forward(const std::vector<double>& x_context,
                             const std::vector<double>& y_context,
                             const std::vector<double>& x_target, BankMode mode) const override {
    const double spacing = 1.0 / cfg_.grid_density;
    const std::vector<double> grid = make_grid(x_context, x_target, spacing, cfg_.grid_margin);
    for (double x : x_target)
      if (x < grid.front() || x > grid.back()) throw ShapeError("target outside grid coverage");
    const std::size_t t = grid.size();
    const bool use_bank = bank_.valid() && mode == BankMode::active;
    const Tensor grid_pos = Tensor::from({t}, grid);

    Tensor h = enc_mlp_(setconv_encode(grid, x_context, y_context, log_ell_enc_));
    Tensor modulation;
    if (use_bank) {
      if (cfg_.family == Family::relaxedconvcnp) {
        modulation = transpose(bank_(grid_pos));  // [layers, T]
      } else {
        h = h + bank_(grid_pos);
      }
    }
    Tensor signal = transpose(h);  // [C, T]
    for (std::size_t l = 0; l < kernels_.size(); ++l) {
      Tensor in = signal;
      if (use_bank && cfg_.family == Family::relaxedconvcnp) {
        in = signal * (slice(modulation, 0, l, 1) + 1.0);
      }
      signal = (cfg_.family == Family::equivcnp ? symmetric_conv1d(in, kernels_[l])
                                                : conv1d(in, kernels_[l])) +
               biases_[l];
      if (l + 1 < kernels_.size()) signal = relu(signal);
    }
    const Tensor f = transpose(signal);  // [T, C]

    const std::size_t nt = x_target.size(), j = log_ell_dec_.size(0), c = f.size(1);
    const Tensor d2 = reshape(squared_distances(x_target, grid), {1, nt, t});
    const Tensor weights = exp(d2 * rbf_coefficient(log_ell_dec_));  // [J, Nt, T]
    Tensor theta = matmul(reshape(weights, {j * nt, t}), f);
    theta = reshape(permute(reshape(theta, {j, nt, c}), {1, 0, 2}), {nt, j * c});
    const Tensor out = dec_mlp_(theta);
    return {reshape(slice(out, 1, 0, 1), {nt}),
            reshape(softplus(slice(out, 1, 1, 1)) + 1e-6, {nt})};
  }

 private:
  Tensor log_ell_enc_;
  Mlp enc_mlp_;
  std::vector<Tensor> kernels_;
  std::vector<Tensor> biases_;
  Tensor log_ell_dec_;
  Mlp dec_mlp_;
  FixedInputBank bank_;
};

}  // namespace

std::unique_ptr<Model> make_grid_model(ModelConfig cfg) {
  return std::make_unique<GridModel>(std::move(cfg));
}

}  // namespace detail

}  // namespace aenp
