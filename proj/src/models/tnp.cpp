#include <cmath>
#include <numbers>

#include "bank.hpp"
#include "models_internal.hpp"

namespace aenp::detail {

namespace {

// Pre-norm residual attention block followed by a pre-norm residual MLP.
class AttentionBlock {
 public:
  AttentionBlock() = default;
  AttentionBlock(ParamStore& store, const std::string& name, AttentionConfig cfg, Rng& rng)
      : attn_(store, name + ".attn", cfg, rng), ff_(store, name + ".ff", {cfg.dz, cfg.dz, cfg.dz, cfg.dz}, rng) {}

  Tensor cross(const Tensor& zq, const Tensor& zk, const Tensor& xq, const Tensor& xk) const {
    const Tensor z = zq + attn_(layer_norm(zq), layer_norm(zk), xq, xk);
    return z + ff_(layer_norm(z));
  }

  Tensor self(const Tensor& z, const Tensor& x) const {
    const Tensor n = layer_norm(z);
    const Tensor u = z + attn_(n, n, x, x);
    return u + ff_(layer_norm(u));
  }

 private:
  MultiHeadAttention attn_;
  Mlp ff_;
};

std::vector<double> normal_values(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

Tensor column(const std::vector<double>& v) { return Tensor::from({v.size(), 1}, v); }

GaussianPrediction split_output(const Tensor& out) {
  const std::size_t n = out.size(0);
  return {reshape(slice(out, 1, 0, 1), {n}), reshape(softplus(slice(out, 1, 1, 1)) + 1e-6, {n})};
}

class TokenModel final : public Model {
 public:
  explicit TokenModel(ModelConfig cfg) : Model(std::move(cfg)) {
    Rng rng(cfg_.seed, Stream::init);
    const auto dz = static_cast<std::size_t>(cfg_.dz);
    const bool vanilla = cfg_.family == Family::tnp;
    AttentionConfig acfg{dz, static_cast<std::size_t>(cfg_.heads),
                         static_cast<std::size_t>(cfg_.head_dim),
                         vanilla ? 0 : static_cast<std::size_t>(cfg_.mu_hidden)};
    embed_ = Mlp(params_, "embed", {vanilla ? 3u : 2u, dz, dz, dz}, rng);
    if (!vanilla) z0_ = params_.add("z0", {1, dz}, normal_values(dz, rng));
    if (cfg_.family == Family::pttetnp) {
      const auto m = static_cast<std::size_t>(cfg_.pseudo_tokens);
      u0_ = params_.add("pseudo.u0", {m, dz}, normal_values(m * dz, rng));
      v0_ = params_.add("pseudo.v0", {m}, normal_values(m, rng));
    }
    for (int l = 0; l < cfg_.layers; ++l) {
      const std::string name = "layer." + std::to_string(l);
      if (cfg_.family == Family::pttetnp) {
        pseudo_in_.emplace_back(params_, name + ".pseudo_cross", acfg, rng);
        pseudo_self_.emplace_back(params_, name + ".pseudo_self", acfg, rng);
        target_cross_.emplace_back(params_, name + ".target_cross", acfg, rng);
      } else {
        target_cross_.emplace_back(params_, name + ".target_cross", acfg, rng);
        if (l + 1 < cfg_.layers) context_self_.emplace_back(params_, name + ".context_self", acfg, rng);
      }
    }
    decoder_ = Mlp(params_, "decoder", {dz, dz, dz, 2}, rng);
    if (cfg_.has_bank()) bank_ = FixedInputBank(params_, "bank", cfg_.bank, dz, dz, rng);
  }

  GaussianPrediction forward(const std::vector<double>& x_context,
                             const std::vector<double>& y_context,
                             const std::vector<double>& x_target, BankMode mode) const override {
    if (x_context.size() != y_context.size()) throw ShapeError("context sizes differ");
    const std::size_t nc = x_context.size(), nt = x_target.size();
    const auto dz = static_cast<std::size_t>(cfg_.dz);
    const bool use_bank = bank_.valid() && mode == BankMode::active;
    const Tensor xc = Tensor::from({nc}, x_context);
    const Tensor xt = Tensor::from({nt}, x_target);

    if (cfg_.family == Family::tnp) {
      const Tensor zc0 = embed_(concat({column(x_context), column(y_context), Tensor::full({nc, 1}, 1.0)}, 1));
      const Tensor zt0 = embed_(concat({column(x_target), Tensor::zeros({nt, 2})}, 1));
      return run_context_target(zc0, zt0, xc, xt);
    }

    Tensor zc = embed_(concat({column(y_context), Tensor::full({nc, 1}, 1.0)}, 1));
    const Tensor zt = z0_ + Tensor::zeros({nt, dz});
    if (cfg_.family == Family::tetnp) {
      if (use_bank) zc = zc + bank_(xc);
      return run_context_target(zc, zt, xc, xt);
    }

    // pseudo-token variant
    double centre = 0.0;
    for (double x : x_context) centre += x;
    if (nc > 0) centre /= static_cast<double>(nc);
    const Tensor v = v0_ + centre;
    Tensor u = u0_;
    if (use_bank) u = u + bank_(v);
    Tensor z = zt;
    for (std::size_t l = 0; l < target_cross_.size(); ++l) {
      u = pseudo_in_[l].cross(u, zc, v, xc);
      u = pseudo_self_[l].self(u, v);
      z = target_cross_[l].cross(z, u, xt, v);
    }
    return split_output(decoder_(z));
  }

 private:
  GaussianPrediction run_context_target(Tensor zc, Tensor zt, const Tensor& xc, const Tensor& xt) const {
    for (std::size_t l = 0; l < target_cross_.size(); ++l) {
      zt = target_cross_[l].cross(zt, zc, xt, xc);
      if (l < context_self_.size() && zc.size(0) > 0) zc = context_self_[l].self(zc, xc);
    }
    return split_output(decoder_(zt));
  }

  Mlp embed_;
  Tensor z0_, u0_, v0_;
  std::vector<AttentionBlock> target_cross_, context_self_, pseudo_in_, pseudo_self_;
  Mlp decoder_;
  FixedInputBank bank_;
};

}  // namespace

std::unique_ptr<Model> make_token_model(ModelConfig cfg) {
  return std::make_unique<TokenModel>(std::move(cfg));
}

}  // namespace aenp::detail

namespace aenp {

std::unique_ptr<Model> make_model(ModelConfig cfg) {
  cfg.finalize();
  if (is_grid_family(cfg.family)) return detail::make_grid_model(std::move(cfg));
  return detail::make_token_model(std::move(cfg));
}

Tensor gaussian_loglik(const GaussianPrediction& pred, const std::vector<double>& y) {
  if (pred.mean.numel() != y.size()) throw ShapeError("gaussian_loglik: target count mismatch");
  const Tensor diff = pred.mean - Tensor::from({y.size()}, y);
  const Tensor lp = (log(pred.variance) + square(diff) / pred.variance) * -0.5 +
                    (-0.5 * std::log(2.0 * std::numbers::pi));
  return mean(lp);
}

}  // namespace aenp
