#include <cmath>

#include "aenp/models.hpp"

namespace aenp {

MultiHeadAttention::MultiHeadAttention(ParamStore& store, const std::string& name,
                                       AttentionConfig cfg, Rng& rng)
    : cfg_(cfg) {
  const std::size_t inner = cfg.heads * cfg.head_dim;
  wq_ = Linear(store, name + ".q", cfg.dz, inner, rng);
  wk_ = Linear(store, name + ".k", cfg.dz, inner, rng);
  wv_ = Linear(store, name + ".v", cfg.dz, inner, rng);
  wo_ = Linear(store, name + ".o", inner, cfg.dz, rng);
  if (cfg.mu_hidden > 0) {
    mu_ = Mlp(store, name + ".mu", {cfg.heads + 1, cfg.mu_hidden, cfg.mu_hidden, cfg.heads}, rng);
  }
}

Tensor MultiHeadAttention::operator()(const Tensor& queries, const Tensor& keys,
                                      const Tensor& query_pos, const Tensor& key_pos) const {
  const std::size_t nq = queries.size(0), nk = keys.size(0);
  const std::size_t h = cfg_.heads, d = cfg_.head_dim;
  if (nk == 0) return Tensor::zeros({nq, cfg_.dz});
  const Tensor q = permute(reshape(wq_(queries), {nq, h, d}), {1, 0, 2});  // [H, Nq, d]
  const Tensor k = permute(reshape(wk_(keys), {nk, h, d}), {1, 2, 0});     // [H, d, Nk]
  const Tensor v = permute(reshape(wv_(keys), {nk, h, d}), {1, 0, 2});     // [H, Nk, d]
  Tensor logits = matmul(q, k) * (1.0 / std::sqrt(static_cast<double>(d)));  // [H, Nq, Nk]
  if (!mu_.layers.empty()) {
    if (query_pos.numel() != nq || key_pos.numel() != nk) {
      throw ShapeError("attention: position count does not match token count");
    }
    const Tensor diff = reshape(reshape(query_pos, {nq, 1}) - reshape(key_pos, {1, nk}), {nq * nk, 1});
    const Tensor content = reshape(permute(logits, {1, 2, 0}), {nq * nk, h});
    const Tensor rel = mu_(concat({content, diff}, 1));
    logits = logits + permute(reshape(rel, {nq, nk, h}), {2, 0, 1});
  }
  const Tensor out = matmul(softmax(logits), v);  // [H, Nq, d]
  return wo_(reshape(permute(out, {1, 0, 2}), {nq, h * d}));
}

}  // namespace aenp
