#include "aenp/nn.hpp"

#include <cmath>

namespace aenp {

Tensor ParamStore::add(const std::string& name, Shape shape, std::vector<double> values) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Tensor t = Tensor::parameter(std::move(shape), std::move(values));
  index_[name] = items_.size();
  items_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::add_uniform(const std::string& name, Shape shape, std::size_t fan_in,
                               Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::vector<double> v(aenp::numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return add(name, std::move(shape), std::move(v));
}

Tensor ParamStore::add_zeros(const std::string& name, Shape shape) {
  const std::size_t n = aenp::numel(shape);
  return add(name, std::move(shape), std::vector<double>(n, 0.0));
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return items_[it->second].second;
}

std::size_t ParamStore::numel() const {
  std::size_t n = 0;
  for (const auto& [_, t] : items_) n += t.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, t] : items_) t.zero_grad();
}

Linear::Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
               Rng& rng)
    : weight(store.add_uniform(name + ".weight", {in, out}, in, rng)),
      bias(store.add_zeros(name + ".bias", {out})) {}

Tensor Linear::operator()(const Tensor& x) const {
  if (x.dim() != 2 || x.size(1) != in_features()) {
    throw ShapeError("Linear: expected [N, " + std::to_string(in_features()) + "], got " +
                     shape_str(x.shape()));
  }
  return linear(x, weight, bias);
}

Mlp::Mlp(ParamStore& store, const std::string& name, const std::vector<std::size_t>& widths,
         Rng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp needs at least input and output width");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers.emplace_back(store, name + "." + std::to_string(i), widths[i], widths[i + 1], rng);
  }
}

Tensor Mlp::operator()(const Tensor& x) const { return mlp_forward(x, layers); }

Tensor mlp_forward(const Tensor& x, const std::vector<Linear>& layers) {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size()) h = relu(h);
  }
  return h;
}

}  // namespace aenp
