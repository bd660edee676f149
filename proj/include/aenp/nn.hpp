#pragma once

#include <map>
#include <string>
#include <vector>

#include "aenp/rng.hpp"
#include "aenp/tensor.hpp"

namespace aenp {

/// Named, ordered collection of trainable tensors.
class ParamStore {
 public:
  /// Registers a new parameter; names must be unique.
  Tensor add(const std::string& name, Shape shape, std::vector<double> values);
  /// Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Tensor add_uniform(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng);
  Tensor add_zeros(const std::string& name, Shape shape);

  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
  std::size_t size() const { return items_.size(); }
  std::size_t numel() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::map<std::string, std::size_t> index_;
};

/// y = x W + b with W [in, out], x [N, in].
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  std::size_t in_features() const { return weight.size(0); }
  std::size_t out_features() const { return weight.size(1); }
};

/// Affine-ReLU chain with an affine final layer.
struct Mlp {
  std::vector<Linear> layers;

  Mlp() = default;
  /// widths = {in, hidden..., out}.
  Mlp(ParamStore& store, const std::string& name, const std::vector<std::size_t>& widths,
      Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

Tensor mlp_forward(const Tensor& x, const std::vector<Linear>& layers);

}  // namespace aenp
