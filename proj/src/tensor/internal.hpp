#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "aenp/tensor.hpp"

namespace aenp::detail {

bool any_requires_grad(std::initializer_list<const Tensor*> inputs);
bool any_requires_grad(const std::vector<Tensor>& inputs);

// Builds a result node. Throws NumericalError if any value is non-finite.
// When recording, parents are attached and the caller sets node->backward.
std::shared_ptr<Node> make_result(const char* op, Shape shape, std::vector<double> data,
                                  const std::vector<std::shared_ptr<Node>>& parents,
                                  bool record);

inline std::shared_ptr<Node> make_result(const char* op, Shape shape,
                                         std::vector<double> data,
                                         std::initializer_list<const Tensor*> inputs) {
  const bool record = grad_enabled() && any_requires_grad(inputs);
  std::vector<std::shared_ptr<Node>> parents;
  if (record) {
    for (const Tensor* t : inputs) parents.push_back(t->node());
  }
  return make_result(op, std::move(shape), std::move(data), parents, record);
}

inline bool recording(const std::shared_ptr<Node>& n) { return n->requires_grad; }

}  // namespace aenp::detail
