#pragma once

#include "aenp/models.hpp"

namespace aenp::detail {

Tensor squared_distances(const std::vector<double>& a, const std::vector<double>& b);
Tensor rbf_coefficient(const Tensor& log_lengthscale);

std::unique_ptr<Model> make_grid_model(ModelConfig cfg);
std::unique_ptr<Model> make_token_model(ModelConfig cfg);

}  // namespace aenp::detail
