#include "aenp/optim.hpp"

#include <algorithm>
#include <cmath>

namespace aenp {

AdamW::AdamW(ParamStore& params, AdamWConfig cfg) : params_(params), cfg_(cfg) {
  for (const auto& [_, t] : params_.items()) {
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
}

void AdamW::step() {
  if (m_.size() != params_.size()) throw ShapeError("AdamW: parameter set changed");
  ++step_;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
  auto& items = params_.items();
  for (std::size_t k = 0; k < items.size(); ++k) {
    Tensor& p = items[k].second;
    if (m_[k].size() != p.numel()) throw ShapeError("AdamW: moment shape mismatch");
    auto data = p.mutable_data();
    const auto grad = p.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      double g = grad.empty() ? 0.0 : grad[i];
      if (cfg_.clip_value > 0.0) g = std::clamp(g, -cfg_.clip_value, cfg_.clip_value);
      data[i] -= cfg_.lr * cfg_.weight_decay * data[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace aenp
