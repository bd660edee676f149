#pragma once

// Independent reference implementations used by unit and acceptance tests.

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <vector>

namespace oracle {

inline double normal_logpdf(double y, double mean, double var) {
  return -0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * std::log(var) -
         0.5 * (y - mean) * (y - mean) / var;
}

// Stationary squared-exponential GP, k = exp(-d^2 / (2 ell^2)), scored as the
// mean per-point log predictive density of noisy observations.
inline double se_posterior_loglik(const std::vector<double>& xc, const std::vector<double>& yc,
                                  const std::vector<double>& xt, const std::vector<double>& yt,
                                  double ell, double noise) {
  const auto k = [ell](double a, double b) { return std::exp(-(a - b) * (a - b) / (2 * ell * ell)); };
  const Eigen::Index nc = static_cast<Eigen::Index>(xc.size());
  Eigen::MatrixXd kcc(nc, nc);
  for (Eigen::Index i = 0; i < nc; ++i)
    for (Eigen::Index j = 0; j < nc; ++j) kcc(i, j) = k(xc[i], xc[j]) + (i == j ? noise * noise : 0.0);
  Eigen::LDLT<Eigen::MatrixXd> solver(kcc);
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(yc.data(), nc);
  double total = 0.0;
  for (std::size_t t = 0; t < xt.size(); ++t) {
    Eigen::VectorXd kc(nc);
    for (Eigen::Index i = 0; i < nc; ++i) kc(i) = k(xc[i], xt[t]);
    double mean = 0.0, var = 1.0 + noise * noise;
    if (nc > 0) {
      mean = kc.dot(solver.solve(y));
      var -= kc.dot(solver.solve(kc));
    }
    total += normal_logpdf(yt[t], mean, var);
  }
  return total / static_cast<double>(xt.size());
}

}  // namespace oracle
