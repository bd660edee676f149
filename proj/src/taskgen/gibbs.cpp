#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "aenp/config_error.hpp"
#include "aenp/taskgen.hpp"
#include "aenp/tensor.hpp"

namespace aenp {

void GibbsProcessConfig::validate() const {
  std::vector<std::string> bad;
  if (!(ell_low > 0.0)) bad.push_back("process.ell_low");
  if (!(ell_high > 0.0)) bad.push_back("process.ell_high");
  if (!(noise_std > 0.0)) bad.push_back("process.noise_std");
  if (!(orientation_prob >= 0.0 && orientation_prob <= 1.0)) bad.push_back("process.orientation_prob");
  if (!bad.empty()) throw ConfigError("invalid Gibbs process configuration", bad);
}

void to_json(nlohmann::json& j, const GibbsProcessConfig& c) {
  j = {{"ell_low", c.ell_low},
       {"ell_high", c.ell_high},
       {"changepoint", c.changepoint},
       {"noise_std", c.noise_std},
       {"orientation_prob", c.orientation_prob}};
}

void from_json(const nlohmann::json& j, GibbsProcessConfig& c) {
  const std::string p = "process";
  reject_unknown_keys(j, {"ell_low", "ell_high", "changepoint", "noise_std", "orientation_prob"}, p);
  read_optional(j, "ell_low", c.ell_low, p);
  read_optional(j, "ell_high", c.ell_high, p);
  read_optional(j, "changepoint", c.changepoint, p);
  read_optional(j, "noise_std", c.noise_std, p);
  read_optional(j, "orientation_prob", c.orientation_prob, p);
  c.validate();
}

double lengthscale_profile(double x, int beta, const GibbsProcessConfig& cfg) {
  const bool left = x < cfg.changepoint;
  const bool low = beta == 1 ? left : !left;
  return low ? cfg.ell_low : cfg.ell_high;
}

double gibbs_kernel(double x, double x2, double l1, double l2) {
  const double s = l1 * l1 + l2 * l2;
  const double d = x - x2;
  return std::sqrt(2.0 * l1 * l2 / s) * std::exp(-d * d / s);
}

double gibbs_kernel(double x, double x2, int beta, const GibbsProcessConfig& cfg) {
  return gibbs_kernel(x, x2, lengthscale_profile(x, beta, cfg), lengthscale_profile(x2, beta, cfg));
}

std::vector<double> gibbs_cross(const std::vector<double>& a, const std::vector<double>& b,
                                int beta, const GibbsProcessConfig& cfg) {
  std::vector<double> la(a.size()), lb(b.size());
  for (std::size_t i = 0; i < a.size(); ++i) la[i] = lengthscale_profile(a[i], beta, cfg);
  for (std::size_t j = 0; j < b.size(); ++j) lb[j] = lengthscale_profile(b[j], beta, cfg);
  std::vector<double> k(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) k[i * b.size() + j] = gibbs_kernel(a[i], b[j], la[i], lb[j]);
  return k;
}

std::vector<double> sample_gp(const std::vector<double>& xs, int beta,
                              const GibbsProcessConfig& cfg, Rng& rng) {
  const std::size_t n = xs.size();
  std::vector<double> l = gibbs_cross(xs, xs, beta, cfg);
  cholesky_inplace(l, n);
  std::vector<double> z(n);
  for (auto& v : z) v = rng.normal();
  std::vector<double> f(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k <= i; ++k) s += l[i * n + k] * z[k];
    f[i] = s;
  }
  return f;
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Cholesky of K_cc + noise^2 I through the shared jitter ladder.
RowMat noisy_factor(const std::vector<double>& x_c, int beta, const GibbsProcessConfig& cfg) {
  const std::size_t n = x_c.size();
  std::vector<double> k = gibbs_cross(x_c, x_c, beta, cfg);
  for (std::size_t i = 0; i < n; ++i) k[i * n + i] += cfg.noise_std * cfg.noise_std;
  cholesky_inplace(k, n);
  return Eigen::Map<RowMat>(k.data(), n, n);
}

}  // namespace

GpPrediction gp_predict(const std::vector<double>& x_c, const std::vector<double>& y_c,
                        const std::vector<double>& x_t, int beta,
                        const GibbsProcessConfig& cfg) {
  if (x_c.size() != y_c.size()) throw ShapeError("gp_predict: context sizes differ");
  const double noise_var = cfg.noise_std * cfg.noise_std;
  const std::size_t nt = x_t.size(), nc = x_c.size();
  GpPrediction out{std::vector<double>(nt, 0.0), std::vector<double>(nt)};
  for (std::size_t i = 0; i < nt; ++i) out.variance[i] = gibbs_kernel(x_t[i], x_t[i], beta, cfg) + noise_var;
  if (nc == 0) return out;
  const RowMat l = noisy_factor(x_c, beta, cfg);
  const auto chol = l.triangularView<Eigen::Lower>();
  std::vector<double> kct = gibbs_cross(x_c, x_t, beta, cfg);
  Eigen::Map<RowMat> kx(kct.data(), nc, nt);
  const RowMat v = chol.solve(kx);  // L^{-1} K_ct
  const Eigen::VectorXd w = chol.solve(Eigen::Map<const Eigen::VectorXd>(y_c.data(), nc));
  for (std::size_t i = 0; i < nt; ++i) {
    out.mean[i] = v.col(i).dot(w);
    out.variance[i] -= v.col(i).squaredNorm();
  }
  return out;
}

double gp_log_marginal(const std::vector<double>& x_c, const std::vector<double>& y_c, int beta,
                       const GibbsProcessConfig& cfg) {
  const std::size_t n = x_c.size();
  if (n == 0) return 0.0;
  const RowMat l = noisy_factor(x_c, beta, cfg);
  const Eigen::VectorXd w =
      l.triangularView<Eigen::Lower>().solve(Eigen::Map<const Eigen::VectorXd>(y_c.data(), n));
  double logdet = 0.0;
  for (std::size_t i = 0; i < n; ++i) logdet += std::log(l(i, i));
  return -0.5 * w.squaredNorm() - logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

namespace {
double log_normal(double y, double mean, double var) {
  const double d = y - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - d * d / (2.0 * var);
}
}  // namespace

double gp_posterior_loglik(const Task& task, const GibbsProcessConfig& cfg, OracleKind kind,
                           bool context_as_target) {
  const auto& xt = context_as_target ? task.x_context : task.x_target;
  const auto& yt = context_as_target ? task.y_context : task.y_target;
  if (xt.empty()) throw std::invalid_argument("gp_posterior_loglik: no points to score");
  auto per_point = [&](int beta) {
    const auto pred = gp_predict(task.x_context, task.y_context, xt, beta, cfg);
    std::vector<double> lp(xt.size());
    for (std::size_t i = 0; i < xt.size(); ++i) lp[i] = log_normal(yt[i], pred.mean[i], pred.variance[i]);
    return lp;
  };
  double total = 0.0;
  if (kind == OracleKind::known_beta) {
    for (double v : per_point(task.beta)) total += v;
  } else {
    const double p1 = cfg.orientation_prob;
    const double a0 = std::log(1.0 - p1) + gp_log_marginal(task.x_context, task.y_context, 0, cfg);
    const double a1 = std::log(p1) + gp_log_marginal(task.x_context, task.y_context, 1, cfg);
    const double m = std::max(a0, a1);
    const double lse = m + std::log(std::exp(a0 - m) + std::exp(a1 - m));
    const double lw0 = a0 - lse, lw1 = a1 - lse;
    const auto l0 = per_point(0);
    const auto l1 = per_point(1);
    for (std::size_t i = 0; i < xt.size(); ++i) {
      const double u = lw0 + l0[i], v = lw1 + l1[i];
      const double mx = std::max(u, v);
      total += mx + std::log(std::exp(u - mx) + std::exp(v - mx));
    }
  }
  return total / static_cast<double>(xt.size());
}

}  // namespace aenp
