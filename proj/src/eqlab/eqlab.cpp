#include "aenp/eqlab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <Eigen/SVD>

#include "aenp/config_error.hpp"
#include "aenp/report.hpp"
#include "aenp/rng.hpp"

namespace aenp {

using Vec = FourierSpace::Vec;
using Mat = FourierSpace::Mat;
using cd = std::complex<double>;

FourierSpace::FourierSpace(int n_max) : n_max_(n_max) {
  if (n_max < 0) throw std::invalid_argument("FourierSpace: negative truncation order");
}

Vec FourierSpace::translate(const Vec& f, double tau) const {
  if (f.size() > dim()) throw std::invalid_argument("translate: vector longer than the space");
  Vec out(f.size());
  for (Eigen::Index j = 0; j < f.size(); ++j) {
    const double k = frequency(static_cast<int>(j));
    out(j) = std::polar(1.0, -2.0 * std::numbers::pi * k * tau) * f(j);
  }
  return out;
}

Vec FourierSpace::project(const Vec& f, int n) const {
  if (n < 0 || n > dim()) throw std::invalid_argument("project: n outside [0, dim]");
  Vec out = f;
  out.tail(f.size() - std::min<Eigen::Index>(n, f.size())).setZero();
  return out;
}

Mat FourierSpace::projector(int n) const {
  if (n < 0 || n > dim()) throw std::invalid_argument("projector: n outside [0, dim]");
  Mat p = Mat::Zero(dim(), dim());
  for (int j = 0; j < n; ++j) p(j, j) = 1.0;
  return p;
}

Vec FourierSpace::basis(int slot) const {
  Vec e = Vec::Zero(dim());
  e(slot) = 1.0;
  return e;
}

double operator_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

std::string to_string(LinearKind k) {
  switch (k) {
    case LinearKind::geometric: return "geometric";
    case LinearKind::harmonic: return "harmonic";
    case LinearKind::smooth_random: return "smooth_random";
    case LinearKind::identity: return "identity";
  }
  return "?";
}

namespace {

Mat random_complex(int rows, int cols, Rng& rng) {
  Mat r(rows, cols);
  const double s = 1.0 / std::sqrt(2.0 * cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) r(i, j) = cd(rng.normal() * s, rng.normal() * s);
  return r;
}

// D^{1/2} R D^{1/2} with D = diag(rate^j).
Mat smooth_operator(int dim, double rate, Rng& rng) {
  Mat r = random_complex(dim, dim, rng);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) r(i, j) *= std::pow(rate, 0.5 * (i + j));
  return r;
}

Vec random_vec(int dim, Rng& rng) {
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v(i) = cd(rng.normal(), rng.normal());
  return v;
}

}  // namespace

Mat make_linear_operator(const FourierSpace& space, LinearKind kind, std::uint64_t seed) {
  const int d = space.dim();
  Mat t = Mat::Zero(d, d);
  switch (kind) {
    case LinearKind::geometric:
      for (int j = 0; j < d; ++j) t(j, j) = std::pow(2.0, -(j + 1));
      break;
    case LinearKind::harmonic:
      for (int j = 0; j < d; ++j) t(j, j) = 1.0 / (j + 1);
      break;
    case LinearKind::smooth_random: {
      Rng rng(seed, Stream::lab, 1);
      t = smooth_operator(d, 0.4, rng);
      break;
    }
    case LinearKind::identity:
      t = Mat::Identity(d, d);
      break;
  }
  return t;
}

Vec fixed_input_map(const Vec& f, const std::vector<Vec>& taus, const std::vector<Vec>& es) {
  if (taus.size() != es.size()) throw std::invalid_argument("fixed_input_map: tau/e count mismatch");
  Vec out = Vec::Zero(f.size());
  for (std::size_t i = 0; i < taus.size(); ++i) out += es[i] * FourierSpace::inner(taus[i], f);
  return out;
}

std::vector<FixedInputRow> fixed_input_table(const FourierSpace& space, const Mat& t, const std::vector<int>& ns,
                                std::uint64_t seed) {
  const int d = space.dim();
  const Mat adjoint = t.adjoint();
  std::vector<FixedInputRow> rows;
  Rng rng(seed, Stream::lab, 2);
  for (int n : ns) {
    if (n < 0 || n > d) throw std::invalid_argument("fixed_input_table: n outside [0, dim]");
    std::vector<Vec> taus, es;
    for (int i = 0; i < n; ++i) {
      es.push_back(space.basis(i));
      taus.push_back(adjoint * es.back());
    }
    Mat e_n(d, d);
    for (int j = 0; j < d; ++j) e_n.col(j) = fixed_input_map(space.basis(j), taus, es);
    FixedInputRow row;
    row.n = n;
    row.error = operator_norm(t - e_n);
    row.residual_sv = operator_norm(t - space.projector(n) * t);
    for (int trial = 0; trial < 20; ++trial) {
      const double tau = rng.uniform(-1.0, 1.0);
      const Vec f = random_vec(d, rng);
      std::vector<Vec> gt, ge;
      for (int i = 0; i < n; ++i) {
        gt.push_back(space.translate(taus[i], tau));
        ge.push_back(space.translate(es[i], tau));
      }
      const Vec lhs = fixed_input_map(space.translate(f, tau), gt, ge);
      const Vec rhs = space.translate(fixed_input_map(f, taus, es), tau);
      row.equivariance_residual = std::max(row.equivariance_residual, (lhs - rhs).norm());
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<TruncationRow> truncation_table(const FourierSpace& space, const Mat& t, const std::vector<int>& ns) {
  std::vector<TruncationRow> rows;
  for (int n : ns) {
    const Mat p = space.projector(n);
    rows.push_back({n, operator_norm(t - p * t * p)});
  }
  return rows;
}

Vec NonlinearOperator::operator()(const Vec& u) const {
  if (!radial_tanh) return a * u;
  Vec v(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double r = std::abs(u(i));
    v(i) = r > 0.0 ? u(i) * (std::tanh(r) / r) : cd(0.0, 0.0);
  }
  return a * v;
}

NonlinearOperator make_identity_operator(const FourierSpace& space) {
  NonlinearOperator t;
  t.a = Mat::Identity(space.dim(), space.dim());
  t.radial_tanh = false;
  t.holder_c = 1.0;
  t.holder_alpha = 1.0;
  return t;
}

NonlinearOperator make_tanh_operator(const FourierSpace& space, std::uint64_t seed) {
  Rng rng(seed, Stream::lab, 3);
  NonlinearOperator t;
  t.a = smooth_operator(space.dim(), 0.4, rng);
  t.radial_tanh = true;
  // z -> tanh(|z|) z / |z| is 1-Lipschitz, so ||A|| is a Lipschitz constant.
  t.holder_c = operator_norm(t.a);
  t.holder_alpha = 1.0;
  return t;
}

double LatticeConstruction::anchor_count(int n, double m, double h) {
  const double hn = h / std::sqrt(2.0 * n);
  const double per_axis = 1.0 + 2.0 * std::ceil(m / hn);
  return std::pow(per_axis, 2.0 * n);  // real and imaginary part of n coefficients
}

LatticeConstruction::LatticeConstruction(const FourierSpace& space, const NonlinearOperator& t, int n, double m,
                                   double h)
    : space_(space), n_(n), h_(h) {
  if (n < 1 || n > space.dim()) throw std::invalid_argument("lattice: n outside [1, dim]");
  if (!(m > 0.0) || !(h > 0.0)) throw std::invalid_argument("lattice: M and h must be positive");
  const double count = anchor_count(n, m, h);
  if (count > kAnchorCap) {
    std::ostringstream os;
    os << "lattice: lattice needs " << count << " anchors, above the cap of " << kAnchorCap;
    throw std::invalid_argument(os.str());
  }
  const double hn = h / std::sqrt(2.0 * n);
  const int j_max = static_cast<int>(std::ceil(m / hn));
  const int per_axis = 2 * j_max + 1;
  const int axes = 2 * n;
  const auto total = static_cast<std::size_t>(count);
  anchors_.reserve(total);
  values_.reserve(total);
  std::vector<int> idx(axes, 0);
  for (std::size_t a = 0; a < total; ++a) {
    Vec anchor(n);
    for (int i = 0; i < n; ++i) {
      anchor(i) = cd((idx[2 * i] - j_max) * hn, (idx[2 * i + 1] - j_max) * hn);
    }
    Vec full = Vec::Zero(space.dim());
    full.head(n) = anchor;
    anchors_.push_back(anchor);
    values_.push_back(t(full).head(n));  // P_n T P_n (a)
    for (int ax = 0; ax < axes; ++ax) {
      if (++idx[ax] < per_axis) break;
      idx[ax] = 0;
    }
  }
}

Vec LatticeConstruction::evaluate(const Vec& u, const std::vector<Vec>& anchors, const std::vector<Vec>& values,
                               double h) {
  Vec num = Vec::Zero(values.empty() ? u.size() : values.front().size());
  double den = 0.0;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const double r = (u - anchors[i]).norm();
    if (r >= h) continue;
    const double w = 1.0 - r / h;
    num += w * values[i];
    den += w;
  }
  if (den == 0.0) return Vec::Zero(num.size());
  return num / den;
}

Vec LatticeConstruction::operator()(const Vec& u) const {
  Vec out = Vec::Zero(space_.dim());
  out.head(n_) = evaluate(u.head(n_), anchors_, values_, h_);
  return out;
}

LatticeResult lattice_check(const FourierSpace& space, const NonlinearOperator& t, int n, double m, double h,
                      std::size_t samples, std::uint64_t seed) {
  const LatticeConstruction e(space, t, n, m, h);
  LatticeResult res;
  res.n = n;
  res.m = m;
  res.h = h;
  res.anchors = e.anchors().size();
  res.samples = samples;
  res.holder_term = t.holder_c * std::pow(h, t.holder_alpha);
  res.worst_margin = std::numeric_limits<double>::infinity();
  res.bound_holds = true;
  Rng rng(seed, Stream::lab, 4);
  const int d = space.dim();
  auto sample_ball = [&] {
    Vec v = random_vec(d, rng);
    const double radius = m * std::pow(rng.uniform(), 1.0 / (2.0 * d));
    return Vec(v * (radius / v.norm()));
  };
  for (std::size_t s = 0; s < samples; ++s) {
    const Vec u = sample_ball();
    const Vec pu = space.project(u, n);
    const Vec tu = t(u);
    const Vec ptp = space.project(t(pu), n);
    const double err = (tu - e(u)).norm();
    const double tail = (tu - ptp).norm();
    res.sup_error = std::max(res.sup_error, err);
    res.sup_tail = std::max(res.sup_tail, tail);
    const double margin = tail + res.holder_term - err;
    res.worst_margin = std::min(res.worst_margin, margin);
    if (margin < 0.0) res.bound_holds = false;
  }
  // Nearest-anchor coverage of the ball on a fresh sample.
  for (std::size_t s = 0; s < std::max<std::size_t>(samples, 1000); ++s) {
    const Vec pu = sample_ball().head(n);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& a : e.anchors()) best = std::min(best, (pu - a).norm());
    res.max_nearest_anchor = std::max(res.max_nearest_anchor, best);
  }
  // Equivariance of E when u, anchors and values move together.
  for (int trial = 0; trial < 20; ++trial) {
    const double tau = rng.uniform(-1.0, 1.0);
    const Vec u = sample_ball().head(n);
    std::vector<Vec> ga, gv;
    ga.reserve(e.anchors().size());
    gv.reserve(e.values().size());
    for (const auto& a : e.anchors()) ga.push_back(space.translate(a, tau));
    for (const auto& v : e.values()) gv.push_back(space.translate(v, tau));
    const Vec lhs = LatticeConstruction::evaluate(space.translate(u, tau), ga, gv, h);
    const Vec rhs = space.translate(LatticeConstruction::evaluate(u, e.anchors(), e.values(), h), tau);
    res.equivariance_residual = std::max(res.equivariance_residual, (lhs - rhs).norm());
  }
  return res;
}

LabConfig parse_lab_config(const nlohmann::json& j) {
  LabConfig c;
  const std::string p = "eqlab";
  reject_unknown_keys(j, {"n_max", "ns", "lattice_n", "lattice_m", "lattice_h", "lattice_samples", "seed"}, p);
  read_optional(j, "n_max", c.n_max, p);
  read_optional(j, "ns", c.ns, p);
  read_optional(j, "lattice_n", c.lattice_n, p);
  read_optional(j, "lattice_m", c.lattice_m, p);
  read_optional(j, "lattice_h", c.lattice_h, p);
  read_optional(j, "lattice_samples", c.lattice_samples, p);
  read_optional(j, "seed", c.seed, p);
  std::vector<std::string> bad;
  if (c.n_max < 1) bad.push_back("eqlab.n_max");
  for (int n : c.ns)
    if (n < 0 || n > c.n_max) bad.push_back("eqlab.ns");
  if (c.ns.empty()) bad.push_back("eqlab.ns");
  if (c.lattice_n < 1 || c.lattice_n > 2) bad.push_back("eqlab.lattice_n");
  if (!(c.lattice_m > 0.0) || c.lattice_m > 1.5) bad.push_back("eqlab.lattice_m");
  if (!(c.lattice_h > 0.0)) bad.push_back("eqlab.lattice_h");
  if (c.lattice_samples < 1) bad.push_back("eqlab.lattice_samples");
  if (!bad.empty()) throw ConfigError("invalid operator lab configuration", bad);
  if (LatticeConstruction::anchor_count(c.lattice_n, c.lattice_m, c.lattice_h) > LatticeConstruction::kAnchorCap) {
    throw ConfigError("lattice lattice exceeds the anchor cap", {"eqlab.lattice_h"});
  }
  return c;
}

void to_json(nlohmann::json& j, const LabConfig& c) {
  j = {{"n_max", c.n_max},   {"ns", c.ns},         {"lattice_n", c.lattice_n},
       {"lattice_m", c.lattice_m}, {"lattice_h", c.lattice_h}, {"lattice_samples", c.lattice_samples},
       {"seed", c.seed}};
}

void to_json(nlohmann::json& j, const OperatorLabReport& r) {
  j = nlohmann::json::object();
  j["linear"] = nlohmann::json::array();
  for (const auto& c : r.linear) {
    nlohmann::json lc = {{"kind", c.kind},
                         {"fixed_input_matches", c.fixed_input_matches},
                         {"fixed_input_monotone", c.fixed_input_monotone},
                         {"truncation_expected", c.truncation_expected}};
    for (const auto& row : c.fixed_input) {
      lc["fixed_input"].push_back({{"n", row.n},
                            {"error", row.error},
                            {"residual_sv", row.residual_sv},
                            {"equivariance_residual", row.equivariance_residual}});
    }
    for (const auto& row : c.truncation) lc["truncation"].push_back({{"n", row.n}, {"error", row.error}});
    j["linear"].push_back(lc);
  }
  j["lattice"] = nlohmann::json::array();
  for (const auto& t : r.lattice) {
    j["lattice"].push_back({{"n", t.n},
                         {"M", t.m},
                         {"h", t.h},
                         {"anchors", t.anchors},
                         {"samples", t.samples},
                         {"sup_error", t.sup_error},
                         {"sup_tail", t.sup_tail},
                         {"holder_term", t.holder_term},
                         {"worst_margin", t.worst_margin},
                         {"bound_holds", t.bound_holds},
                         {"max_nearest_anchor", t.max_nearest_anchor},
                         {"equivariance_residual", t.equivariance_residual}});
  }
  j["max_equivariance_residual"] = r.max_equivariance_residual;
  j["all_passed"] = r.all_passed;
}

OperatorLabReport run_operator_lab(const LabConfig& cfg) {
  const FourierSpace space(cfg.n_max);
  OperatorLabReport report;
  bool ok = true;
  for (LinearKind kind : {LinearKind::geometric, LinearKind::harmonic, LinearKind::smooth_random,
                          LinearKind::identity}) {
    const Mat t = make_linear_operator(space, kind, cfg.seed);
    OperatorLabReport::LinearCase c;
    c.kind = to_string(kind);
    c.fixed_input = fixed_input_table(space, t, cfg.ns, cfg.seed);
    c.truncation = truncation_table(space, t, cfg.ns);
    c.fixed_input_matches = true;
    c.fixed_input_monotone = true;
    for (std::size_t i = 0; i < c.fixed_input.size(); ++i) {
      const auto& row = c.fixed_input[i];
      if (std::abs(row.error - row.residual_sv) > 1e-10) c.fixed_input_matches = false;
      if (i > 0 && c.fixed_input[i].n >= c.fixed_input[i - 1].n && row.error > c.fixed_input[i - 1].error + 1e-12) {
        c.fixed_input_monotone = false;
      }
      report.max_equivariance_residual = std::max(report.max_equivariance_residual, row.equivariance_residual);
    }
    if (kind == LinearKind::identity) {
      c.truncation_expected = true;
      for (const auto& row : c.truncation)
        if (row.n < space.dim() && std::abs(row.error - 1.0) > 1e-12) c.truncation_expected = false;
    } else if (kind == LinearKind::harmonic) {
      // Decays like 1/(n+1): too slow to reach 1e-3, so it is checked against the closed form.
      c.truncation_expected = true;
      for (const auto& row : c.truncation)
        if (std::abs(row.error - 1.0 / (row.n + 1)) > 1e-10) c.truncation_expected = false;
    } else {
      c.truncation_expected = c.truncation.back().error < 1e-3;
      for (std::size_t i = 1; i < c.truncation.size(); ++i)
        if (c.truncation[i].error > c.truncation[i - 1].error + 1e-12) c.truncation_expected = false;
    }
    ok = ok && c.fixed_input_matches && c.fixed_input_monotone && c.truncation_expected;
    report.linear.push_back(std::move(c));
  }
  report.lattice.push_back(lattice_check(space, make_identity_operator(space), cfg.lattice_n, cfg.lattice_m, cfg.lattice_h,
                                   cfg.lattice_samples, cfg.seed));
  report.lattice.push_back(lattice_check(space, make_tanh_operator(space, cfg.seed), cfg.lattice_n, cfg.lattice_m,
                                   cfg.lattice_h, cfg.lattice_samples, cfg.seed + 1));
  for (const auto& t : report.lattice) {
    ok = ok && t.bound_holds && t.max_nearest_anchor < t.h;
    report.max_equivariance_residual = std::max(report.max_equivariance_residual, t.equivariance_residual);
  }
  report.all_passed = ok && report.max_equivariance_residual <= 1e-12;
  return report;
}

std::string lab_csv(const OperatorLabReport& r, const std::string& config_hash, std::uint64_t seed,
                    const std::string& git) {
  std::ostringstream os;
  os << "operator,n,error,equivariance_residual,config_hash,seed,git\n";
  for (const auto& c : r.linear) {
    for (const auto& row : c.fixed_input) {
      os << c.kind << ',' << row.n << ',' << format_double(row.error) << ','
         << format_double(row.equivariance_residual) << ',' << config_hash << ',' << seed << ',' << git << '\n';
    }
  }
  for (std::size_t i = 0; i < r.lattice.size(); ++i) {
    const auto& t = r.lattice[i];
    os << (i == 0 ? "lattice_identity" : "lattice_tanh") << ',' << t.n << ',' << format_double(t.sup_error) << ','
       << format_double(t.equivariance_residual) << ',' << config_hash << ',' << seed << ',' << git << '\n';
  }
  return os.str();
}

// ---- trained-model measurements ----

DeviationReport equivariance_deviation(const Model& model, const std::vector<Task>& tasks, DeviationNorm norm) {
  NoGradGuard guard;
  DeviationReport rep;
  double sum = 0.0, sum_sq = 0.0, ratio_sum = 0.0;
  std::vector<double> ratios;
  for (const auto& task : tasks) {
    const auto approx = model.forward(task.x_context, task.y_context, task.x_target, BankMode::active);
    const auto equiv = model.forward(task.x_context, task.y_context, task.x_target, BankMode::off);
    double acc = 0.0, diff_norm = 0.0, equiv_norm = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < task.x_target.size(); ++i) {
      const double me = equiv.mean[i];
      const double d = std::abs(me - approx.mean[i]);
      diff_norm += norm == DeviationNorm::l1 ? d : d * d;
      equiv_norm += norm == DeviationNorm::l1 ? std::abs(me) : me * me;
      if (std::abs(me) < 1e-6) {
        ++rep.excluded;
        continue;
      }
      const double r = d / std::abs(me);
      ratios.push_back(r);
      acc += norm == DeviationNorm::l1 ? r : r * r;
      ++used;
    }
    if (used == 0) continue;
    const double v = norm == DeviationNorm::l1 ? acc / used : std::sqrt(acc / used);
    sum += v;
    sum_sq += v * v;
    if (equiv_norm > 0.0)
      ratio_sum += norm == DeviationNorm::l1 ? diff_norm / equiv_norm : std::sqrt(diff_norm / equiv_norm);
    rep.points += used;
    ++rep.tasks;
  }
  if (rep.tasks == 0) throw std::invalid_argument("equivariance_deviation: every point was excluded");
  const double n = static_cast<double>(rep.tasks);
  rep.value = sum / n;
  const double var = rep.tasks > 1 ? std::max(0.0, (sum_sq - n * rep.value * rep.value) / (n - 1.0)) : 0.0;
  rep.std_error = std::sqrt(var / n);
  rep.norm_ratio = ratio_sum / n;
  const auto mid = ratios.begin() + static_cast<std::ptrdiff_t>(ratios.size() / 2);
  std::nth_element(ratios.begin(), mid, ratios.end());
  rep.median_point = *mid;
  return rep;
}

namespace {

double rmse(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.numel()));
}

std::vector<double> plus(std::vector<double> v, double d) {
  for (auto& x : v) x += d;
  return v;
}

}  // namespace

EpsilonReport epsilon_equivariance_check(const Model& model, const std::vector<Task>& tasks,
                                         const std::vector<double>& shifts, std::size_t grid_points) {
  NoGradGuard guard;
  EpsilonReport rep;
  rep.tasks = tasks.size();
  rep.shifts = shifts.size();
  for (const auto& task : tasks) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto* v : {&task.x_context, &task.x_target})
      for (double x : *v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
    std::vector<double> grid(grid_points);
    for (std::size_t i = 0; i < grid_points; ++i)
      grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid_points - 1);
    const auto a0 = model.forward(task.x_context, task.y_context, grid, BankMode::active).mean;
    const auto e0 = model.forward(task.x_context, task.y_context, grid, BankMode::off).mean;
    rep.epsilon_hat = std::max(rep.epsilon_hat, rmse(a0, e0));
    for (double d : shifts) {
      const auto xc = plus(task.x_context, d);
      const auto g = plus(grid, d);
      const auto a1 = model.forward(xc, task.y_context, g, BankMode::active).mean;
      const auto e1 = model.forward(xc, task.y_context, g, BankMode::off).mean;
      rep.epsilon_hat = std::max(rep.epsilon_hat, rmse(a1, e1));
      rep.max_residual = std::max(rep.max_residual, rmse(a0, a1));
      rep.strict_residual = std::max(rep.strict_residual, rmse(e0, e1));
    }
  }
  rep.bound_holds = rep.max_residual <= 2.0 * rep.epsilon_hat + 1e-6;
  return rep;
}

}  // namespace aenp
