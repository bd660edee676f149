#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aenp/models.hpp"
#include "aenp/taskgen.hpp"
#include "json.hpp"

namespace aenp {

/// Truncated L2(S^1) with the Fourier basis e_k(x) = exp(i 2 pi k x), |k| <= n_max.
/// Coefficient slot j holds frequency 0, 1, -1, 2, -2, ... so the first n slots
/// span a translation-invariant subspace.
class FourierSpace {
 public:
  using Vec = Eigen::VectorXcd;
  using Mat = Eigen::MatrixXcd;

  explicit FourierSpace(int n_max);

  int n_max() const { return n_max_; }
  int dim() const { return 2 * n_max_ + 1; }
  /// Frequency carried by slot j.
  static int frequency(int slot) { return slot % 2 == 1 ? (slot + 1) / 2 : -slot / 2; }

  static std::complex<double> inner(const Vec& a, const Vec& b) { return a.dot(b); }
  static double norm(const Vec& a) { return a.norm(); }

  /// f(x - tau): c_k -> exp(-i 2 pi k tau) c_k.
  Vec translate(const Vec& f, double tau) const;
  /// Keeps the first n slots; n > dim() is rejected.
  Vec project(const Vec& f, int n) const;
  Mat projector(int n) const;
  Vec basis(int slot) const;

 private:
  int n_max_;
};

/// Largest singular value.
double operator_norm(const FourierSpace::Mat& m);

/// Linear operators with nonincreasing ||T - P_n T P_n||, plus the identity control.
enum class LinearKind { geometric, harmonic, smooth_random, identity };
std::string to_string(LinearKind k);

FourierSpace::Mat make_linear_operator(const FourierSpace& space, LinearKind kind, std::uint64_t seed);

/// E_n(f, tau_1, e_1, ..., tau_n, e_n) = sum_i e_i <tau_i, f>.
FourierSpace::Vec fixed_input_map(const FourierSpace::Vec& f, const std::vector<FourierSpace::Vec>& taus,
                                  const std::vector<FourierSpace::Vec>& es);

struct FixedInputRow {
  int n = 0;
  double error = 0.0;           // ||T - E_n(., fixed inputs)|| from the constructed map
  double residual_sv = 0.0;     // top singular value of T - P_n T
  double equivariance_residual = 0.0;
};

/// Builds the fixed inputs tau_i = T^* e_i and measures the construction for each n.
std::vector<FixedInputRow> fixed_input_table(const FourierSpace& space, const FourierSpace::Mat& t,
                                const std::vector<int>& ns, std::uint64_t seed);

struct TruncationRow {
  int n = 0;
  double error = 0.0;  // ||T - P_n T P_n||
};

std::vector<TruncationRow> truncation_table(const FourierSpace& space, const FourierSpace::Mat& t,
                                  const std::vector<int>& ns);

/// Nonlinear (c, alpha)-Hölder operator T(u) = A phi(u), with phi the
/// per-coefficient radial map z -> tanh(|z|) z / |z|, or the identity.
struct NonlinearOperator {
  FourierSpace::Mat a;
  bool radial_tanh = true;
  double holder_c = 1.0;
  double holder_alpha = 1.0;

  FourierSpace::Vec operator()(const FourierSpace::Vec& u) const;
};

NonlinearOperator make_identity_operator(const FourierSpace& space);
NonlinearOperator make_tanh_operator(const FourierSpace& space, std::uint64_t seed);

/// Nadaraya-Watson construction over the lattice of anchors in span{e_1..e_n}.
class LatticeConstruction {
 public:
  static constexpr double kAnchorCap = 1e6;

  /// Throws std::invalid_argument when the anchor count exceeds the cap.
  LatticeConstruction(const FourierSpace& space, const NonlinearOperator& t, int n, double m, double h);

  /// Real lattice points per coordinate: 1 + 2 ceil(M / h_n), h_n = h / sqrt(2n).
  static double anchor_count(int n, double m, double h);

  /// E(u, anchors, values) with bump kernel max(0, 1 - r/h); 0/0 = 0.
  static FourierSpace::Vec evaluate(const FourierSpace::Vec& u, const std::vector<FourierSpace::Vec>& anchors,
                                    const std::vector<FourierSpace::Vec>& values, double h);
  FourierSpace::Vec operator()(const FourierSpace::Vec& u) const;

  const std::vector<FourierSpace::Vec>& anchors() const { return anchors_; }
  const std::vector<FourierSpace::Vec>& values() const { return values_; }
  double h() const { return h_; }
  int n() const { return n_; }

 private:
  const FourierSpace& space_;
  int n_;
  double h_;
  std::vector<FourierSpace::Vec> anchors_;
  std::vector<FourierSpace::Vec> values_;
};

struct LatticeResult {
  int n = 0;
  double m = 0.0;
  double h = 0.0;
  std::size_t anchors = 0;
  std::size_t samples = 0;
  double sup_error = 0.0;            // max ||T(u) - E(P_n u)||
  double sup_tail = 0.0;             // max ||T(u) - P_n T P_n u||
  double holder_term = 0.0;          // c h^alpha
  double worst_margin = 0.0;         // min over samples of (pointwise bound - error)
  bool bound_holds = false;          // pointwise bound held on every sample
  double max_nearest_anchor = 0.0;   // max over samples of min_a ||P_n u - a||
  double equivariance_residual = 0.0;
};

/// Samples u uniformly from the ball ||u|| <= M and checks the proof's bound
/// ||T(u) - E(P_n u)|| <= ||T(u) - P_n T P_n u|| + c h^alpha at every sample.
LatticeResult lattice_check(const FourierSpace& space, const NonlinearOperator& t, int n, double m, double h,
                      std::size_t samples, std::uint64_t seed);

struct LabConfig {
  int n_max = 24;
  std::vector<int> ns{1, 2, 4, 8, 12, 16, 20, 24};
  int lattice_n = 1;
  double lattice_m = 1.0;
  double lattice_h = 0.25;
  std::size_t lattice_samples = 500;
  std::uint64_t seed = 0;
};

LabConfig parse_lab_config(const nlohmann::json& j);
void to_json(nlohmann::json& j, const LabConfig& c);

struct OperatorLabReport {
  struct LinearCase {
    std::string kind;
    std::vector<FixedInputRow> fixed_input;
    std::vector<TruncationRow> truncation;
    bool fixed_input_matches = false;    // error equals residual singular value to 1e-10
    bool fixed_input_monotone = false;
    bool truncation_expected = false;  // compact: nonincreasing, < 1e-3 at n_max; control: stalls at 1
  };
  std::vector<LinearCase> linear;
  std::vector<LatticeResult> lattice;
  double max_equivariance_residual = 0.0;
  bool all_passed = false;
};

void to_json(nlohmann::json& j, const OperatorLabReport& r);
OperatorLabReport run_operator_lab(const LabConfig& cfg);
std::string lab_csv(const OperatorLabReport& r, const std::string& config_hash, std::uint64_t seed,
                    const std::string& git);

// ---- trained-model measurements ----

enum class DeviationNorm { l1, l2 };

struct DeviationReport {
  double value = 0.0;      // mean over tasks
  double std_error = 0.0;
  std::size_t tasks = 0;
  std::size_t points = 0;    // points used
  std::size_t excluded = 0;  // points with |mu_equiv| < 1e-6
  double median_point = 0.0;  // median per-point relative difference
  double norm_ratio = 0.0;    // mean over tasks of |mu_equiv - mu_approx|_p / |mu_equiv|_p
};

/// Mean over tasks of the per-point (L1) or root-mean-square (L2) relative
/// difference between the bank-off and bank-on predictive means.
DeviationReport equivariance_deviation(const Model& model, const std::vector<Task>& tasks, DeviationNorm norm);

struct EpsilonReport {
  double epsilon_hat = 0.0;   // max RMSE between bank-on and bank-off means
  double max_residual = 0.0;  // max RMSE of shift commutation for the full model
  double strict_residual = 0.0;  // same for the bank-off path
  std::size_t tasks = 0;
  std::size_t shifts = 0;
  bool bound_holds = false;   // max_residual <= 2 epsilon_hat + 1e-6
};

/// Both epsilon_hat and the residual range over every task and its shifted
/// copies, each scored on its own target range sampled at grid_points.
EpsilonReport epsilon_equivariance_check(const Model& model, const std::vector<Task>& tasks,
                                         const std::vector<double>& shifts, std::size_t grid_points = 64);

}  // namespace aenp
