#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace aenp {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a forward op produces NaN/Inf from finite inputs, or when a
// factorization cannot be completed.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient flows in
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major float64 array participating in reverse-mode differentiation.
///
/// A Tensor is a cheap handle; copies share storage. Values produced by ops
/// are never mutated afterwards, so a graph can be inspected and
/// differentiated at any time. Parameters are leaves with requires_grad set;
/// their gradients accumulate across backward() calls until zero_grad().
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor parameter(Shape shape, std::vector<double> values);

  const Shape& shape() const { return node_->shape; }
  std::size_t dim() const { return node_->shape.size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  std::vector<double> to_vector() const { return node_->data; }
  double item() const;
  double operator[](std::size_t flat_index) const { return node_->data[flat_index]; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Empty span when no gradient has reached this tensor.
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad();

  /// Runs reverse-mode differentiation from this scalar.
  void backward() const;

  /// Same values, cut from the graph.
  Tensor detach() const;

  // Optimizers and checkpoint loading write parameters in place.
  std::span<double> mutable_data() { return node_->data; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }

  const char* op_name() const { return node_->op; }
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  // Internal: ops construct results through these.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Topologically ordered record of the ops reachable from a root.
struct Tape {
  struct Entry {
    std::string op;
    Shape shape;
    std::vector<std::size_t> parents;  // indices into entries, all < own index
  };
  std::vector<Entry> entries;
};

Tape record_tape(const Tensor& root);

// ---- elementwise (numpy broadcasting for binary ops) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);

Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);

/// num / (den + eps); zero wherever num is zero and den is zero.
Tensor guarded_div(const Tensor& num, const Tensor& den, double eps = 1e-8);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }

// ---- reductions ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis, bool keepdim = false);
Tensor mean(const Tensor& a, std::size_t axis, bool keepdim = false);

// ---- shape ----
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);  // swaps the last two axes
Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);

// ---- linear algebra / nn primitives ----

/// [m,k]x[k,n] or batched [b,m,k]x[b,k,n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// x [N, in] times weight [in, out] plus bias [out], as one op.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// Softmax over the last axis.
Tensor softmax(const Tensor& a);
/// Normalizes the last axis to zero mean and unit variance (no affine part).
Tensor layer_norm(const Tensor& a, double eps = 1e-9);

/// Stride-1 cross-correlation with zero "same" padding.
/// signal [C_in, L], kernel [C_out, C_in, K] with K odd -> [C_out, L].
Tensor conv1d(const Tensor& signal, const Tensor& kernel);

/// Reflect-ties a half kernel [C_out, C_in, H] into [C_out, C_in, 2H-1] with
/// k[c-j] == k[c+j]; half entry 0 is the centre tap, so [a, b] -> [b, a, b].
Tensor symmetric_kernel(const Tensor& half_kernel);

/// conv1d with the reflection-tied kernel built from half_kernel.
Tensor symmetric_conv1d(const Tensor& signal, const Tensor& half_kernel);

struct CholeskyResult {
  Tensor lower;
  double jitter = 0.0;  // absolute amount added to the diagonal
};

/// Lower Cholesky factor of a symmetric matrix. Tries no jitter, then
/// 1e-8, 1e-6, 1e-4 times the mean diagonal; throws NumericalError listing
/// every attempted level when all fail. Not differentiable.
CholeskyResult cholesky(const Tensor& a);

/// Same ladder on a raw row-major buffer (overwritten with L). Returns the
/// jitter that succeeded.
double cholesky_inplace(std::vector<double>& a, std::size_t n);

}  // namespace aenp
