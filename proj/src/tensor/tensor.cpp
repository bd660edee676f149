#include "aenp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "internal.hpp"

namespace aenp {

namespace {
thread_local bool g_grad_enabled = true;

void check_finite(const char* op, const std::vector<double>& data) {
  // v * 0 is NaN exactly when v is NaN or infinite; the sum vectorizes.
  double acc = 0.0;
  for (double v : data) acc += v * 0.0;
  if (acc != 0.0) throw NumericalError(std::string("non-finite value produced by ") + op);
}

// Reverse-postorder of the requires_grad subgraph below root.
std::vector<detail::Node*> topo_order(detail::Node* root) {
  std::vector<detail::Node*> order;
  std::unordered_map<detail::Node*, bool> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited[root] = true;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited[p]) {
        visited[p] = true;
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // parents precede children
}
}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace detail {

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

bool any_requires_grad(const std::vector<Tensor>& inputs) {
  for (const auto& t : inputs)
    if (t.requires_grad()) return true;
  return false;
}

std::shared_ptr<Node> make_result(const char* op, Shape shape, std::vector<double> data,
                                  const std::vector<std::shared_ptr<Node>>& parents,
                                  bool record) {
  if (numel(shape) != data.size()) {
    throw ShapeError(std::string(op) + ": shape " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  check_finite(op, data);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  if (record) {
    node->requires_grad = true;
    node->parents = parents;
  }
  return node;
}

}  // namespace detail

Tensor::Tensor() : node_(std::make_shared<detail::Node>()) {
  node_->shape = {0};
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  auto n = aenp::numel(shape);
  return from(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  return Tensor(detail::make_result("leaf", std::move(shape), std::move(values), {}, false));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  Shape s{values.size()};
  return from(std::move(s), std::move(values));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = from(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  t.node_->op = "param";
  return t;
}

std::size_t Tensor::size(std::size_t axis) const {
  if (axis >= dim()) throw ShapeError("axis " + std::to_string(axis) + " out of range");
  return node_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  return Tensor(detail::make_result("detach", node_->shape, node_->data, {}, false));
}

void Tensor::backward() const {
  if (numel() != 1) throw ShapeError("backward() requires a scalar root");
  if (!node_->requires_grad) return;
  auto order = topo_order(node_.get());
  for (auto* n : order) {
    if (n->backward) n->grad.assign(n->data.size(), 0.0);
  }
  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward) {
      for (auto& p : n->parents)
        if (p->requires_grad) p->ensure_grad();
      n->backward(*n);
    }
  }
}

Tape record_tape(const Tensor& root) {
  Tape tape;
  if (!root.requires_grad()) {
    tape.entries.push_back({root.op_name(), root.shape(), {}});
    return tape;
  }
  auto order = topo_order(root.node().get());
  std::unordered_map<detail::Node*, std::size_t> index;
  for (auto* n : order) {
    Tape::Entry e{n->op, n->shape, {}};
    for (auto& p : n->parents) {
      auto found = index.find(p.get());
      if (found != index.end()) e.parents.push_back(found->second);
    }
    index[n] = tape.entries.size();
    tape.entries.push_back(std::move(e));
  }
  return tape;
}

}  // namespace aenp
