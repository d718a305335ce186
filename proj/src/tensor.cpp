#include "rmtbvqa/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "rmtbvqa/errors.hpp"

namespace rmtbvqa {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, Real value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<Real>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<Real> data, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
  }
  if (data.size() != shape_numel(shape)) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  for (Real v : data) {
    if (!std::isfinite(v)) throw NumericError("non-finite value in tensor data");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<Real> data,
                      bool requires_grad) {
  return from({rows, cols}, std::move(data), requires_grad);
}

Tensor Tensor::scalar(Real value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->value.size(); }

std::size_t Tensor::rows() const {
  if (ndim() != 2) throw ShapeError("rows() on non-matrix " + shape_str(shape()));
  return shape()[0];
}

std::size_t Tensor::cols() const {
  if (ndim() != 2) throw ShapeError("cols() on non-matrix " + shape_str(shape()));
  return shape()[1];
}

std::span<const Real> Tensor::data() const { return node_->value; }

std::span<Real> Tensor::mutable_data() {
  if (!is_leaf()) throw Error("only leaf tensors may be mutated");
  return node_->value;
}

std::vector<Real> Tensor::to_vector() const { return node_->value; }

Real Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

Real Tensor::at(std::size_t r, std::size_t c) const {
  return node_->value[r * cols() + c];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::is_leaf() const { return node_->parents.empty() && !node_->backward; }

std::span<const Real> Tensor::grad() const {
  return node_->grad_buffer();
}

void Tensor::zero_grad() { node_->grad.clear(); }

void Tensor::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got " + shape_str(shape()));
  }
  // Iterative post-order DFS; recurrent graphs get deep.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->accumulate(0, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  // Interior grads are scratch; keep only leaf grads.
  for (detail::Node* n : order) {
    if (n->backward) n->grad.clear();
  }
}

Tensor Tensor::detach() const {
  return from(shape(), to_vector(), false);
}

namespace detail {

Tensor make_result(const char* op, Shape shape, std::vector<Real> value,
                   std::vector<Tensor> parents, std::function<void(Node&)> backward) {
  for (Real v : value) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

}  // namespace detail

}  // namespace rmtbvqa
