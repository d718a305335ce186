#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rmtbvqa {

// Scalar type of every tensor value and gradient.
using Real = double;

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  void accumulate(std::size_t i, Real g) {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    grad[i] += g;
  }
  std::vector<Real>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major array of Real with reverse-mode differentiation.
///
/// A Tensor is a cheap handle; copies share the underlying node. Values
/// produced by ops are immutable. Leaves created with requires_grad act as
/// trainable parameters and are the only tensors whose data may be mutated
/// in place (optimizer updates, finite-difference probes).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<Real> data,
                     bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<Real> data, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t rows() const;  // 2-D only
  std::size_t cols() const;  // 2-D only

  std::span<const Real> data() const;
  std::span<Real> mutable_data();  // leaves only
  std::vector<Real> to_vector() const;
  Real item() const;
  Real at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  bool is_leaf() const;
  std::span<const Real> grad() const;  // zeros if never accumulated
  void zero_grad();

  /// Runs reverse-mode accumulation from this scalar into every reachable
  /// node that requires grad.
  void backward() const;

  Tensor detach() const;

  detail::Node& node() const { return *node_; }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// True unless a NoGradGuard is alive on this thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

// Builds the result node of an op. Parents are recorded only when grad mode
// is on and at least one parent requires grad; the value is checked for
// NaN/Inf (NumericError naming `op`).
Tensor make_result(const char* op, Shape shape, std::vector<Real> value,
                   std::vector<Tensor> parents,
                   std::function<void(Node&)> backward);

}  // namespace detail

}  // namespace rmtbvqa
