#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ngan {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Propagates this node's grad into its parents' grads. Null for leaves.
  std::function<void(Node&)> backward_fn;

  std::vector<double>& ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense double-precision array taking part in a reverse-mode autodiff graph.
///
/// Tensor is a cheap handle: copies share the underlying storage. Leaves
/// (parameters, inputs) accumulate gradients across backward() calls; callers
/// reset them with zero_grad(). Layout is row-major with the last extent
/// fastest, so a (B, C, D, H, W) activation stores W contiguously.
class Tensor {
 public:
  Tensor();
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  int dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->values.size(); }

  std::span<double> values() { return node_->values; }
  std::span<const double> values() const { return node_->values; }
  /// Gradient storage; allocated (zero) on first access.
  std::span<double> grad() { return node_->ensure_grad(); }
  std::span<const double> grad() const { return node_->ensure_grad(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  void zero_grad();

  /// Value of a one-element tensor.
  double item() const;

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate; the
  /// interior of the graph is reset first so repeated calls are additive.
  void backward() const;

  /// New leaf sharing nothing with the graph (values copied).
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  // Engine-internal: build an op result recorded on the tape.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::vector<Tensor> parents,
                            std::function<void(detail::Node&)> backward_fn);
  detail::Node& node() const { return *node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

}  // namespace ngan
