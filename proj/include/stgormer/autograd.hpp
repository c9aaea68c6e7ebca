#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "stgormer/ndarray.hpp"

namespace stg::ad {

/// One value in the recorded computation. Interior nodes keep their inputs
/// alive through `parents`; leaves (parameters, constants) have none.
struct Node {
  NdArray value;
  NdArray grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";
  bool requires_grad = false;
  bool differentiable = true;

  /// Zero-initialised on first use.
  NdArray& grad_buffer();
  void accumulate(const NdArray& g);
};

class GradientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Handle to a Node. Cheap to copy; copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const NdArray& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  /// Gradient left by the last backward(); zeros if none reached this node.
  NdArray grad() const;
  const std::shared_ptr<Node>& node() const noexcept { return node_; }
  explicit operator bool() const noexcept { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(NdArray value);
/// Trainable leaf.
Var leaf(NdArray value, bool requires_grad = true);

/// Records a result node. Parents and the backward closure are dropped when no
/// parent requires a gradient or recording is disabled.
Var make_result(NdArray value, std::vector<Var> parents, const char* op, std::function<void(Node&)> backward,
                bool differentiable = true);

/// Reverse sweep from a scalar. Clears gradients of every reachable node first.
/// Throws GradientError when the loss is not scalar or a non-differentiable
/// operation sits between the loss and a node that requires a gradient.
void backward(const Var& loss);

bool grad_enabled() noexcept;

/// Disables recording for its lifetime (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace stg::ad
