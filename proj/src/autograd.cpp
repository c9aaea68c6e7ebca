#include "stgormer/autograd.hpp"

#include <algorithm>
#include <unordered_set>

namespace stg::ad {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

NdArray& Node::grad_buffer() {
  if (grad.shape() != value.shape() || grad.size() != value.size()) grad = NdArray(value.shape(), 0.0);
  return grad;
}

void Node::accumulate(const NdArray& g) {
  if (g.shape() != value.shape())
    throw ShapeError(std::string("gradient shape ") + shape_str(g.shape()) + " does not match value " +
                     shape_str(value.shape()) + " at " + op);
  auto& buf = grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

NdArray Var::grad() const {
  if (node_->grad.shape() == node_->value.shape() && node_->grad.size() == node_->value.size()) return node_->grad;
  return NdArray(node_->value.shape(), 0.0);
}

Var constant(NdArray value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = "constant";
  return Var(std::move(n));
}

Var leaf(NdArray value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

Var make_result(NdArray value, std::vector<Var> parents, const char* op, std::function<void(Node&)> backward,
                bool differentiable) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  n->differentiable = differentiable;
  bool needs = false;
  if (g_grad_enabled)
    for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward);
  }
  return Var(std::move(n));
}

void backward(const Var& loss) {
  if (!loss) throw GradientError("backward on empty variable");
  if (loss.value().size() != 1) throw GradientError("loss is not scalar: shape " + shape_str(loss.shape()));

  // Iterative post-order DFS gives a topological order (inputs before outputs).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  Node* root = loss.node().get();
  if (root->requires_grad) {
    stack.emplace_back(root, 0);
    visited.insert(root);
  }
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->differentiable)
      throw GradientError(std::string("operation '") + n->op + "' is not differentiable");
    n->grad = NdArray(n->value.shape(), 0.0);
  }
  if (order.empty()) return;
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace stg::ad
