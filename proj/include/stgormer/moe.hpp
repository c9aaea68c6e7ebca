#pragma once

#include <string>
#include <vector>

#include "stgormer/autograd.hpp"

namespace stg {

/// Position-wise feed-forward expert: D -> m*D -> D with ReLU in between.
struct ExpertFnn {
  ad::Var w1, b1, w2, b2;
};

ad::Var expert_forward(const ad::Var& x, const ExpertFnn& expert);

enum class Axis { Spatial, Temporal };

inline char axis_letter(Axis a) { return a == Axis::Spatial ? 'S' : 'T'; }

/// Gating MLP ending in E logits. One linear layer by default; deeper
/// routers use ReLU between hidden layers.
struct Router {
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;
  Axis axis = Axis::Spatial;

  std::size_t experts() const { return biases.empty() ? 0 : biases.back().value().size(); }
};

/// Gate probabilities of one MoE layer summed over every token seen since the last reset.
class MoEState {
 public:
  MoEState() = default;
  explicit MoEState(std::size_t experts) : experts_(experts) {}

  void reset();
  /// weights [..., E]; every leading position counts as one token.
  void accumulate(const ad::Var& weights);

  std::size_t experts() const noexcept { return experts_; }
  std::size_t tokens() const noexcept { return tokens_; }
  bool empty() const noexcept { return tokens_ == 0; }
  const ad::Var& accumulated() const noexcept { return accumulated_; }
  /// Mean gate probability per expert. Throws std::logic_error on an empty state.
  std::vector<double> fractions() const;

 private:
  std::size_t experts_ = 0;
  std::size_t tokens_ = 0;
  ad::Var accumulated_;
};

/// softmax(MLP(h)) over the last axis: [..., D] -> [..., E].
ad::Var gate(const ad::Var& h, const Router& router);

/// Dense soft mixture: sum_i gate_i(h) * expert_i(h). Gate statistics go into `state` when given.
ad::Var moe_forward(const ad::Var& h, const std::vector<ExpertFnn>& experts, const Router& router,
                    MoEState* state = nullptr);

/// (1/E) * sum_i f_i^2, differentiable through the gates.
ad::Var load_balance_loss(const MoEState& state);

}  // namespace stg
