#include "stgormer/moe.hpp"

#include <stdexcept>

#include "stgormer/ops.hpp"

namespace stg {

ad::Var expert_forward(const ad::Var& x, const ExpertFnn& e) {
  return ad::linear(ad::relu(ad::linear(x, e.w1, e.b1)), e.w2, e.b2);
}

void MoEState::reset() {
  tokens_ = 0;
  accumulated_ = ad::Var();
}

void MoEState::accumulate(const ad::Var& weights) {
  if (weights.value().rank() == 0 || weights.shape().back() != experts_)
    throw ShapeError("gate weights " + shape_str(weights.shape()) + " do not match " + std::to_string(experts_) +
                     " experts");
  ad::Var s = ad::sum_leading(weights);
  accumulated_ = accumulated_ ? ad::add(accumulated_, s) : s;
  tokens_ += weights.value().size() / experts_;
}

std::vector<double> MoEState::fractions() const {
  if (empty()) throw std::logic_error("empty state: no gate statistics accumulated");
  std::vector<double> f(experts_);
  for (std::size_t i = 0; i < experts_; ++i)
    f[i] = accumulated_.value()[i] / static_cast<double>(tokens_);
  return f;
}

ad::Var gate(const ad::Var& h, const Router& router) {
  if (router.weights.empty() || router.weights.size() != router.biases.size())
    throw std::invalid_argument("router has no layers");
  ad::Var x = h;
  for (std::size_t i = 0; i < router.weights.size(); ++i) {
    x = ad::linear(x, router.weights[i], router.biases[i]);
    if (i + 1 < router.weights.size()) x = ad::relu(x);
  }
  return ad::softmax(x, x.value().rank() - 1);
}

ad::Var moe_forward(const ad::Var& h, const std::vector<ExpertFnn>& experts, const Router& router, MoEState* state) {
  if (experts.empty()) throw std::invalid_argument("MoE layer without experts");
  if (router.experts() != experts.size())
    throw std::invalid_argument("router width " + std::to_string(router.experts()) + " does not match " +
                                std::to_string(experts.size()) + " experts");
  ad::Var weights = gate(h, router);
  if (state) state->accumulate(weights);
  ad::Var out;
  for (std::size_t i = 0; i < experts.size(); ++i) {
    ad::Var term = ad::mul(ad::slice_last(weights, i, 1), expert_forward(h, experts[i]));
    out = out ? ad::add(out, term) : term;
  }
  return out;
}

ad::Var load_balance_loss(const MoEState& state) {
  if (state.empty()) throw std::logic_error("empty state: no gate statistics accumulated");
  ad::Var f = ad::scale(state.accumulated(), 1.0 / static_cast<double>(state.tokens()));
  return ad::mean(ad::square(f));
}

}  // namespace stg
