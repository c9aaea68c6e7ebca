#include "stgormer/adam.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stg {

AdamState::AdamState(const ParameterStore& store, AdamOptions options) : options_(options), lr_(options.learning_rate) {
  for (const auto& p : store.entries()) {
    m_.emplace_back(p.var.shape(), 0.0);
    v_.emplace_back(p.var.shape(), 0.0);
  }
}

void AdamState::end_epoch(int epoch) {
  if (options_.decay_every_epochs > 0 && epoch > 0 && epoch % options_.decay_every_epochs == 0)
    lr_ = std::max(lr_ * options_.decay_factor, std::min(options_.lr_floor, lr_));
}

void adam_step(ParameterStore& store, AdamState& state) {
  if (!store.has_gradients()) throw std::logic_error("adam_step: gradients missing (call backward first)");
  if (state.m_.size() != store.size()) throw std::logic_error("adam_step: optimizer state does not match store");
  const auto& o = state.options_;
  ++state.step_;
  const double t = static_cast<double>(state.step_);
  // Folded bias correction: lr_t = lr * sqrt(1 - b2^t) / (1 - b1^t).
  const double step_size = state.lr_ * std::sqrt(1.0 - std::pow(o.beta2, t)) / (1.0 - std::pow(o.beta1, t));
  for (std::size_t k = 0; k < store.size(); ++k) {
    NdArray& p = store.value(k);
    const NdArray& g = store.entries()[k].grad;
    NdArray& m = state.m_[k];
    NdArray& v = state.v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
      p[i] -= step_size * m[i] / (std::sqrt(v[i]) + o.epsilon);
    }
  }
  store.consume_gradients();
}

}  // namespace stg
