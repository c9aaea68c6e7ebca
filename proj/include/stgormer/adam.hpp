#pragma once

#include <vector>

#include "stgormer/params.hpp"

namespace stg {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Step decay applied at epoch boundaries.
  double decay_factor = 0.5;
  int decay_every_epochs = 25;
  double lr_floor = 1e-5;
};

class AdamState {
 public:
  AdamState(const ParameterStore& store, AdamOptions options);

  long step() const noexcept { return step_; }
  double learning_rate() const noexcept { return lr_; }
  const AdamOptions& options() const noexcept { return options_; }
  const NdArray& first_moment(std::size_t i) const { return m_.at(i); }
  const NdArray& second_moment(std::size_t i) const { return v_.at(i); }

  /// Call after epoch `epoch` (1-based) completes; decays lr on schedule.
  void end_epoch(int epoch);

 private:
  friend void adam_step(ParameterStore& store, AdamState& state);

  AdamOptions options_;
  std::vector<NdArray> m_, v_;
  long step_ = 0;
  double lr_;
};

/// One bias-corrected Adam update using the store's gradient slots.
/// Throws std::logic_error when no gradients have been computed since the last step.
void adam_step(ParameterStore& store, AdamState& state);

}  // namespace stg
