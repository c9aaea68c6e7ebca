#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "stgormer/params.hpp"

namespace stg {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_path;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

class NondeterministicForward : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Compares analytic gradients of `forward` against central differences
/// (f(p+h) - f(p-h)) / 2h. Relative error uses max(|analytic|, |numeric|, 1e-8)
/// as denominator. When the store holds more than `max_coordinates` scalars a
/// seeded subsample is drawn that still touches every parameter tensor.
GradCheckReport finite_difference_check(const std::function<ad::Var()>& forward, ParameterStore& store, double step,
                                        std::size_t max_coordinates = 200, std::uint64_t seed = 0);

}  // namespace stg
