#include "stgormer/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace stg {

GradCheckReport finite_difference_check(const std::function<ad::Var()>& forward, ParameterStore& store, double step,
                                        std::size_t max_coordinates, std::uint64_t seed) {
  if (!(step > 0)) throw std::invalid_argument("finite_difference_check: step must be positive");
  ad::Var loss = forward();
  store.backward(loss);
  const double base = loss.value().item();
  {
    ad::NoGradGuard guard;
    const double again = forward().value().item();
    if (again != base) throw NondeterministicForward("forward is not deterministic: two evaluations disagree");
  }

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  const std::size_t total = store.num_scalars();
  if (total <= max_coordinates) {
    for (std::size_t k = 0; k < store.size(); ++k)
      for (std::size_t i = 0; i < store.entries()[k].var.value().size(); ++i) coords.emplace_back(k, i);
  } else {
    std::mt19937_64 rng(seed);
    std::set<std::pair<std::size_t, std::size_t>> chosen;
    for (std::size_t k = 0; k < store.size(); ++k) {
      std::uniform_int_distribution<std::size_t> pick(0, store.entries()[k].var.value().size() - 1);
      chosen.emplace(k, pick(rng));
    }
    std::vector<std::pair<std::size_t, std::size_t>> flat;
    for (std::size_t k = 0; k < store.size(); ++k)
      for (std::size_t i = 0; i < store.entries()[k].var.value().size(); ++i) flat.emplace_back(k, i);
    std::shuffle(flat.begin(), flat.end(), rng);
    for (const auto& c : flat) {
      if (chosen.size() >= std::max(max_coordinates, store.size())) break;
      chosen.insert(c);
    }
    coords.assign(chosen.begin(), chosen.end());
  }

  GradCheckReport report;
  ad::NoGradGuard guard;
  for (const auto& [k, i] : coords) {
    NdArray& value = store.value(k);
    const double saved = value[i];
    value[i] = saved + step;
    const double plus = forward().value().item();
    value[i] = saved - step;
    const double minus = forward().value().item();
    value[i] = saved;
    const double numeric = (plus - minus) / (2.0 * step);
    const double analytic = store.entries()[k].grad[i];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic - numeric) / denom;
    ++report.coordinates_checked;
    if (rel > report.max_relative_error || report.coordinates_checked == 1) {
      report.max_relative_error = std::max(report.max_relative_error, rel);
      if (rel >= report.max_relative_error) {
        report.worst_path = store.entries()[k].path;
        report.worst_index = i;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace stg
