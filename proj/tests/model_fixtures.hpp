#pragma once

#include <numeric>
#include <random>

#include "oracles.hpp"
#include "stgormer/model.hpp"

namespace fixture {

inline stg::StgormerConfig small_config() {
  stg::StgormerConfig c;
  c.hidden_dim = 8;
  c.heads = 2;
  c.block_order = "ST";
  c.experts = 3;
  c.expert_expansion = 2;
  c.time_dim = 3;
  c.degree_dim = 4;
  c.max_degree = 3;
  c.max_spd = 3;
  c.t_in = 8;
  c.t_out = 1;
  c.seed = 5;
  return c;
}

inline stg::SpatioTemporalGraph small_graph() {
  return stg::SpatioTemporalGraph(6, {{0, 1}, {1, 2}, {2, 0}, {2, 3}, {3, 4}, {0, 4}}, true);
}

/// Random flows [T, N, C] and timestamps [T, k] in [0, 1).
inline std::pair<stg::NdArray, stg::NdArray> inputs(const stg::StgormerConfig& c, std::size_t n, std::uint64_t seed) {
  return {oracle::random_array(stg::Shape{c.t_in, n, c.channels}, seed, -2, 2),
          oracle::random_array(stg::Shape{c.t_in, c.time_features}, seed + 1, 0, 1)};
}

inline void set_param(stg::StgormerModel& m, const std::string& path, const stg::NdArray& v) {
  auto& p = m.parameters();
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p.entries()[i].path == path) {
      p.value(i) = v;
      return;
    }
  throw std::out_of_range(path);
}

}  // namespace fixture
