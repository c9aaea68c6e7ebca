#pragma once

#include <vector>

#include "stgormer/autograd.hpp"
#include "stgormer/graph.hpp"

namespace stg {

/// Learnable slope/frequency `w` and offset/phase `b` for one temporal feature.
/// Dimension 0 is linear, the rest go through sine.
struct Time2VecParams {
  ad::Var w;
  ad::Var b;
};

/// t: any shape S of scalar features -> S + (d_t).
ad::Var time2vec(const ad::Var& t, const Time2VecParams& params);
/// Scalar convenience.
NdArray time2vec(double t, const NdArray& w, const NdArray& b);

/// timestamps [..., T, k] -> [..., T, k * d_t], per-feature encodings concatenated.
ad::Var temporal_input_encoding(const NdArray& timestamps, const std::vector<Time2VecParams>& params);

/// Indegree/outdegree lookup tables with max_degree + 2 rows each; the last
/// row collects every degree above max_degree.
struct DegreeEmbeddingTables {
  ad::Var z_minus;
  ad::Var z_plus;
  int max_degree = 0;
};

std::size_t degree_row(int degree, int max_degree);

/// [N, d]: row v = z_minus[indeg(v)] + z_plus[outdeg(v)] after clamping.
ad::Var spatial_input_encoding(const Degrees& deg, const DegreeEmbeddingTables& tables);
ad::Var spatial_input_encoding(const SpatioTemporalGraph& g, const DegreeEmbeddingTables& tables);

struct FusionLayer {
  ad::Var weight;  // [C + k*d_t + d, D], narrower when encodings are disabled
  ad::Var bias;    // [D]
};

/// X [B, T, N, C] (or [T, N, C]) joined with t_enc [B, T, k*d_t] broadcast over
/// nodes and s_enc [N, d] broadcast over time, then projected to D.
/// Pass an empty Var to leave an encoding out.
ad::Var fuse_inputs(const ad::Var& x, const ad::Var& t_enc, const ad::Var& s_enc, const FusionLayer& layer);

}  // namespace stg
