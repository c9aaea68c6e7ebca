#include "stgormer/encoding.hpp"

#include <algorithm>
#include <cmath>

#include "stgormer/ops.hpp"

namespace stg {

ad::Var time2vec(const ad::Var& t, const Time2VecParams& params) {
  const std::size_t dt = params.w.value().size();
  if (dt == 0 || params.w.shape() != Shape{dt} || params.b.shape() != Shape{dt})
    throw ShapeError("time2vec: w and b must be vectors of equal positive length");
  Shape col = t.shape();
  col.push_back(1);
  ad::Var z = ad::add(ad::mul(ad::reshape(t, col), params.w), params.b);
  if (dt == 1) return z;
  return ad::concat_last({ad::slice_last(z, 0, 1), ad::sin(ad::slice_last(z, 1, dt - 1))});
}

NdArray time2vec(double t, const NdArray& w, const NdArray& b) {
  ad::NoGradGuard guard;
  return time2vec(ad::constant(NdArray::scalar(t)), Time2VecParams{ad::constant(w), ad::constant(b)}).value();
}

ad::Var temporal_input_encoding(const NdArray& timestamps, const std::vector<Time2VecParams>& params) {
  if (timestamps.rank() < 2) throw ShapeError("timestamps must be [..., T, k]");
  const std::size_t k = timestamps.shape().back();
  if (k != params.size())
    throw ShapeError("timestamps carry " + std::to_string(k) + " features but " + std::to_string(params.size()) +
                     " encoders are configured");
  Shape lead = timestamps.shape();
  lead.pop_back();
  const std::size_t rows = shape_numel(lead);
  std::vector<ad::Var> parts;
  for (std::size_t f = 0; f < k; ++f) {
    NdArray column(lead);
    for (std::size_t r = 0; r < rows; ++r) column[r] = timestamps[r * k + f];
    parts.push_back(time2vec(ad::constant(std::move(column)), params[f]));
  }
  return parts.size() == 1 ? parts[0] : ad::concat_last(parts);
}

std::size_t degree_row(int degree, int max_degree) {
  return static_cast<std::size_t>(std::min(degree, max_degree + 1));
}

ad::Var spatial_input_encoding(const Degrees& deg, const DegreeEmbeddingTables& tables) {
  const std::size_t n = deg.indegree.size();
  std::vector<std::size_t> in_rows(n), out_rows(n);
  for (std::size_t v = 0; v < n; ++v) {
    in_rows[v] = degree_row(deg.indegree[v], tables.max_degree);
    out_rows[v] = degree_row(deg.outdegree[v], tables.max_degree);
  }
  return ad::add(ad::gather(tables.z_minus, in_rows, Shape{n}), ad::gather(tables.z_plus, out_rows, Shape{n}));
}

ad::Var spatial_input_encoding(const SpatioTemporalGraph& g, const DegreeEmbeddingTables& tables) {
  return spatial_input_encoding(degrees(g), tables);
}

ad::Var fuse_inputs(const ad::Var& x, const ad::Var& t_enc, const ad::Var& s_enc, const FusionLayer& layer) {
  const bool batched = x.value().rank() == 4;
  if (!batched && x.value().rank() != 3) throw ShapeError("fuse_inputs: X must be [T, N, C] or [B, T, N, C]");
  ad::Var xb = batched ? x : ad::reshape(x, Shape{1, x.shape()[0], x.shape()[1], x.shape()[2]});
  const std::size_t B = xb.shape()[0], T = xb.shape()[1], N = xb.shape()[2];
  std::vector<ad::Var> parts{xb};
  if (t_enc) {
    const auto& s = t_enc.shape();
    ad::Var t4;
    if (s.size() == 2 && s[0] == T)
      t4 = ad::reshape(t_enc, Shape{1, T, 1, s[1]});
    else if (s.size() == 3 && s[0] == B && s[1] == T)
      t4 = ad::reshape(t_enc, Shape{B, T, 1, s[2]});
    else
      throw ShapeError("fuse_inputs: temporal encoding " + shape_str(s) + " does not match X " + shape_str(xb.shape()));
    parts.push_back(ad::expand(t4, Shape{B, T, N, t4.shape()[3]}));
  }
  if (s_enc) {
    const auto& s = s_enc.shape();
    if (s.size() != 2 || s[0] != N)
      throw ShapeError("fuse_inputs: spatial encoding " + shape_str(s) + " does not match X " + shape_str(xb.shape()));
    parts.push_back(ad::expand(s_enc, Shape{B, T, N, s[1]}));
  }
  ad::Var joined = parts.size() == 1 ? xb : ad::concat_last(parts);
  if (layer.weight.shape().size() != 2 || joined.shape().back() != layer.weight.shape()[0])
    throw ShapeError("fuse_inputs: concatenated width " + std::to_string(joined.shape().back()) +
                     " does not match projection " + shape_str(layer.weight.shape()));
  ad::Var h = ad::linear(joined, layer.weight, layer.bias);
  if (!batched) h = ad::reshape(h, Shape{T, N, h.shape()[3]});
  return h;
}

}  // namespace stg
