#include "stgormer/attention.hpp"

#include <cmath>

#include "stgormer/ops.hpp"

namespace stg {

ad::Var scaled_dot_attention(const ad::Var& h, const AttentionParams& p, const ad::Var& bias, NdArray* weights_out) {
  if (h.value().rank() != 3) throw ShapeError("attention input must be [B, L, D], got " + shape_str(h.shape()));
  const std::size_t B = h.shape()[0], L = h.shape()[1], D = h.shape()[2];
  const std::size_t heads = p.heads;
  if (heads == 0 || D % heads != 0)
    throw ShapeError("hidden width " + std::to_string(D) + " not divisible by " + std::to_string(heads) + " heads");
  if (bias && bias.shape() != Shape{L, L})
    throw ShapeError("attention bias " + shape_str(bias.shape()) + " does not match sequence length " +
                     std::to_string(L));
  const std::size_t dh = D / heads;

  auto split_heads = [&](const ad::Var& x) {
    // [B, L, D] -> [B * heads, L, dh]
    return ad::reshape(ad::permute(ad::reshape(x, Shape{B, L, heads, dh}), {0, 2, 1, 3}), Shape{B * heads, L, dh});
  };
  ad::Var q = split_heads(ad::linear(h, p.wq, p.bq));
  ad::Var k = split_heads(ad::matmul_last(h, p.wk));
  ad::Var v = split_heads(ad::linear(h, p.wv, p.bv));

  ad::Var scores = ad::scale(ad::bmm(q, k, /*transpose_b=*/true), 1.0 / std::sqrt(static_cast<double>(dh)));
  if (bias) scores = ad::add(scores, bias);
  ad::Var weights = ad::softmax(scores, 2);
  if (weights_out) *weights_out = weights.value().reshaped(Shape{B, heads, L, L});

  ad::Var ctx = ad::bmm(weights, v);
  ctx = ad::reshape(ad::permute(ad::reshape(ctx, Shape{B, heads, L, dh}), {0, 2, 1, 3}), Shape{B, L, D});
  return ad::linear(ctx, p.wo, p.bo);
}

namespace {

ad::Var as_batched(const ad::Var& h) {
  if (h.value().rank() == 4) return h;
  if (h.value().rank() == 3) return ad::reshape(h, Shape{1, h.shape()[0], h.shape()[1], h.shape()[2]});
  throw ShapeError("expected [T, N, D] or [B, T, N, D], got " + shape_str(h.shape()));
}

}  // namespace

ad::Var temporal_attention(const ad::Var& h, const AttentionParams& params) {
  ad::Var x = as_batched(h);
  const std::size_t B = x.shape()[0], T = x.shape()[1], N = x.shape()[2], D = x.shape()[3];
  ad::Var seq = ad::reshape(ad::permute(x, {0, 2, 1, 3}), Shape{B * N, T, D});
  ad::Var out = ad::permute(ad::reshape(scaled_dot_attention(seq, params), Shape{B, N, T, D}), {0, 2, 1, 3});
  return h.value().rank() == 3 ? ad::reshape(out, h.shape()) : out;
}

ad::Var spatial_attention(const ad::Var& h, const AttentionParams& params, const ad::Var& bias) {
  ad::Var x = as_batched(h);
  const std::size_t B = x.shape()[0], T = x.shape()[1], N = x.shape()[2], D = x.shape()[3];
  ad::Var out = scaled_dot_attention(ad::reshape(x, Shape{B * T, N, D}), params, bias);
  return ad::reshape(out, h.shape());
}

std::size_t spd_bucket(int spd, int max_spd) {
  if (spd < 0) return static_cast<std::size_t>(max_spd) + 2;
  if (spd > max_spd) return static_cast<std::size_t>(max_spd) + 1;
  return static_cast<std::size_t>(spd);
}

ad::Var spd_bias(const SpdMatrix& spd, const SpdBiasTable& table) {
  const auto n = static_cast<std::size_t>(spd.size());
  if (table.table.shape() != Shape{static_cast<std::size_t>(table.max_spd) + 3})
    throw ShapeError("SPD bias table must have max_spd + 3 entries");
  std::vector<std::size_t> rows(n * n);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = spd_bucket(spd.values()[i], table.max_spd);
  return ad::gather(table.table, rows, Shape{n, n});
}

}  // namespace stg
