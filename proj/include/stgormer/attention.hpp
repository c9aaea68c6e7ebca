#pragma once

#include "stgormer/autograd.hpp"
#include "stgormer/graph.hpp"

namespace stg {

struct AttentionParams {
  ad::Var wq, bq;
  ad::Var wk;      // no key bias: it shifts every score in a row equally and softmax ignores it
  ad::Var wv, bv;
  ad::Var wo, bo;  // applied after the heads are concatenated
  std::size_t heads = 1;
};

/// Multi-head self-attention over the middle axis of H [B, L, D].
/// `bias` ([L, L], optional) is added to every head's scaled scores.
/// When `weights_out` is given it receives the attention weights [B, heads, L, L].
ad::Var scaled_dot_attention(const ad::Var& h, const AttentionParams& params, const ad::Var& bias = {},
                             NdArray* weights_out = nullptr);

/// H [B, T, N, D] or [T, N, D]: attends over time independently for every node.
ad::Var temporal_attention(const ad::Var& h, const AttentionParams& params);

/// H [B, T, N, D] or [T, N, D]: attends over nodes independently for every time step.
/// An empty `bias` means plain attention.
ad::Var spatial_attention(const ad::Var& h, const AttentionParams& params, const ad::Var& bias);

/// Learnable scalar per SPD bucket: 0..max_spd, then one overflow bucket and
/// one bucket for unreachable pairs.
struct SpdBiasTable {
  ad::Var table;  // [max_spd + 3]
  int max_spd = 0;
};

std::size_t spd_bucket(int spd, int max_spd);
/// [N, N] with bias[i][j] = table[bucket(spd[i][j])].
ad::Var spd_bias(const SpdMatrix& spd, const SpdBiasTable& table);

}  // namespace stg
