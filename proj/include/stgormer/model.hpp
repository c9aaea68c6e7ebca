#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "stgormer/attention.hpp"
#include "stgormer/config.hpp"
#include "stgormer/data.hpp"
#include "stgormer/encoding.hpp"
#include "stgormer/graph.hpp"
#include "stgormer/moe.hpp"
#include "stgormer/params.hpp"

namespace stg {

struct LayerNormParams {
  ad::Var gamma, beta;
};

/// One transformer block: attention along `axis`, then the MoE (or plain FNN)
/// feed-forward, each wrapped as layer_norm(x + sublayer(x)).
struct Block {
  Axis axis = Axis::Spatial;
  AttentionParams attention;
  LayerNormParams norm1, norm2;
  Router router;                  // use_moe
  std::vector<ExpertFnn> experts;  // use_moe
  ExpertFnn ffn;                   // !use_moe
};

struct ForwardOptions {
  bool training = false;            // enables dropout
  std::mt19937_64* rng = nullptr;   // dropout masks; required when training with dropout > 0
  std::vector<char>* trace = nullptr;  // receives the axis letter of every block visited
};

struct LossParts {
  ad::Var total;
  double mae = 0;
  double lb = 0;
};

class StgormerModel {
 public:
  /// Throws ConfigError for an invalid config.
  StgormerModel(StgormerConfig config, SpatioTemporalGraph graph);

  StgormerModel(const StgormerModel&) = delete;
  StgormerModel& operator=(const StgormerModel&) = delete;
  StgormerModel(StgormerModel&&) = default;
  StgormerModel& operator=(StgormerModel&&) = default;

  /// X [T_in, N, C] with timestamps [T_in, k], or batched [B, T_in, N, C] / [B, T_in, k].
  /// Returns [T_out, N, C] (or [B, T_out, N, C]). Gate statistics are accumulated
  /// into moe_states(); call reset_moe_states() before each step.
  ad::Var forward(const NdArray& x, const NdArray& timestamps, const ForwardOptions& opts = {});

  /// Mean absolute error plus alpha times the layer-averaged load-balancing loss.
  LossParts loss(const ad::Var& y_hat, const NdArray& y) const;
  ad::Var load_balance() const;

  /// Raw-scale window in, raw-scale forecast out. Throws std::logic_error without a normalizer.
  NdArray predict(const NdArray& window, const NdArray& timestamps);

  const StgormerConfig& config() const noexcept { return config_; }
  const SpatioTemporalGraph& graph() const noexcept { return graph_; }
  const SpdMatrix& spd() const noexcept { return spd_; }
  const Degrees& node_degrees() const noexcept { return degrees_; }
  ParameterStore& parameters() noexcept { return store_; }
  const ParameterStore& parameters() const noexcept { return store_; }
  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  const SpdBiasTable& spd_table() const noexcept { return spd_table_; }
  const DegreeEmbeddingTables& degree_tables() const noexcept { return degree_tables_; }

  std::vector<MoEState>& moe_states() noexcept { return moe_states_; }
  const std::vector<MoEState>& moe_states() const noexcept { return moe_states_; }
  void reset_moe_states();

  const std::optional<Normalizer>& normalizer() const noexcept { return normalizer_; }
  void set_normalizer(Normalizer n) { normalizer_ = std::move(n); }

  /// The realised [N, N] attention bias (zeros when use_sa_bias is off).
  NdArray realized_spd_bias() const;

 private:
  ad::Var dropout(const ad::Var& x, const ForwardOptions& opts) const;

  StgormerConfig config_;
  SpatioTemporalGraph graph_;
  SpdMatrix spd_;
  Degrees degrees_;
  ParameterStore store_;
  std::vector<Time2VecParams> time2vec_;
  DegreeEmbeddingTables degree_tables_;
  FusionLayer fusion_;
  SpdBiasTable spd_table_;
  std::vector<Block> blocks_;
  ad::Var head_weight_, head_bias_;
  std::vector<MoEState> moe_states_;
  std::optional<Normalizer> normalizer_;
};

}  // namespace stg
