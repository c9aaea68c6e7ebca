#include "stgormer/model.hpp"

#include <cmath>

#include "stgormer/ops.hpp"

namespace stg {

namespace {

std::string block_prefix(std::size_t i) { return "blocks." + std::to_string(i) + "."; }

}  // namespace

StgormerModel::StgormerModel(StgormerConfig config, SpatioTemporalGraph graph)
    : config_(std::move(config)), graph_(std::move(graph)) {
  if (auto problems = validate(config_); !problems.empty()) throw ConfigError(std::move(problems));
  spd_ = shortest_path_matrix(graph_);
  degrees_ = degrees(graph_);

  const auto& c = config_;
  const std::size_t D = c.hidden_dim;
  Initializer init(c.seed);
  const double two_pi = 6.283185307179586;

  // Time2Vec: linear term starts as the identity, periodic terms as daily-style harmonics.
  for (std::size_t f = 0; f < c.time_features; ++f) {
    NdArray w(Shape{c.time_dim});
    NdArray b = init.uniform(Shape{c.time_dim}, 0.0, two_pi);
    w[0] = 1.0;
    b[0] = 0.0;
    for (std::size_t i = 1; i < c.time_dim; ++i) w[i] = two_pi * static_cast<double>(i);
    const std::string base = "encoding.time2vec." + std::to_string(f) + ".";
    time2vec_.push_back({store_.add(base + "w", std::move(w)), store_.add(base + "b", std::move(b))});
  }

  const auto degree_rows = static_cast<std::size_t>(c.max_degree) + 2;
  degree_tables_.max_degree = c.max_degree;
  degree_tables_.z_minus = store_.add("encoding.degree.in", init.normal(Shape{degree_rows, c.degree_dim}, 0.02));
  degree_tables_.z_plus = store_.add("encoding.degree.out", init.normal(Shape{degree_rows, c.degree_dim}, 0.02));

  std::size_t fused = c.channels;
  if (c.use_t_in) fused += c.time_features * c.time_dim;
  if (c.use_s_in) fused += c.degree_dim;
  fusion_.weight = store_.add("encoding.fusion.weight", init.weight(fused, D));
  fusion_.bias = store_.add("encoding.fusion.bias", NdArray(Shape{D}, 0.0));

  spd_table_.max_spd = c.max_spd;
  spd_table_.table = store_.add("spd_bias.table", NdArray(Shape{static_cast<std::size_t>(c.max_spd) + 3}, 0.0));

  auto add_ffn = [&](const std::string& base) {
    const std::size_t hidden = c.expert_expansion * D;
    ExpertFnn e;
    e.w1 = store_.add(base + "w1", init.weight(D, hidden));
    e.b1 = store_.add(base + "b1", NdArray(Shape{hidden}, 0.0));
    e.w2 = store_.add(base + "w2", init.weight(hidden, D));
    e.b2 = store_.add(base + "b2", NdArray(Shape{D}, 0.0));
    return e;
  };

  for (std::size_t i = 0; i < c.block_order.size(); ++i) {
    const std::string p = block_prefix(i);
    Block b;
    b.axis = c.block_order[i] == 'S' ? Axis::Spatial : Axis::Temporal;
    auto& a = b.attention;
    a.heads = c.heads;
    a.wq = store_.add(p + "attention.wq", init.weight(D, D));
    a.bq = store_.add(p + "attention.bq", NdArray(Shape{D}, 0.0));
    a.wk = store_.add(p + "attention.wk", init.weight(D, D));
    a.wv = store_.add(p + "attention.wv", init.weight(D, D));
    a.bv = store_.add(p + "attention.bv", NdArray(Shape{D}, 0.0));
    a.wo = store_.add(p + "attention.wo", init.weight(D, D));
    a.bo = store_.add(p + "attention.bo", NdArray(Shape{D}, 0.0));
    b.norm1 = {store_.add(p + "norm1.gamma", NdArray(Shape{D}, 1.0)), store_.add(p + "norm1.beta", NdArray(Shape{D}, 0.0))};
    if (c.use_moe) {
      b.router.axis = b.axis;
      const std::string r = p + (b.axis == Axis::Spatial ? "router_spatial." : "router_temporal.");
      for (std::size_t l = 0; l < c.router_layers; ++l) {
        const std::size_t out = l + 1 == c.router_layers ? c.experts : D;
        b.router.weights.push_back(store_.add(r + "layer" + std::to_string(l) + ".weight", init.weight(D, out)));
        b.router.biases.push_back(store_.add(r + "layer" + std::to_string(l) + ".bias", NdArray(Shape{out}, 0.0)));
      }
      for (std::size_t e = 0; e < c.experts; ++e) b.experts.push_back(add_ffn(p + "experts." + std::to_string(e) + "."));
      moe_states_.emplace_back(c.experts);
    } else {
      b.ffn = add_ffn(p + "ffn.");
    }
    b.norm2 = {store_.add(p + "norm2.gamma", NdArray(Shape{D}, 1.0)), store_.add(p + "norm2.beta", NdArray(Shape{D}, 0.0))};
    blocks_.push_back(std::move(b));
  }

  head_weight_ = store_.add("head.weight", init.weight(c.t_in * D, c.t_out * c.channels));
  head_bias_ = store_.add("head.bias", NdArray(Shape{c.t_out * c.channels}, 0.0));
}

void StgormerModel::reset_moe_states() {
  for (auto& s : moe_states_) s.reset();
}

ad::Var StgormerModel::dropout(const ad::Var& x, const ForwardOptions& opts) const {
  if (!opts.training || config_.dropout <= 0) return x;
  if (!opts.rng) throw std::logic_error("dropout requires a random generator");
  const double keep = 1.0 - config_.dropout;
  std::bernoulli_distribution coin(keep);
  NdArray mask(x.shape());
  for (auto& m : mask.data()) m = coin(*opts.rng) ? 1.0 / keep : 0.0;
  return ad::mul(x, ad::constant(std::move(mask)));
}

ad::Var StgormerModel::forward(const NdArray& x, const NdArray& timestamps, const ForwardOptions& opts) {
  const auto& c = config_;
  const bool batched = x.rank() == 4;
  if (!batched && x.rank() != 3) throw ShapeError("forward: X must be [T_in, N, C] or [B, T_in, N, C]");
  NdArray xb = batched ? x : x.reshaped(Shape{1, x.dim(0), x.dim(1), x.dim(2)});
  const std::size_t B = xb.dim(0), N = static_cast<std::size_t>(graph_.num_nodes());
  if (xb.dim(1) != c.t_in || xb.dim(2) != N || xb.dim(3) != c.channels)
    throw ShapeError("forward: X " + shape_str(x.shape()) + " does not match (T_in=" + std::to_string(c.t_in) +
                     ", N=" + std::to_string(N) + ", C=" + std::to_string(c.channels) + ")");
  const Shape ts_expected = batched ? Shape{B, c.t_in, c.time_features} : Shape{c.t_in, c.time_features};
  if (timestamps.shape() != ts_expected)
    throw ShapeError("forward: timestamps " + shape_str(timestamps.shape()) + " expected " + shape_str(ts_expected));
  NdArray tsb = batched ? timestamps : timestamps.reshaped(Shape{1, c.t_in, c.time_features});

  ad::Var t_enc = c.use_t_in ? temporal_input_encoding(tsb, time2vec_) : ad::Var();
  ad::Var s_enc = c.use_s_in ? spatial_input_encoding(degrees_, degree_tables_) : ad::Var();
  ad::Var h = fuse_inputs(ad::constant(std::move(xb)), t_enc, s_enc, fusion_);
  ad::Var bias = c.use_sa_bias ? spd_bias(spd_, spd_table_) : ad::Var();

  std::size_t moe_index = 0;
  for (const auto& b : blocks_) {
    if (opts.trace) opts.trace->push_back(axis_letter(b.axis));
    ad::Var att = b.axis == Axis::Spatial ? spatial_attention(h, b.attention, bias) : temporal_attention(h, b.attention);
    ad::Var u = ad::layer_norm(ad::add(h, dropout(att, opts)), b.norm1.gamma, b.norm1.beta, c.layer_norm_eps);
    ad::Var ff = c.use_moe ? moe_forward(u, b.experts, b.router, &moe_states_[moe_index++]) : expert_forward(u, b.ffn);
    h = ad::layer_norm(ad::add(u, dropout(ff, opts)), b.norm2.gamma, b.norm2.beta, c.layer_norm_eps);
  }

  const std::size_t D = c.hidden_dim;
  ad::Var per_node = ad::reshape(ad::permute(h, {0, 2, 1, 3}), Shape{B, N, c.t_in * D});
  ad::Var y = ad::linear(per_node, head_weight_, head_bias_);
  y = ad::permute(ad::reshape(y, Shape{B, N, c.t_out, c.channels}), {0, 2, 1, 3});
  if (!batched) y = ad::reshape(y, Shape{c.t_out, N, c.channels});
  return y;
}

ad::Var StgormerModel::load_balance() const {
  if (!config_.use_moe || moe_states_.empty()) return ad::constant(NdArray::scalar(0.0));
  ad::Var total;
  for (const auto& s : moe_states_) {
    ad::Var l = load_balance_loss(s);
    total = total ? ad::add(total, l) : l;
  }
  return ad::scale(total, 1.0 / static_cast<double>(moe_states_.size()));
}

LossParts StgormerModel::loss(const ad::Var& y_hat, const NdArray& y) const {
  if (y_hat.shape() != y.shape())
    throw ShapeError("loss: forecast " + shape_str(y_hat.shape()) + " vs target " + shape_str(y.shape()));
  ad::Var mae = ad::mean(ad::abs(ad::sub(y_hat, ad::constant(y))));
  LossParts parts;
  parts.mae = mae.value().item();
  parts.total = mae;
  if (config_.use_moe) {
    ad::Var lb = load_balance();
    parts.lb = lb.value().item();
    if (config_.alpha != 0) parts.total = ad::add(mae, ad::scale(lb, config_.alpha));
  }
  return parts;
}

NdArray StgormerModel::predict(const NdArray& window, const NdArray& timestamps) {
  if (!normalizer_) throw std::logic_error("missing normalizer: model has no normalization statistics attached");
  ad::NoGradGuard guard;
  NdArray y = forward(normalizer_->apply(window), timestamps).value();
  reset_moe_states();
  return normalizer_->invert(y);
}

NdArray StgormerModel::realized_spd_bias() const {
  const auto n = static_cast<std::size_t>(graph_.num_nodes());
  if (!config_.use_sa_bias) return NdArray(Shape{n, n}, 0.0);
  ad::NoGradGuard guard;
  return spd_bias(spd_, spd_table_).value();
}

}  // namespace stg
