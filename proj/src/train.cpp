#include "stgormer/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "json.hpp"
#include "stgormer/adam.hpp"
#include "stgormer/ops.hpp"

namespace stg {

Batch collate(const std::vector<WindowSample>& windows, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw std::invalid_argument("empty batch");
  const auto& first = windows.at(indices[0]);
  auto stack = [&](auto member) {
    const NdArray& proto = first.*member;
    Shape s = proto.shape();
    s.insert(s.begin(), indices.size());
    std::vector<double> data;
    data.reserve(shape_numel(s));
    for (auto i : indices) {
      const NdArray& a = windows.at(i).*member;
      data.insert(data.end(), a.values().begin(), a.values().end());
    }
    return NdArray(std::move(s), std::move(data));
  };
  return {stack(&WindowSample::input), stack(&WindowSample::input_timestamps), stack(&WindowSample::target)};
}

double mean_absolute_error(StgormerModel& model, const std::vector<WindowSample>& windows, std::size_t batch_size) {
  if (windows.empty()) throw std::invalid_argument("empty split");
  ad::NoGradGuard guard;
  double total = 0;
  std::size_t count = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < windows.size(); start += batch_size) {
    idx.resize(std::min(batch_size, windows.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    Batch b = collate(windows, idx);
    NdArray y = model.forward(b.inputs, b.timestamps).value();
    for (std::size_t i = 0; i < y.size(); ++i) total += std::abs(y[i] - b.targets[i]);
    count += y.size();
  }
  model.reset_moe_states();
  return total / static_cast<double>(count);
}

TrainHistory train_loop(StgormerModel& model, const std::vector<WindowSample>& train,
                        const std::vector<WindowSample>& val, const TrainConfig& tcfg, const TrainHooks& hooks) {
  if (train.empty()) throw std::invalid_argument("empty training split");
  if (auto p = validate(tcfg); !p.empty()) throw ConfigError(std::move(p));

  AdamOptions opts;
  opts.learning_rate = tcfg.learning_rate;
  opts.beta1 = tcfg.beta1;
  opts.beta2 = tcfg.beta2;
  opts.epsilon = tcfg.epsilon;
  opts.decay_factor = tcfg.lr_decay;
  opts.decay_every_epochs = tcfg.lr_decay_every;
  opts.lr_floor = tcfg.lr_floor;
  AdamState adam(model.parameters(), opts);

  std::mt19937_64 shuffle_rng(tcfg.seed);
  std::mt19937_64 dropout_rng(tcfg.seed + 1);
  ForwardOptions fwd;
  fwd.training = true;
  fwd.rng = &dropout_rng;

  TrainHistory history;
  std::vector<NdArray> best = model.parameters().snapshot();
  int since_improvement = 0;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t layers = model.moe_states().size();
  bool step_limit_hit = false;

  for (int epoch = 1; epoch <= tcfg.max_epochs && !step_limit_hit; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = adam.learning_rate();
    std::vector<std::vector<double>> mass(layers, std::vector<double>(model.config().experts, 0.0));
    std::vector<double> tokens(layers, 0.0);
    double loss_sum = 0, mae_sum = 0, lb_sum = 0;
    std::size_t batches = 0;

    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      if (tcfg.max_steps > 0 && history.total_steps >= tcfg.max_steps) {
        step_limit_hit = true;
        break;
      }
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + tcfg.batch_size)));
      Batch b = collate(train, idx);
      model.reset_moe_states();
      ad::Var y = model.forward(b.inputs, b.timestamps, fwd);
      LossParts parts = model.loss(y, b.targets);
      const double total = parts.total.value().item();
      if (!std::isfinite(total))
        throw NumericalError("loss diverged (" + std::to_string(total) + ") at epoch " + std::to_string(epoch) +
                             ", step " + std::to_string(history.total_steps + 1));
      model.parameters().backward(parts.total);
      adam_step(model.parameters(), adam);
      ++history.total_steps;

      for (std::size_t l = 0; l < layers; ++l) {
        const auto& s = model.moe_states()[l];
        for (std::size_t e = 0; e < s.experts(); ++e) mass[l][e] += s.accumulated().value()[e];
        tokens[l] += static_cast<double>(s.tokens());
      }
      loss_sum += total;
      mae_sum += parts.mae;
      lb_sum += parts.lb;
      ++batches;
    }
    model.reset_moe_states();
    if (batches == 0) break;

    rec.steps = history.total_steps;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.train_mae = mae_sum / static_cast<double>(batches);
    rec.train_lb = lb_sum / static_cast<double>(batches);
    for (std::size_t l = 0; l < layers; ++l) {
      std::vector<double> f(mass[l].size());
      for (std::size_t e = 0; e < f.size(); ++e) f[e] = mass[l][e] / tokens[l];
      rec.expert_fractions.push_back(std::move(f));
    }
    double measured = val.empty() ? rec.train_mae : mean_absolute_error(model, val, std::max<std::size_t>(tcfg.batch_size, 64));
    rec.val_mae = hooks.validation_override ? hooks.validation_override(epoch, measured) : measured;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (history.epochs.empty() || rec.val_mae < history.best_val_mae) {
      history.best_val_mae = rec.val_mae;
      history.best_epoch = epoch;
      best = model.parameters().snapshot();
      since_improvement = 0;
    } else {
      ++since_improvement;
    }
    history.epochs.push_back(rec);
    adam.end_epoch(epoch);

    if (hooks.on_epoch_end && hooks.on_epoch_end(history.epochs.back(), model)) break;
    if (since_improvement >= tcfg.patience) {
      history.stopped_early = true;
      break;
    }
  }
  model.parameters().restore(best);
  return history;
}

MetricsReport evaluate(StgormerModel& model, const std::vector<WindowSample>& raw_windows, double threshold,
                       std::size_t batch_size) {
  if (raw_windows.empty()) throw std::invalid_argument("empty split: no windows to evaluate");
  std::vector<double> truth, forecast;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < raw_windows.size(); start += batch_size) {
    idx.resize(std::min(batch_size, raw_windows.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    Batch b = collate(raw_windows, idx);
    NdArray y = model.predict(b.inputs, b.timestamps);
    truth.insert(truth.end(), b.targets.values().begin(), b.targets.values().end());
    forecast.insert(forecast.end(), y.values().begin(), y.values().end());
  }
  const std::size_t n = truth.size();
  return metrics(NdArray(Shape{n}, std::move(truth)), NdArray(Shape{n}, std::move(forecast)), threshold);
}

PreparedData prepare(const FlowDataset& ds, const RunConfig& cfg) {
  ds.validate();
  if (ds.channels() != cfg.model.channels)
    throw std::invalid_argument("dataset has " + std::to_string(ds.channels()) + " channels but model.channels = " +
                                std::to_string(cfg.model.channels));
  if (ds.timestamps.dim(1) != cfg.model.time_features)
    throw std::invalid_argument("dataset has " + std::to_string(ds.timestamps.dim(1)) +
                                " temporal features but model.time_features = " +
                                std::to_string(cfg.model.time_features));
  PreparedData p;
  p.raw = split(ds);
  p.normalizer = fit_normalizer(p.raw.train);
  const auto t_in = cfg.model.t_in, t_out = cfg.model.t_out, stride = cfg.data.stride;
  p.train = make_windows(normalized(p.raw.train, p.normalizer), t_in, t_out, stride);
  p.val = make_windows(normalized(p.raw.val, p.normalizer), t_in, t_out, stride);
  p.raw_train = make_windows(p.raw.train, t_in, t_out, stride);
  p.raw_val = make_windows(p.raw.val, t_in, t_out, stride);
  p.raw_test = make_windows(p.raw.test, t_in, t_out, stride);
  return p;
}

TrainedRun train_model(const RunConfig& cfg, const FlowDataset& ds, const TrainHooks& hooks) {
  if (!ds.graph) throw std::invalid_argument("dataset has no graph");
  PreparedData data = prepare(ds, cfg);
  StgormerModel model(cfg.model, *ds.graph);
  model.set_normalizer(data.normalizer);
  TrainHistory history = train_loop(model, data.train, data.val, cfg.train, hooks);
  return {std::move(model), std::move(history), std::move(data)};
}

std::string epoch_to_json(const EpochRecord& r) {
  nlohmann::json j;
  j["epoch"] = r.epoch;
  j["steps"] = r.steps;
  j["train_loss"] = r.train_loss;
  j["train_mae"] = r.train_mae;
  j["train_lb"] = r.train_lb;
  j["val_mae"] = r.val_mae;
  j["learning_rate"] = r.learning_rate;
  j["expert_fractions"] = r.expert_fractions;
  j["wall_seconds"] = r.wall_seconds;
  return j.dump();
}

std::string history_to_jsonl(const TrainHistory& h) {
  std::string out;
  for (const auto& r : h.epochs) {
    auto j = nlohmann::json::parse(epoch_to_json(r));
    j["best"] = r.epoch == h.best_epoch;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace stg
