#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stgormer/config.hpp"
#include "stgormer/data.hpp"
#include "stgormer/model.hpp"

namespace stg {

/// Loss became NaN or infinite.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochRecord {
  int epoch = 0;
  long steps = 0;  // cumulative optimizer steps
  double train_loss = 0, train_mae = 0, train_lb = 0;
  double val_mae = 0;
  double learning_rate = 0;
  std::vector<std::vector<double>> expert_fractions;  // per MoE layer
  double wall_seconds = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_mae = 0;
  bool stopped_early = false;
  long total_steps = 0;
};

struct TrainHooks {
  /// Replaces the measured validation MAE (epoch is 1-based).
  std::function<double(int epoch, double measured)> validation_override;
  /// Called after each epoch's bookkeeping; return true to stop.
  std::function<bool(const EpochRecord&, StgormerModel&)> on_epoch_end;
};

struct Batch {
  NdArray inputs;      // [B, T_in, N, C]
  NdArray timestamps;  // [B, T_in, k]
  NdArray targets;     // [B, T_out, N, C]
};

Batch collate(const std::vector<WindowSample>& windows, const std::vector<std::size_t>& indices);

/// Runs Adam over shuffled mini-batches with early stopping on validation MAE
/// (normalized scale). Leaves the best-validation parameters in `model`.
TrainHistory train_loop(StgormerModel& model, const std::vector<WindowSample>& train,
                        const std::vector<WindowSample>& val, const TrainConfig& tcfg, const TrainHooks& hooks = {});

/// Mean absolute error over every element, without touching gate statistics.
double mean_absolute_error(StgormerModel& model, const std::vector<WindowSample>& windows, std::size_t batch_size);

/// Forecasts raw-scale windows through the model's normalizer and scores them
/// with the masked metrics on the original scale.
MetricsReport evaluate(StgormerModel& model, const std::vector<WindowSample>& raw_windows, double threshold,
                       std::size_t batch_size = 64);

/// Split, normalise with train-only statistics, and window a dataset.
struct PreparedData {
  Splits raw;
  Normalizer normalizer;
  std::vector<WindowSample> train, val;  // normalized
  std::vector<WindowSample> raw_train, raw_val, raw_test;
};

PreparedData prepare(const FlowDataset& ds, const RunConfig& cfg);

struct TrainedRun {
  StgormerModel model;
  TrainHistory history;
  PreparedData data;
};

TrainedRun train_model(const RunConfig& cfg, const FlowDataset& ds, const TrainHooks& hooks = {});

/// One JSON object per epoch record.
std::string epoch_to_json(const EpochRecord& r);
/// One line per epoch; the best epoch carries "best": true.
std::string history_to_jsonl(const TrainHistory& h);

}  // namespace stg
