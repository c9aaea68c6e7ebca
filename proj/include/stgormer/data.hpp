#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stgormer/graph.hpp"
#include "stgormer/ndarray.hpp"

namespace stg {

/// Per-channel z-score statistics, fitted on the training split.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  /// (x - mean) / stddev along the last axis.
  NdArray apply(const NdArray& x) const;
  NdArray invert(const NdArray& x) const;

  bool operator==(const Normalizer&) const = default;
};

struct FlowDataset {
  NdArray flows;       // [T, N, C]
  NdArray timestamps;  // [T, k]
  std::shared_ptr<const SpatioTemporalGraph> graph;

  std::size_t steps() const { return flows.dim(0); }
  std::size_t nodes() const { return flows.dim(1); }
  std::size_t channels() const { return flows.dim(2); }
  /// Checks shapes against each other and the graph; throws std::invalid_argument.
  void validate() const;
  FlowDataset slice(std::size_t begin, std::size_t end) const;
};

struct Splits {
  FlowDataset train, val, test;
};

/// Chronological 7:1:2 split; remainder goes to test. Needs T >= 10.
Splits split(const FlowDataset& ds);

struct WindowSample {
  NdArray input;             // [T_in, N, C]
  NdArray input_timestamps;  // [T_in, k]
  NdArray target;            // [T_out, N, C]
  std::size_t start = 0;     // first input step within the source
};

std::vector<WindowSample> make_windows(const FlowDataset& ds, std::size_t t_in, std::size_t t_out,
                                       std::size_t stride = 1);

/// Throws std::invalid_argument("zero variance ...") for a constant channel.
Normalizer fit_normalizer(const FlowDataset& train);
FlowDataset normalized(const FlowDataset& ds, const Normalizer& norm);

struct SyntheticSpec {
  int nodes = 12;
  double edge_prob = 0.25;
  bool directed = false;
  std::uint64_t seed = 7;
  std::size_t steps = 2016;
  std::size_t channels = 1;
  std::size_t period_day = 24;
  std::size_t period_week = 168;
  double base_min = 4.0, base_max = 8.0;
  double amp_min = 1.0, amp_max = 3.0;
  double phase_min = 0.0, phase_max = 6.283185307179586;
  double weekly_min = 0.1, weekly_max = 0.4;  // depth of the weekly modulation
  int diffusion_rounds = 1;
  double noise = 0.05;

  bool operator==(const SyntheticSpec&) const = default;
};

std::vector<std::string> validate(const SyntheticSpec& spec);
/// "synth.<field> = value" lines. Throws ConfigError with every problem.
SyntheticSpec parse_synthetic_spec(const std::string& text);
std::string to_text(const SyntheticSpec& spec);

struct SyntheticData {
  SpatioTemporalGraph graph;
  FlowDataset dataset;
};

/// Daily sinusoid times a weekly modulation per node, smoothed over graph
/// neighbours for `diffusion_rounds`, plus Gaussian noise. Deterministic in the seed.
SyntheticData synthesize(const SyntheticSpec& spec);
/// Seeded Erdos-Renyi graph.
SpatioTemporalGraph random_graph(int nodes, double edge_prob, bool directed, std::uint64_t seed);

struct MetricsReport {
  double mae = 0, rmse = 0, mape = 0;
  double threshold = 0;
  std::size_t count = 0;

  bool operator==(const MetricsReport&) const = default;
};

/// Masked MAE / RMSE / MAPE over positions with y > threshold. MAPE is a fraction.
MetricsReport metrics(const NdArray& y, const NdArray& y_hat, double threshold);
std::string to_json(const MetricsReport& r);

// File formats.
NdArray parse_flows(const std::string& text);
NdArray load_flows(const std::filesystem::path& path, std::optional<std::size_t> expected_nodes = std::nullopt);
std::string format_flows(const NdArray& flows);
void save_flows(const std::filesystem::path& path, const NdArray& flows);

NdArray parse_timestamps(const std::string& text);
NdArray load_timestamps(const std::filesystem::path& path, std::optional<std::size_t> expected_steps = std::nullopt);
std::string format_timestamps(const NdArray& ts);
void save_timestamps(const std::filesystem::path& path, const NdArray& ts);

/// graph.txt, flows.txt, timestamps.txt inside one directory.
struct DataLayout {
  static constexpr const char* graph = "graph.txt";
  static constexpr const char* flows = "flows.txt";
  static constexpr const char* timestamps = "timestamps.txt";
  static constexpr const char* spec = "synth.cfg";
};

FlowDataset load_dataset_dir(const std::filesystem::path& dir);
void save_dataset_dir(const std::filesystem::path& dir, const SpatioTemporalGraph& g, const FlowDataset& ds);

}  // namespace stg
