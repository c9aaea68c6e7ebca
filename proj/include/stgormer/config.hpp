#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stg {

/// Architecture hyperparameters and ablation switches.
struct StgormerConfig {
  std::size_t hidden_dim = 64;
  std::size_t heads = 4;
  std::string block_order = "SSSTTT";
  std::size_t experts = 6;
  std::size_t expert_expansion = 4;
  std::size_t router_layers = 1;
  std::size_t time_dim = 8;       // d_t per temporal feature
  std::size_t time_features = 2;  // time-of-day, day-of-week
  std::size_t degree_dim = 16;
  int max_degree = 10;
  int max_spd = 10;
  double alpha = 0.01;
  std::size_t t_in = 12;
  std::size_t t_out = 1;
  std::size_t channels = 1;
  bool use_t_in = true;
  bool use_s_in = true;
  bool use_sa_bias = true;
  bool use_moe = true;
  double dropout = 0.0;
  double layer_norm_eps = 1e-5;
  std::uint64_t seed = 42;

  bool operator==(const StgormerConfig&) const = default;
};

struct TrainConfig {
  std::size_t batch_size = 32;
  int max_epochs = 100;
  int patience = 25;
  std::uint64_t seed = 42;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lr_decay = 0.5;
  int lr_decay_every = 25;
  double lr_floor = 1e-5;
  long max_steps = 0;  // 0 = no step limit

  bool operator==(const TrainConfig&) const = default;
};

struct DataOptions {
  double threshold = 0.0;
  std::size_t stride = 1;

  bool operator==(const DataOptions&) const = default;
};

struct RunConfig {
  StgormerConfig model;
  TrainConfig train;
  DataOptions data;

  bool operator==(const RunConfig&) const = default;
};

/// Carries every problem found, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct ConfigField {
  std::string key;
  std::string help;
  std::function<bool(const std::string&)> set;
  std::function<std::string()> get;
};

/// Dotted-key accessors bound to `cfg`.
std::vector<ConfigField> config_fields(RunConfig& cfg);

std::vector<std::string> validate(const StgormerConfig& cfg);
std::vector<std::string> validate(const TrainConfig& cfg);
std::vector<std::string> validate(const RunConfig& cfg);

/// Flat "key = value" lines; '#' starts a comment.
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text,
                                                                  std::vector<std::string>& problems);

/// Applies key/value pairs, collecting unknown keys and bad values into `problems`.
void apply_settings(RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& kv,
                    std::vector<std::string>& problems);
/// Parses "key=value".
std::pair<std::string, std::string> split_override(const std::string& text);

/// Parses text, applies overrides and validates; throws ConfigError listing all problems.
RunConfig parse_run_config(const std::string& text, const std::vector<std::string>& overrides = {});
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
std::string to_text(const RunConfig& cfg);

}  // namespace stg
