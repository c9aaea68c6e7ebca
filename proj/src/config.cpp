#include "stgormer/config.hpp"

#include <limits>

#include "stgormer/io_util.hpp"

namespace stg {

namespace {

std::string join_problems(const std::vector<std::string>& p) {
  std::string out;
  for (std::size_t i = 0; i < p.size(); ++i) out += (i ? "; " : "") + p[i];
  return out;
}

template <class T>
bool set_unsigned(T& field, const std::string& s) {
  auto v = detail::parse_unsigned(s);
  if (!v || *v > std::numeric_limits<T>::max()) return false;
  field = static_cast<T>(*v);
  return true;
}

bool set_int(int& field, const std::string& s) {
  auto v = detail::parse_int(s);
  if (!v) return false;
  field = *v;
  return true;
}

bool set_long(long& field, const std::string& s) {
  auto v = detail::parse_long(s);
  if (!v) return false;
  field = static_cast<long>(*v);
  return true;
}

bool set_double(double& field, const std::string& s) {
  auto v = detail::parse_double(s);
  if (!v) return false;
  field = *v;
  return true;
}

bool set_bool(bool& field, const std::string& s) {
  if (s == "true" || s == "1") field = true;
  else if (s == "false" || s == "0") field = false;
  else return false;
  return true;
}

template <class T>
ConfigField unsigned_field(std::string key, std::string help, T& ref) {
  return {std::move(key), std::move(help), [&ref](const std::string& s) { return set_unsigned(ref, s); },
          [&ref] { return std::to_string(ref); }};
}
ConfigField int_field(std::string key, std::string help, int& ref) {
  return {std::move(key), std::move(help), [&ref](const std::string& s) { return set_int(ref, s); },
          [&ref] { return std::to_string(ref); }};
}
ConfigField long_field(std::string key, std::string help, long& ref) {
  return {std::move(key), std::move(help), [&ref](const std::string& s) { return set_long(ref, s); },
          [&ref] { return std::to_string(ref); }};
}
ConfigField double_field(std::string key, std::string help, double& ref) {
  return {std::move(key), std::move(help), [&ref](const std::string& s) { return set_double(ref, s); },
          [&ref] { return detail::format_double(ref); }};
}
ConfigField bool_field(std::string key, std::string help, bool& ref) {
  return {std::move(key), std::move(help), [&ref](const std::string& s) { return set_bool(ref, s); },
          [&ref] { return std::string(ref ? "true" : "false"); }};
}
ConfigField string_field(std::string key, std::string help, std::string& ref) {
  return {std::move(key), std::move(help),
          [&ref](const std::string& s) {
            ref = s;
            return true;
          },
          [&ref] { return ref; }};
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error("invalid configuration: " + join_problems(problems)), problems_(std::move(problems)) {}

std::vector<ConfigField> config_fields(RunConfig& cfg) {
  auto& m = cfg.model;
  auto& t = cfg.train;
  auto& d = cfg.data;
  return {
      unsigned_field("model.hidden_dim", "hidden width D", m.hidden_dim),
      unsigned_field("model.heads", "attention heads (must divide D)", m.heads),
      string_field("model.block_order", "sequence of S/T blocks", m.block_order),
      unsigned_field("model.experts", "experts per MoE layer", m.experts),
      unsigned_field("model.expert_expansion", "expert hidden width multiplier", m.expert_expansion),
      unsigned_field("model.router_layers", "linear layers in each gating MLP", m.router_layers),
      unsigned_field("model.time_dim", "Time2Vec width per temporal feature", m.time_dim),
      unsigned_field("model.time_features", "temporal features per step", m.time_features),
      unsigned_field("model.degree_dim", "degree embedding width", m.degree_dim),
      int_field("model.max_degree", "degree clamp (larger degrees share one row)", m.max_degree),
      int_field("model.max_spd", "largest SPD with its own bias bucket", m.max_spd),
      double_field("model.alpha", "load-balancing loss weight", m.alpha),
      unsigned_field("model.t_in", "input window length", m.t_in),
      unsigned_field("model.t_out", "forecast horizon", m.t_out),
      unsigned_field("model.channels", "flow channels C", m.channels),
      bool_field("model.use_t_in", "temporal input encoding", m.use_t_in),
      bool_field("model.use_s_in", "degree input encoding", m.use_s_in),
      bool_field("model.use_sa_bias", "SPD bias in spatial attention", m.use_sa_bias),
      bool_field("model.use_moe", "mixture-of-experts feed-forward (else one plain FNN)", m.use_moe),
      double_field("model.dropout", "dropout rate on sublayer outputs during training", m.dropout),
      double_field("model.layer_norm_eps", "layer-norm epsilon", m.layer_norm_eps),
      unsigned_field("model.seed", "parameter initialisation seed", m.seed),
      unsigned_field("train.batch_size", "samples per optimizer step", t.batch_size),
      int_field("train.max_epochs", "epoch limit", t.max_epochs),
      int_field("train.patience", "epochs without validation improvement before stopping", t.patience),
      unsigned_field("train.seed", "shuffling seed", t.seed),
      double_field("train.learning_rate", "initial Adam learning rate", t.learning_rate),
      double_field("train.beta1", "Adam beta1", t.beta1),
      double_field("train.beta2", "Adam beta2", t.beta2),
      double_field("train.epsilon", "Adam epsilon", t.epsilon),
      double_field("train.lr_decay", "learning-rate multiplier per decay interval", t.lr_decay),
      int_field("train.lr_decay_every", "epochs per decay interval (0 disables)", t.lr_decay_every),
      double_field("train.lr_floor", "lower bound for the decayed learning rate", t.lr_floor),
      long_field("train.max_steps", "optimizer step limit (0 = none)", t.max_steps),
      double_field("data.threshold", "evaluation mask: targets must exceed this", d.threshold),
      unsigned_field("data.stride", "window stride", d.stride),
  };
}

std::vector<std::string> validate(const StgormerConfig& c) {
  std::vector<std::string> p;
  if (c.hidden_dim == 0) p.push_back("model.hidden_dim must be positive");
  if (c.heads == 0) p.push_back("model.heads must be positive");
  else if (c.hidden_dim % c.heads != 0) p.push_back("model.hidden_dim must be divisible by model.heads");
  if (c.block_order.empty()) p.push_back("model.block_order must not be empty");
  for (char ch : c.block_order)
    if (ch != 'S' && ch != 'T') {
      p.push_back("model.block_order may only contain 'S' and 'T'");
      break;
    }
  if (c.experts == 0) p.push_back("model.experts must be at least 1");
  if (c.expert_expansion == 0) p.push_back("model.expert_expansion must be positive");
  if (c.router_layers == 0) p.push_back("model.router_layers must be at least 1");
  if (c.time_dim == 0) p.push_back("model.time_dim must be positive");
  if (c.time_features == 0) p.push_back("model.time_features must be positive");
  if (c.degree_dim == 0) p.push_back("model.degree_dim must be positive");
  if (c.max_degree < 0) p.push_back("model.max_degree must be non-negative");
  if (c.max_spd < 0) p.push_back("model.max_spd must be non-negative");
  if (!(c.alpha >= 0)) p.push_back("model.alpha must be >= 0");
  if (c.t_in == 0) p.push_back("model.t_in must be positive");
  if (c.t_out == 0) p.push_back("model.t_out must be positive");
  if (c.channels == 0) p.push_back("model.channels must be positive");
  if (!(c.dropout >= 0 && c.dropout < 1)) p.push_back("model.dropout must be in [0, 1)");
  if (!(c.layer_norm_eps > 0)) p.push_back("model.layer_norm_eps must be positive");
  return p;
}

std::vector<std::string> validate(const TrainConfig& c) {
  std::vector<std::string> p;
  if (c.batch_size == 0) p.push_back("train.batch_size must be at least 1");
  if (c.max_epochs < 1) p.push_back("train.max_epochs must be at least 1");
  if (c.patience < 1) p.push_back("train.patience must be at least 1");
  if (!(c.learning_rate >= 0)) p.push_back("train.learning_rate must be >= 0");
  if (!(c.beta1 >= 0 && c.beta1 < 1)) p.push_back("train.beta1 must be in [0, 1)");
  if (!(c.beta2 >= 0 && c.beta2 < 1)) p.push_back("train.beta2 must be in [0, 1)");
  if (!(c.epsilon > 0)) p.push_back("train.epsilon must be positive");
  if (!(c.lr_decay > 0 && c.lr_decay <= 1)) p.push_back("train.lr_decay must be in (0, 1]");
  if (c.lr_decay_every < 0) p.push_back("train.lr_decay_every must be >= 0");
  if (!(c.lr_floor >= 0)) p.push_back("train.lr_floor must be >= 0");
  if (c.max_steps < 0) p.push_back("train.max_steps must be >= 0");
  return p;
}

std::vector<std::string> validate(const RunConfig& c) {
  auto p = validate(c.model);
  auto t = validate(c.train);
  p.insert(p.end(), t.begin(), t.end());
  if (c.data.stride == 0) p.push_back("data.stride must be at least 1");
  return p;
}

std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text,
                                                                  std::vector<std::string>& problems) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t lineno = 0;
  for (const auto& raw : detail::split(text, '\n')) {
    ++lineno;
    auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      problems.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    out.emplace_back(std::string(detail::trim(line.substr(0, eq))), std::string(detail::trim(line.substr(eq + 1))));
  }
  return out;
}

void apply_settings(RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& kv,
                    std::vector<std::string>& problems) {
  auto fields = config_fields(cfg);
  for (const auto& [key, value] : kv) {
    // A bare name such as "block_order" resolves to the single dotted key ending in it.
    std::vector<ConfigField*> matches;
    for (auto& f : fields)
      if (f.key == key) matches = {&f};
    if (matches.empty() && key.find('.') == std::string::npos)
      for (auto& f : fields)
        if (f.key.size() > key.size() && f.key.ends_with("." + key)) matches.push_back(&f);
    if (matches.empty()) {
      problems.push_back("unknown key '" + key + "'");
    } else if (matches.size() > 1) {
      std::string options;
      for (auto* f : matches) options += (options.empty() ? "" : ", ") + f->key;
      problems.push_back("ambiguous key '" + key + "' (" + options + ")");
    } else if (!matches[0]->set(value)) {
      problems.push_back(matches[0]->key + ": invalid value '" + value + "'");
    }
  }
}

std::pair<std::string, std::string> split_override(const std::string& text) {
  auto eq = text.find('=');
  if (eq == std::string::npos) return {text, ""};
  return {std::string(detail::trim(std::string_view(text).substr(0, eq))),
          std::string(detail::trim(std::string_view(text).substr(eq + 1)))};
}

RunConfig parse_run_config(const std::string& text, const std::vector<std::string>& overrides) {
  std::vector<std::string> problems;
  RunConfig cfg;
  apply_settings(cfg, parse_key_values(text, problems), problems);
  std::vector<std::pair<std::string, std::string>> ov;
  for (const auto& o : overrides) {
    if (o.find('=') == std::string::npos) {
      problems.push_back("override '" + o + "' is not key=value");
      continue;
    }
    ov.push_back(split_override(o));
  }
  apply_settings(cfg, ov, problems);
  auto v = validate(cfg);
  problems.insert(problems.end(), v.begin(), v.end());
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  if (!std::filesystem::exists(path)) throw ConfigError({"config file not found: " + path.string()});
  return parse_run_config(detail::read_text_file(path), overrides);
}

std::string to_text(const RunConfig& cfg) {
  RunConfig copy = cfg;
  std::string out;
  for (const auto& f : config_fields(copy)) out += f.key + " = " + f.get() + "\n";
  return out;
}

}  // namespace stg
