#include "stgormer/data.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

#include "stgormer/config.hpp"
#include "stgormer/io_util.hpp"

namespace stg {

NdArray Normalizer::apply(const NdArray& x) const {
  const std::size_t c = mean.size();
  if (x.rank() == 0 || x.shape().back() != c) throw ShapeError("normalizer channel count mismatch");
  NdArray out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x[i] - mean[i % c]) / stddev[i % c];
  return out;
}

NdArray Normalizer::invert(const NdArray& x) const {
  const std::size_t c = mean.size();
  if (x.rank() == 0 || x.shape().back() != c) throw ShapeError("normalizer channel count mismatch");
  NdArray out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * stddev[i % c] + mean[i % c];
  return out;
}

void FlowDataset::validate() const {
  if (flows.rank() != 3) throw std::invalid_argument("flows must be [T, N, C], got " + shape_str(flows.shape()));
  if (timestamps.rank() != 2 || timestamps.dim(0) != flows.dim(0))
    throw std::invalid_argument("timestamps " + shape_str(timestamps.shape()) + " do not cover " +
                                std::to_string(flows.dim(0)) + " steps");
  if (graph && static_cast<std::size_t>(graph->num_nodes()) != flows.dim(1))
    throw std::invalid_argument("flows have " + std::to_string(flows.dim(1)) + " nodes but the graph has " +
                                std::to_string(graph->num_nodes()));
}

FlowDataset FlowDataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > steps()) throw std::out_of_range("dataset slice out of range");
  const std::size_t row = nodes() * channels();
  const std::size_t k = timestamps.dim(1);
  FlowDataset out;
  out.flows = NdArray(Shape{end - begin, nodes(), channels()},
                      std::vector<double>(flows.values().begin() + static_cast<std::ptrdiff_t>(begin * row),
                                          flows.values().begin() + static_cast<std::ptrdiff_t>(end * row)));
  out.timestamps = NdArray(Shape{end - begin, k},
                           std::vector<double>(timestamps.values().begin() + static_cast<std::ptrdiff_t>(begin * k),
                                               timestamps.values().begin() + static_cast<std::ptrdiff_t>(end * k)));
  out.graph = graph;
  return out;
}

Splits split(const FlowDataset& ds) {
  const std::size_t t = ds.steps();
  if (t < 10) throw std::invalid_argument("need at least 10 steps to split 7:1:2, got " + std::to_string(t));
  const std::size_t n_train = t * 7 / 10;
  const std::size_t n_val = t / 10;
  return {ds.slice(0, n_train), ds.slice(n_train, n_train + n_val), ds.slice(n_train + n_val, t)};
}

std::vector<WindowSample> make_windows(const FlowDataset& ds, std::size_t t_in, std::size_t t_out,
                                       std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("window stride must be positive");
  const std::size_t len = ds.steps();
  if (len < t_in + t_out)
    throw std::invalid_argument("split of length " + std::to_string(len) + " is shorter than T_in + T_out = " +
                                std::to_string(t_in + t_out));
  std::vector<WindowSample> out;
  for (std::size_t s = 0; s + t_in + t_out <= len; s += stride) {
    FlowDataset in = ds.slice(s, s + t_in);
    WindowSample w;
    w.input = std::move(in.flows);
    w.input_timestamps = std::move(in.timestamps);
    w.target = ds.slice(s + t_in, s + t_in + t_out).flows;
    w.start = s;
    out.push_back(std::move(w));
  }
  return out;
}

Normalizer fit_normalizer(const FlowDataset& train) {
  const std::size_t c = train.channels();
  const std::size_t count = train.steps() * train.nodes();
  if (count == 0) throw std::invalid_argument("cannot fit normalizer on an empty split");
  Normalizer n{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
  for (std::size_t i = 0; i < train.flows.size(); ++i) n.mean[i % c] += train.flows[i];
  for (auto& m : n.mean) m /= static_cast<double>(count);
  for (std::size_t i = 0; i < train.flows.size(); ++i) {
    const double d = train.flows[i] - n.mean[i % c];
    n.stddev[i % c] += d * d;
  }
  for (std::size_t ch = 0; ch < c; ++ch) {
    n.stddev[ch] = std::sqrt(n.stddev[ch] / static_cast<double>(count));
    if (!(n.stddev[ch] > 0)) throw std::invalid_argument("zero variance in channel " + std::to_string(ch));
  }
  return n;
}

FlowDataset normalized(const FlowDataset& ds, const Normalizer& norm) {
  FlowDataset out = ds;
  out.flows = norm.apply(ds.flows);
  return out;
}

// --- synthetic data ---------------------------------------------------------

namespace {

struct SpecField {
  std::string key;
  std::function<bool(const std::string&)> set;
  std::function<std::string()> get;
};

std::vector<SpecField> spec_fields(SyntheticSpec& s) {
  auto dbl = [](const char* key, double& ref) {
    return SpecField{key,
                     [&ref](const std::string& v) {
                       auto p = detail::parse_double(v);
                       if (p) ref = *p;
                       return p.has_value();
                     },
                     [&ref] { return detail::format_double(ref); }};
  };
  auto uns = [](const char* key, auto& ref) {
    return SpecField{key,
                     [&ref](const std::string& v) {
                       using T = std::remove_reference_t<decltype(ref)>;
                       auto p = detail::parse_unsigned(v);
                       if (!p || *p > std::numeric_limits<T>::max()) return false;
                       ref = static_cast<T>(*p);
                       return true;
                     },
                     [&ref] { return std::to_string(ref); }};
  };
  return {
      uns("synth.nodes", s.nodes),
      dbl("synth.edge_prob", s.edge_prob),
      SpecField{"synth.directed",
                [&s](const std::string& v) {
                  if (v == "true" || v == "1") s.directed = true;
                  else if (v == "false" || v == "0") s.directed = false;
                  else return false;
                  return true;
                },
                [&s] { return std::string(s.directed ? "true" : "false"); }},
      uns("synth.seed", s.seed),
      uns("synth.steps", s.steps),
      uns("synth.channels", s.channels),
      uns("synth.period_day", s.period_day),
      uns("synth.period_week", s.period_week),
      dbl("synth.base_min", s.base_min),
      dbl("synth.base_max", s.base_max),
      dbl("synth.amp_min", s.amp_min),
      dbl("synth.amp_max", s.amp_max),
      dbl("synth.phase_min", s.phase_min),
      dbl("synth.phase_max", s.phase_max),
      dbl("synth.weekly_min", s.weekly_min),
      dbl("synth.weekly_max", s.weekly_max),
      uns("synth.diffusion_rounds", s.diffusion_rounds),
      dbl("synth.noise", s.noise),
  };
}

}  // namespace

std::vector<std::string> validate(const SyntheticSpec& s) {
  std::vector<std::string> p;
  if (s.nodes < 1) p.push_back("synth.nodes must be at least 1");
  if (!(s.edge_prob >= 0 && s.edge_prob <= 1)) p.push_back("synth.edge_prob must be in [0, 1]");
  if (s.steps < 1) p.push_back("synth.steps must be at least 1");
  if (s.channels < 1) p.push_back("synth.channels must be at least 1");
  if (s.period_day < 1) p.push_back("synth.period_day must be at least 1");
  if (s.period_day >= 1 && (s.period_week < s.period_day || s.period_week % s.period_day != 0))
    p.push_back("synth.period_week must be a positive multiple of synth.period_day");
  auto range = [&](const char* name, double lo, double hi) {
    if (!(lo <= hi)) p.push_back(std::string(name) + " range is empty (min > max)");
  };
  range("synth.base", s.base_min, s.base_max);
  range("synth.amp", s.amp_min, s.amp_max);
  range("synth.phase", s.phase_min, s.phase_max);
  range("synth.weekly", s.weekly_min, s.weekly_max);
  if (s.diffusion_rounds < 0) p.push_back("synth.diffusion_rounds must be >= 0");
  if (!(s.noise >= 0)) p.push_back("synth.noise must be >= 0");
  return p;
}

SyntheticSpec parse_synthetic_spec(const std::string& text) {
  std::vector<std::string> problems;
  auto kv = parse_key_values(text, problems);
  SyntheticSpec spec;
  auto fields = spec_fields(spec);
  for (const auto& [key, value] : kv) {
    auto it = std::find_if(fields.begin(), fields.end(), [&](const SpecField& f) { return f.key == key; });
    if (it == fields.end()) problems.push_back("unknown key '" + key + "'");
    else if (!it->set(value)) problems.push_back(key + ": invalid value '" + value + "'");
  }
  auto v = validate(spec);
  problems.insert(problems.end(), v.begin(), v.end());
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return spec;
}

std::string to_text(const SyntheticSpec& spec) {
  SyntheticSpec copy = spec;
  std::string out;
  for (const auto& f : spec_fields(copy)) out += f.key + " = " + f.get() + "\n";
  return out;
}

SpatioTemporalGraph random_graph(int nodes, double edge_prob, bool directed, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Edge> edges;
  for (int i = 0; i < nodes; ++i)
    for (int j = directed ? 0 : i + 1; j < nodes; ++j)
      if (i != j && u(rng) < edge_prob) edges.emplace_back(i, j);
  return {nodes, std::move(edges), directed};
}

SyntheticData synthesize(const SyntheticSpec& spec) {
  auto problems = validate(spec);
  if (!problems.empty()) throw ConfigError(std::move(problems));
  SpatioTemporalGraph g = random_graph(spec.nodes, spec.edge_prob, spec.directed, spec.seed);
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  auto draw = [&rng](double lo, double hi) {
    if (lo == hi) return lo;
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  const auto n = static_cast<std::size_t>(spec.nodes);
  const std::size_t c = spec.channels, t_len = spec.steps;
  struct Profile {
    double base, amp, phase, weekly, weekly_phase;
  };
  std::vector<Profile> prof(n * c);
  for (auto& p : prof)
    p = {draw(spec.base_min, spec.base_max), draw(spec.amp_min, spec.amp_max), draw(spec.phase_min, spec.phase_max),
         draw(spec.weekly_min, spec.weekly_max), draw(spec.phase_min, spec.phase_max)};

  const double two_pi = 6.283185307179586;
  NdArray flows(Shape{t_len, n, c});
  for (std::size_t t = 0; t < t_len; ++t) {
    // Reduce modulo the period first so x[t] and x[t + P_w] are computed identically.
    const double day_angle = two_pi * static_cast<double>(t % spec.period_day) / static_cast<double>(spec.period_day);
    const double week_angle =
        two_pi * static_cast<double>(t % spec.period_week) / static_cast<double>(spec.period_week);
    for (std::size_t i = 0; i < n * c; ++i) {
      const auto& p = prof[i];
      flows[t * n * c + i] = p.base + p.amp * std::sin(day_angle + p.phase) * (1.0 + p.weekly * std::sin(week_angle + p.weekly_phase));
    }
  }

  std::vector<std::vector<int>> nbrs(n);
  for (std::size_t v = 0; v < n; ++v) nbrs[v] = g.neighbours(static_cast<int>(v));
  for (int r = 0; r < spec.diffusion_rounds; ++r) {
    NdArray next(flows.shape());
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t v = 0; v < n; ++v)
        for (std::size_t ch = 0; ch < c; ++ch) {
          double s = flows[(t * n + v) * c + ch];
          for (int u : nbrs[v]) s += flows[(t * n + static_cast<std::size_t>(u)) * c + ch];
          next[(t * n + v) * c + ch] = s / static_cast<double>(nbrs[v].size() + 1);
        }
    flows = std::move(next);
  }

  if (spec.noise > 0) {
    std::normal_distribution<double> noise(0.0, spec.noise);
    for (auto& x : flows.data()) x += noise(rng);
  }

  const std::size_t days_per_week = spec.period_week / spec.period_day;
  NdArray ts(Shape{t_len, 2});
  for (std::size_t t = 0; t < t_len; ++t) {
    ts[2 * t] = static_cast<double>(t % spec.period_day) / static_cast<double>(spec.period_day);
    ts[2 * t + 1] = static_cast<double>((t % spec.period_week) / spec.period_day) / static_cast<double>(days_per_week);
  }

  SyntheticData out{g, {}};
  out.dataset.flows = std::move(flows);
  out.dataset.timestamps = std::move(ts);
  out.dataset.graph = std::make_shared<const SpatioTemporalGraph>(std::move(g));
  return out;
}

// --- metrics ----------------------------------------------------------------

MetricsReport metrics(const NdArray& y, const NdArray& y_hat, double threshold) {
  if (y.shape() != y_hat.shape())
    throw ShapeError("metrics: target " + shape_str(y.shape()) + " vs forecast " + shape_str(y_hat.shape()));
  MetricsReport r;
  r.threshold = threshold;
  double abs_sum = 0, sq_sum = 0, pct_sum = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(y[i] > threshold)) continue;
    const double e = y[i] - y_hat[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
    pct_sum += std::abs(e) / y[i];
    ++r.count;
  }
  if (r.count == 0) throw std::invalid_argument("empty mask: no target exceeds threshold " + detail::format_double(threshold));
  const double n = static_cast<double>(r.count);
  r.mae = abs_sum / n;
  r.rmse = std::sqrt(sq_sum / n);
  r.mape = pct_sum / n;
  return r;
}

std::string to_json(const MetricsReport& r) {
  return "{\"mae\": " + detail::format_double(r.mae) + ", \"rmse\": " + detail::format_double(r.rmse) +
         ", \"mape\": " + detail::format_double(r.mape) + ", \"threshold\": " + detail::format_double(r.threshold) +
         ", \"count\": " + std::to_string(r.count) + "}";
}

// --- files ------------------------------------------------------------------

namespace {

std::vector<std::string> lines_of(const std::string& text) {
  auto lines = detail::split(text, '\n');
  for (auto& l : lines)
    if (!l.empty() && l.back() == '\r') l.pop_back();
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

}  // namespace

NdArray parse_flows(const std::string& text) {
  auto lines = lines_of(text);
  if (lines.empty()) throw ParseError("missing header \"T N C\"", 1);
  auto head = detail::split(lines[0], ' ');
  std::vector<long long> dims;
  for (const auto& h : head) {
    auto v = detail::parse_long(h);
    if (!v || *v < 1) throw ParseError("header must be three positive integers \"T N C\"", 1);
    dims.push_back(*v);
  }
  if (dims.size() != 3) throw ParseError("header must be three positive integers \"T N C\"", 1);
  const auto t = static_cast<std::size_t>(dims[0]), n = static_cast<std::size_t>(dims[1]),
             c = static_cast<std::size_t>(dims[2]);
  const std::size_t expected = t * n;
  if (lines.size() - 1 != expected)
    throw ParseError("expected " + std::to_string(expected) + " data rows (T*N), found " +
                         std::to_string(lines.size() - 1),
                     0);
  NdArray flows(Shape{t, n, c});
  for (std::size_t r = 0; r < expected; ++r) {
    auto cells = detail::split(lines[r + 1], ',');
    if (cells.size() != c)
      throw ParseError("expected " + std::to_string(c) + " values, found " + std::to_string(cells.size()), r + 2);
    for (std::size_t j = 0; j < c; ++j) {
      auto v = detail::parse_double(detail::trim(cells[j]));
      if (!v || !std::isfinite(*v)) throw ParseError("non-numeric cell '" + cells[j] + "'", r + 2);
      flows[r * c + j] = *v;
    }
  }
  return flows;
}

NdArray load_flows(const std::filesystem::path& path, std::optional<std::size_t> expected_nodes) {
  NdArray f = parse_flows(detail::read_text_file(path));
  if (expected_nodes && f.dim(1) != *expected_nodes)
    throw std::invalid_argument(path.string() + ": header declares " + std::to_string(f.dim(1)) +
                                " nodes but the graph has " + std::to_string(*expected_nodes));
  return f;
}

std::string format_flows(const NdArray& flows) {
  if (flows.rank() != 3) throw ShapeError("flows must be [T, N, C]");
  std::string out = std::to_string(flows.dim(0)) + " " + std::to_string(flows.dim(1)) + " " +
                    std::to_string(flows.dim(2)) + "\n";
  const std::size_t c = flows.dim(2);
  for (std::size_t r = 0; r < flows.dim(0) * flows.dim(1); ++r) {
    for (std::size_t j = 0; j < c; ++j) {
      if (j) out += ',';
      out += detail::format_double(flows[r * c + j]);
    }
    out += '\n';
  }
  return out;
}

void save_flows(const std::filesystem::path& path, const NdArray& flows) {
  detail::write_text_file(path, format_flows(flows));
}

NdArray parse_timestamps(const std::string& text) {
  auto lines = lines_of(text);
  std::vector<double> vals;
  std::size_t k = 0;
  for (std::size_t r = 0; r < lines.size(); ++r) {
    auto cells = detail::split(lines[r], ',');
    if (r == 0) k = cells.size();
    if (cells.size() != k)
      throw ParseError("expected " + std::to_string(k) + " features, found " + std::to_string(cells.size()), r + 1);
    for (const auto& cell : cells) {
      auto v = detail::parse_double(detail::trim(cell));
      if (!v || !std::isfinite(*v)) throw ParseError("non-numeric cell '" + cell + "'", r + 1);
      vals.push_back(*v);
    }
  }
  if (lines.empty()) throw ParseError("timestamps file is empty", 1);
  return NdArray(Shape{lines.size(), k}, std::move(vals));
}

NdArray load_timestamps(const std::filesystem::path& path, std::optional<std::size_t> expected_steps) {
  NdArray ts = parse_timestamps(detail::read_text_file(path));
  if (expected_steps && ts.dim(0) != *expected_steps)
    throw std::invalid_argument(path.string() + ": " + std::to_string(ts.dim(0)) + " timestamp rows but " +
                                std::to_string(*expected_steps) + " flow steps");
  return ts;
}

std::string format_timestamps(const NdArray& ts) {
  std::string out;
  const std::size_t k = ts.dim(1);
  for (std::size_t r = 0; r < ts.dim(0); ++r) {
    for (std::size_t j = 0; j < k; ++j) {
      if (j) out += ',';
      out += detail::format_double(ts[r * k + j]);
    }
    out += '\n';
  }
  return out;
}

void save_timestamps(const std::filesystem::path& path, const NdArray& ts) {
  detail::write_text_file(path, format_timestamps(ts));
}

FlowDataset load_dataset_dir(const std::filesystem::path& dir) {
  for (const char* f : {DataLayout::graph, DataLayout::flows, DataLayout::timestamps})
    if (!std::filesystem::exists(dir / f)) throw std::runtime_error("missing data file " + (dir / f).string());
  auto g = std::make_shared<const SpatioTemporalGraph>(load_graph(dir / DataLayout::graph));
  FlowDataset ds;
  ds.flows = load_flows(dir / DataLayout::flows, static_cast<std::size_t>(g->num_nodes()));
  ds.timestamps = load_timestamps(dir / DataLayout::timestamps, ds.flows.dim(0));
  ds.graph = std::move(g);
  ds.validate();
  return ds;
}

void save_dataset_dir(const std::filesystem::path& dir, const SpatioTemporalGraph& g, const FlowDataset& ds) {
  std::filesystem::create_directories(dir);
  save_graph(dir / DataLayout::graph, g);
  save_flows(dir / DataLayout::flows, ds.flows);
  save_timestamps(dir / DataLayout::timestamps, ds.timestamps);
}

}  // namespace stg
