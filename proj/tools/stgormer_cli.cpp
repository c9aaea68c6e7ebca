// stgormer: synthesize data, train, evaluate, forecast and inspect encodings.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stgormer/stgormer.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Carries the exit code out of a failed subcommand.
struct CommandError {
  int code;
  std::string message;
};

int exit_code(stg_status s) {
  switch (s) {
    case STG_ERR_USAGE: return 1;
    case STG_ERR_NUMERICAL: return 3;
    default: return 2;
  }
}

void check(stg_status s) {
  if (s != STG_OK) throw CommandError{exit_code(s), stg_last_error()};
}

[[noreturn]] void data_error(const std::string& message) { throw CommandError{2, message}; }

std::string take(char* s) {
  std::string out = s ? s : "";
  stg_string_free(s);
  return out;
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(ptr); }
  T** out() { return &ptr; }
  T* get() const { return ptr; }
};

using Config = Handle<stg_config, stg_config_free>;
using Dataset = Handle<stg_dataset, stg_dataset_free>;
using Model = Handle<stg_model, stg_model_free>;
using Graph = Handle<stg_graph, stg_graph_free>;

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) data_error("cannot write " + path.string());
  out << text;
  if (!out) data_error("failed writing " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) data_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string now_iso8601() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string shortest(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, end);
}

json config_json(const std::string& text) {
  json j = json::object();
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find(" = ");
    if (eq != std::string::npos) j[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return j;
}

std::string reference_footer(const std::string& title, const std::string& table) {
  std::ostringstream out;
  out << "\n" << title << "\n";
  std::istringstream in(table);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cols;
    std::size_t start = 0, tab;
    while ((tab = line.find('\t', start)) != std::string::npos) {
      cols.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    cols.push_back(line.substr(start));
    if (cols.size() == 1) {  // "key = value"
      auto eq = cols[0].find(" = ");
      if (eq == std::string::npos) continue;
      cols = {cols[0].substr(0, eq), cols[0].substr(eq + 3)};
    }
    std::string row = "  " + cols[0];
    row.resize(std::max<std::size_t>(row.size() + 1, 30), ' ');
    row += "default " + cols[1];
    if (cols.size() > 2) {
      row.resize(std::max<std::size_t>(row.size() + 1, 52), ' ');
      row += cols[2];
    }
    out << row << "\n";
  }
  return out.str();
}

// ---- flow / timestamp files for predict -------------------------------------------------

struct FlowFile {
  std::size_t t = 0, n = 0, c = 0;
  std::vector<double> values;
};

double parse_number(const std::string& cell, const fs::path& path, std::size_t line) {
  double v = 0;
  const char* b = cell.data();
  const char* e = b + cell.size();
  while (b < e && *b == ' ') ++b;
  while (e > b && (e[-1] == ' ' || e[-1] == '\r')) --e;
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e || b == e)
    data_error(path.string() + ": line " + std::to_string(line) + ": not a number '" + cell + "'");
  return v;
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0, comma;
  while ((comma = line.find(',', start)) != std::string::npos) {
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  cells.push_back(line.substr(start));
  return cells;
}

FlowFile read_flow_file(const fs::path& path) {
  std::istringstream in(read_file(path));
  FlowFile f;
  std::string line;
  if (!std::getline(in, line)) data_error(path.string() + ": empty file");
  std::istringstream header(line);
  if (!(header >> f.t >> f.n >> f.c)) data_error(path.string() + ": line 1: expected header \"T N C\"");
  std::size_t lineno = 1, rows = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split_commas(line);
    if (cells.size() != f.c)
      data_error(path.string() + ": line " + std::to_string(lineno) + ": expected " + std::to_string(f.c) + " values");
    for (const auto& cell : cells) f.values.push_back(parse_number(cell, path, lineno));
    ++rows;
  }
  if (rows != f.t * f.n)
    data_error(path.string() + ": expected " + std::to_string(f.t * f.n) + " data rows (T*N), found " +
               std::to_string(rows));
  return f;
}

std::vector<std::vector<double>> read_timestamp_rows(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    for (const auto& cell : split_commas(line)) row.push_back(parse_number(cell, path, lineno));
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---- subcommands -------------------------------------------------------------------------

struct SynthArgs {
  std::string spec;
  std::vector<std::string> overrides;
  std::string out;
};

int run_synth(const SynthArgs& a) {
  auto ov = c_strings(a.overrides);
  check(stg_synthesize(a.spec.empty() ? nullptr : a.spec.c_str(), ov.data(), ov.size(), a.out.c_str()));
  std::cout << "wrote graph.txt, flows.txt, timestamps.txt, synth.cfg to " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::vector<std::string> overrides;
  bool quiet = false;
};

int epoch_printer(const char* record, void* user) {
  if (*static_cast<bool*>(user)) return 0;
  auto j = json::parse(record);
  std::printf("epoch %3d  loss %.6f  mae %.6f  lb %.6f  val_mae %.6f  lr %.3g\n", j["epoch"].get<int>(),
              j["train_loss"].get<double>(), j["train_mae"].get<double>(), j["train_lb"].get<double>(),
              j["val_mae"].get<double>(), j["learning_rate"].get<double>());
  std::fflush(stdout);
  return 0;
}

int run_train(const TrainArgs& a) {
  auto ov = c_strings(a.overrides);
  Config cfg;
  check(stg_config_load(a.config.empty() ? nullptr : a.config.c_str(), ov.data(), ov.size(), cfg.out()));
  Dataset ds;
  check(stg_dataset_load(a.data.c_str(), ds.out()));

  const fs::path out(a.out);
  fs::create_directories(out);
  const std::string config_text = take([&] {
    char* s = nullptr;
    check(stg_config_text(cfg.get(), &s));
    return s;
  }());
  write_file(out / "config.cfg", config_text);

  json manifest;
  manifest["version"] = stg_version();
  manifest["command"] = "train";
  manifest["config"] = config_json(config_text);
  manifest["config_file"] = a.config.empty() ? json(nullptr) : json(a.config);
  manifest["overrides"] = a.overrides;
  manifest["seed"] = {{"model", manifest["config"]["model.seed"]}, {"train", manifest["config"]["train.seed"]}};
  manifest["data_dir"] = a.data;
  manifest["outputs"] = {{"checkpoint", "model.ckpt"}, {"history", "history.jsonl"}, {"config", "config.cfg"}};
  manifest["started_at"] = now_iso8601();
  manifest["finished_at"] = nullptr;
  manifest["status"] = "running";
  write_file(out / "manifest.json", manifest.dump(2) + "\n");

  Model model;
  char* history = nullptr;
  bool quiet = a.quiet;
  const stg_status s = stg_train(cfg.get(), ds.get(), epoch_printer, &quiet, model.out(), &history);
  if (s != STG_OK) {
    manifest["status"] = "failed";
    manifest["error"] = stg_last_error();
    manifest["finished_at"] = now_iso8601();
    write_file(out / "manifest.json", manifest.dump(2) + "\n");
    check(s);
  }
  write_file(out / "history.jsonl", take(history));
  check(stg_model_save(model.get(), (out / "model.ckpt").string().c_str()));

  manifest["status"] = "completed";
  manifest["finished_at"] = now_iso8601();
  std::size_t params = 0;
  check(stg_model_parameter_count(model.get(), &params));
  manifest["parameters"] = params;
  write_file(out / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "checkpoint " << (out / "model.ckpt").string() << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string threshold;  // empty: the checkpoint's data.threshold
  std::string report;
};

int run_eval(const EvalArgs& a) {
  Model model;
  check(stg_model_load(a.checkpoint.c_str(), model.out()));
  Dataset ds;
  check(stg_dataset_load(a.data.c_str(), ds.out()));
  double threshold = 0;
  if (a.threshold.empty()) {
    Config cfg;
    check(stg_model_config(model.get(), cfg.out()));
    char* text = nullptr;
    check(stg_config_text(cfg.get(), &text));
    auto j = config_json(take(text));
    threshold = std::stod(j["data.threshold"].get<std::string>());
  } else {
    threshold = parse_number(a.threshold, "--threshold", 0);
  }
  char* report = nullptr;
  check(stg_evaluate(model.get(), ds.get(), a.split.c_str(), threshold, &report));
  const std::string text = take(report);
  auto j = json::parse(text);
  const fs::path path = a.report.empty() ? fs::path(a.checkpoint).parent_path() / ("eval_" + a.split + ".json")
                                         : fs::path(a.report);
  write_file(path, text + "\n");
  std::cout << "split " << a.split << "  targets " << j["count"].get<std::size_t>() << "\n";
  std::cout << "mae  " << shortest(j["mae"].get<double>()) << "\n";
  std::cout << "rmse " << shortest(j["rmse"].get<double>()) << "\n";
  std::cout << "mape " << shortest(j["mape"].get<double>() * 100.0) << "%\n";
  std::cout << "report " << path.string() << "\n";
  return 0;
}

struct PredictArgs {
  std::string checkpoint;
  std::string window;
  std::string timestamps;
  std::string out;
};

int run_predict(const PredictArgs& a) {
  Model model;
  check(stg_model_load(a.checkpoint.c_str(), model.out()));
  stg_model_dims dims{};
  check(stg_model_dims_get(model.get(), &dims));
  auto w = read_flow_file(a.window);
  if (w.t != dims.t_in || w.n != dims.nodes || w.c != dims.channels)
    data_error("window " + a.window + " is " + std::to_string(w.t) + "x" + std::to_string(w.n) + "x" +
               std::to_string(w.c) + " but the model expects T_in=" + std::to_string(dims.t_in) +
               ", N=" + std::to_string(dims.nodes) + ", C=" + std::to_string(dims.channels));
  auto rows = read_timestamp_rows(a.timestamps);
  if (rows.size() != dims.t_in)
    data_error("timestamps " + a.timestamps + " has " + std::to_string(rows.size()) + " rows but T_in=" +
               std::to_string(dims.t_in));
  std::vector<double> ts;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != dims.time_features)
      data_error(a.timestamps + ": line " + std::to_string(i + 1) + ": expected " +
                 std::to_string(dims.time_features) + " features");
    ts.insert(ts.end(), rows[i].begin(), rows[i].end());
  }
  std::vector<double> y(dims.t_out * dims.nodes * dims.channels);
  check(stg_predict(model.get(), w.values.data(), ts.data(), y.data()));

  std::string text = std::to_string(dims.t_out) + " " + std::to_string(dims.nodes) + " " +
                     std::to_string(dims.channels) + "\n";
  for (std::size_t r = 0; r < dims.t_out * dims.nodes; ++r) {
    for (std::size_t c = 0; c < dims.channels; ++c) text += (c ? "," : "") + shortest(y[r * dims.channels + c]);
    text += "\n";
  }
  write_file(a.out, text);
  std::cout << "forecast " << a.out << "\n";
  return 0;
}

struct EncodeArgs {
  std::string graph;
  std::string out;
  std::string checkpoint;
};

std::string matrix_csv(std::size_t n, const auto& values) {
  std::string text;
  for (std::size_t j = 0; j < n; ++j) text += (j ? "," : "") + std::to_string(j);
  text += "\n";
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const auto v = values[i * n + j];
      if constexpr (std::is_same_v<std::decay_t<decltype(v)>, double>)
        text += (j ? "," : "") + shortest(v);
      else
        text += (j ? "," : "") + std::to_string(v);
    }
    text += "\n";
  }
  return text;
}

int run_encode(const EncodeArgs& a) {
  Graph g;
  check(stg_graph_load(a.graph.c_str(), g.out()));
  const std::size_t n = stg_graph_num_nodes(g.get());
  std::vector<int> in(n), out(n), spd(n * n);
  check(stg_graph_degrees(g.get(), in.data(), out.data()));
  check(stg_graph_spd(g.get(), spd.data()));
  const fs::path dir(a.out);
  std::string deg = "in,out\n";
  for (std::size_t v = 0; v < n; ++v) deg += std::to_string(in[v]) + "," + std::to_string(out[v]) + "\n";
  write_file(dir / "degrees.csv", deg);
  write_file(dir / "spd.csv", matrix_csv(n, spd));
  std::cout << "wrote degrees.csv, spd.csv";
  if (!a.checkpoint.empty()) {
    Model model;
    check(stg_model_load(a.checkpoint.c_str(), model.out()));
    stg_model_dims dims{};
    check(stg_model_dims_get(model.get(), &dims));
    if (dims.nodes != n)
      data_error("checkpoint graph has " + std::to_string(dims.nodes) + " nodes but " + a.graph + " has " +
                 std::to_string(n));
    std::vector<double> bias(n * n);
    check(stg_model_sa_bias(model.get(), bias.data()));
    write_file(dir / "sa_bias.csv", matrix_csv(n, bias));
    std::cout << ", sa_bias.csv";
  }
  std::cout << " to " << a.out << "\n";
  return 0;
}

struct StudyArgs {
  std::string config;
  std::string data;
  std::string axis;
  std::string out;
  std::vector<std::string> overrides;
};

int run_study(const StudyArgs& a) {
  auto ov = c_strings(a.overrides);
  Config cfg;
  check(stg_config_load(a.config.empty() ? nullptr : a.config.c_str(), ov.data(), ov.size(), cfg.out()));
  Dataset ds;
  check(stg_dataset_load(a.data.c_str(), ds.out()));
  char* csv = nullptr;
  check(stg_study(cfg.get(), ds.get(), a.axis.c_str(), &csv));
  const std::string text = take(csv);
  write_file(a.out, text);
  std::cout << text;
  return 0;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal graph transformer for traffic forecasting", "stgormer"};
  app.require_subcommand(1);
  app.set_version_flag("--version", stg_version());
  app.option_defaults()->always_capture_default();

  char* config_ref = nullptr;
  char* synth_ref = nullptr;
  stg_config_reference(&config_ref);
  stg_synth_reference(&synth_ref);
  const std::string config_table = take(config_ref), synth_table = take(synth_ref);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic traffic dataset");
  s->add_option("--spec", synth.spec, "Spec file of synth.* = value lines")->default_str("none: built-in spec");
  s->add_option("--override", synth.overrides, "Spec override key=value, repeatable")->default_str("none");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->footer(reference_footer("Spec keys:", synth_table));

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model; writes model.ckpt, history.jsonl, manifest.json");
  t->add_option("--config", train.config, "Config file of key = value lines")->default_str("none: built-in defaults");
  t->add_option("--data", train.data, "Dataset directory")->required();
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--override", train.overrides, "Config override key=value, repeatable")->default_str("none");
  t->add_flag("--quiet", train.quiet, "Do not print per-epoch progress (default: off)");
  t->footer(reference_footer("Config keys:", config_table));

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint with masked MAE, RMSE and MAPE");
  e->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  e->add_option("--data", eval.data, "Dataset directory")->required();
  e->add_option("--split", eval.split, "Split to score")->check(CLI::IsMember({"train", "val", "test"}));
  e->add_option("--threshold", eval.threshold, "Mask: targets must exceed this")
      ->default_str("checkpoint data.threshold");
  e->add_option("--report", eval.report, "JSON report path")->default_str("<checkpoint dir>/eval_<split>.json");

  PredictArgs predict;
  auto* p = app.add_subcommand("predict", "Forecast the next T_out steps from one input window");
  p->add_option("--checkpoint", predict.checkpoint, "Checkpoint file")->required();
  p->add_option("--window", predict.window, "Flow file with T_in steps")->required();
  p->add_option("--timestamps", predict.timestamps, "Timestamp file with T_in rows")->required();
  p->add_option("--out", predict.out, "Forecast flow file")->required();

  EncodeArgs encode;
  auto* en = app.add_subcommand("encode", "Dump degree, SPD and (with a checkpoint) attention bias CSVs");
  en->add_option("--graph", encode.graph, "Graph file")->required();
  en->add_option("--out", encode.out, "Output directory")->required();
  en->add_option("--checkpoint", encode.checkpoint, "Checkpoint for sa_bias.csv")->default_str("none");

  StudyArgs study;
  auto* st = app.add_subcommand("study", "Train one model per variant and tabulate test metrics");
  st->add_option("--config", study.config, "Config file of key = value lines")->default_str("none: built-in defaults");
  st->add_option("--data", study.data, "Dataset directory")->required();
  st->add_option("--axis", study.axis, "ablation, block_count or block_order")->required();
  st->add_option("--out", study.out, "CSV output path")->required();
  st->add_option("--override", study.overrides, "Config override key=value, repeatable")->default_str("none");
  st->footer(reference_footer("Config keys:", config_table));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForVersion& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    std::cerr << "error: " << one_line(ex.what()) << " (see --help)\n";
    return 1;
  }

  try {
    if (*s) return run_synth(synth);
    if (*t) return run_train(train);
    if (*e) return run_eval(eval);
    if (*p) return run_predict(predict);
    if (*en) return run_encode(encode);
    if (*st) return run_study(study);
  } catch (const CommandError& err) {
    std::cerr << "error: " << one_line(err.message) << "\n";
    return err.code;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << one_line(ex.what()) << "\n";
    return 2;
  }
  return 1;
}
