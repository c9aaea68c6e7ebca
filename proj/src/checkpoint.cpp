#include "stgormer/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "stgormer/io_util.hpp"

namespace stg {

namespace {

constexpr const char* kMagic = "stgormer-checkpoint 1";

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + detail::format_double(v[i]);
  return out;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& cell : detail::split(s, ',')) {
    auto v = detail::parse_double(detail::trim(cell));
    if (!v) throw std::runtime_error("checkpoint: bad normalizer value '" + cell + "'");
    out.push_back(*v);
  }
  return out;
}

struct Header {
  RunConfig config;
  SpatioTemporalGraph graph;
  std::optional<Normalizer> normalizer;
};

Header read_header(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw std::runtime_error("not a checkpoint file");
  std::string section, config_text, graph_text, norm_text;
  while (std::getline(in, line)) {
    if (line == "[parameters]") break;
    if (!line.empty() && line.front() == '[') {
      section = line;
      continue;
    }
    if (section == "[config]") config_text += line + "\n";
    else if (section == "[graph]") graph_text += line + "\n";
    else if (section == "[normalizer]") norm_text += line + "\n";
  }
  if (line != "[parameters]") throw std::runtime_error("checkpoint: missing [parameters] section");
  Header h;
  h.config = parse_run_config(config_text);
  h.graph = parse_graph(graph_text);
  if (detail::trim(norm_text) != "none") {
    std::vector<std::string> problems;
    Normalizer n;
    for (const auto& [k, v] : parse_key_values(norm_text, problems)) {
      if (k == "mean") n.mean = parse_list(v);
      else if (k == "stddev") n.stddev = parse_list(v);
    }
    if (!problems.empty() || n.mean.size() != n.stddev.size() || n.mean.empty())
      throw std::runtime_error("checkpoint: malformed normalizer section");
    h.normalizer = std::move(n);
  }
  return h;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const StgormerModel& model) {
  if (!(config.model == model.config()))
    throw std::invalid_argument("save_checkpoint: run config does not describe this model");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kMagic << "\n[config]\n" << to_text(config) << "[graph]\n" << format_graph(model.graph()) << "[normalizer]\n";
  if (model.normalizer())
    out << "mean = " << join(model.normalizer()->mean) << "\nstddev = " << join(model.normalizer()->stddev) << "\n";
  else
    out << "none\n";
  out << "[parameters]\n";
  write_parameters(out, model.parameters());
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  Header h = read_header(in);
  LoadedCheckpoint lc{h.config, StgormerModel(h.config.model, h.graph)};
  if (h.normalizer) lc.model.set_normalizer(*h.normalizer);
  read_parameters(in, lc.model.parameters());
  return lc;
}

void restore_checkpoint(const std::filesystem::path& path, StgormerModel& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  Header h = read_header(in);
  if (!(h.config.model == model.config())) throw std::runtime_error("checkpoint config does not match the model");
  if (!(h.graph == model.graph())) throw std::runtime_error("checkpoint graph does not match the model");
  read_parameters(in, model.parameters());
  if (h.normalizer) model.set_normalizer(*h.normalizer);
}

}  // namespace stg
