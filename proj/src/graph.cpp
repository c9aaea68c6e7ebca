#include "stgormer/graph.hpp"

#include <algorithm>
#include <charconv>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include "stgormer/io_util.hpp"

namespace stg {

SpatioTemporalGraph::SpatioTemporalGraph(int num_nodes, std::vector<Edge> edges, bool directed)
    : num_nodes_(num_nodes), directed_(directed) {
  if (num_nodes < 0) throw std::invalid_argument("negative node count");
  std::set<Edge> seen;
  for (const auto& [u, v] : edges) {
    if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes)
      throw std::invalid_argument("edge (" + std::to_string(u) + ", " + std::to_string(v) +
                                  ") out of range for " + std::to_string(num_nodes) + " nodes");
    if (u == v) throw std::invalid_argument("self-loop at node " + std::to_string(u));
    Edge key = directed ? Edge{u, v} : Edge{std::min(u, v), std::max(u, v)};
    if (!seen.insert(key).second)
      throw std::invalid_argument("duplicate edge (" + std::to_string(u) + ", " + std::to_string(v) + ")");
  }
  for (const auto& [u, v] : seen) {
    arcs_.emplace_back(u, v);
    if (!directed) arcs_.emplace_back(v, u);
  }
  std::sort(arcs_.begin(), arcs_.end());
  succ_.assign(static_cast<std::size_t>(num_nodes), {});
  for (const auto& [u, v] : arcs_) succ_[static_cast<std::size_t>(u)].push_back(v);
}

std::vector<int> SpatioTemporalGraph::neighbours(int v) const {
  std::set<int> out(succ_.at(static_cast<std::size_t>(v)).begin(), succ_[static_cast<std::size_t>(v)].end());
  for (const auto& [a, b] : arcs_)
    if (b == v) out.insert(a);
  return {out.begin(), out.end()};
}

SpatioTemporalGraph SpatioTemporalGraph::permuted(const std::vector<int>& perm) const {
  if (perm.size() != static_cast<std::size_t>(num_nodes_)) throw std::invalid_argument("permutation size mismatch");
  std::vector<Edge> edges;
  for (const auto& [u, v] : arcs_) {
    if (!directed_ && u > v) continue;
    edges.emplace_back(perm[static_cast<std::size_t>(u)], perm[static_cast<std::size_t>(v)]);
  }
  return {num_nodes_, std::move(edges), directed_};
}

SpatioTemporalGraph SpatioTemporalGraph::with_edge(int u, int v) const {
  std::vector<Edge> edges;
  for (const auto& [a, b] : arcs_) {
    if (!directed_ && a > b) continue;
    edges.emplace_back(a, b);
  }
  edges.emplace_back(u, v);
  return {num_nodes_, std::move(edges), directed_};
}

Degrees degrees(const SpatioTemporalGraph& g) {
  Degrees d{std::vector<int>(static_cast<std::size_t>(g.num_nodes()), 0),
            std::vector<int>(static_cast<std::size_t>(g.num_nodes()), 0)};
  for (const auto& [u, v] : g.arcs()) {
    ++d.outdegree[static_cast<std::size_t>(u)];
    ++d.indegree[static_cast<std::size_t>(v)];
  }
  return d;
}

SpdMatrix::SpdMatrix(int n, std::vector<int> values) : n_(n), values_(std::move(values)) {
  if (values_.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n))
    throw std::invalid_argument("SPD matrix size mismatch");
  for (int x : values_) max_observed_ = std::max(max_observed_, x);
}

SpdMatrix shortest_path_matrix(const SpatioTemporalGraph& g) {
  const int n = g.num_nodes();
  const auto un = static_cast<std::size_t>(n);
  std::vector<int> dist(un * un, SpdMatrix::kUnreachable);
  std::deque<int> queue;
  for (int s = 0; s < n; ++s) {
    int* row = dist.data() + static_cast<std::size_t>(s) * un;
    row[s] = 0;
    queue.assign(1, s);
    while (!queue.empty()) {
      int u = queue.front();
      queue.pop_front();
      for (int v : g.successors(u)) {
        if (row[v] == SpdMatrix::kUnreachable) {
          row[v] = row[u] + 1;
          queue.push_back(v);
        }
      }
    }
  }
  return {n, std::move(dist)};
}

SpatioTemporalGraph parse_graph(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  int n = -1;
  bool directed = true;
  std::vector<Edge> edges;
  std::set<Edge> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fields = detail::split(line, ' ');
    if (n < 0) {
      if (fields.size() != 2) throw ParseError("expected header \"<N> <directed|undirected>\"", lineno);
      auto parsed = detail::parse_int(fields[0]);
      if (!parsed || *parsed < 0) throw ParseError("invalid node count '" + fields[0] + "'", lineno);
      n = *parsed;
      if (fields[1] == "directed") directed = true;
      else if (fields[1] == "undirected") directed = false;
      else throw ParseError("expected 'directed' or 'undirected', got '" + fields[1] + "'", lineno);
      continue;
    }
    if (fields.size() != 2) throw ParseError("expected \"<u> <v>\"", lineno);
    auto u = detail::parse_int(fields[0]);
    auto v = detail::parse_int(fields[1]);
    if (!u || !v) throw ParseError("non-integer node index", lineno);
    if (*u < 0 || *u >= n || *v < 0 || *v >= n)
      throw ParseError("node index out of range [0, " + std::to_string(n) + ")", lineno);
    if (*u == *v) throw ParseError("self-loop at node " + std::to_string(*u), lineno);
    Edge key = directed ? Edge{*u, *v} : Edge{std::min(*u, *v), std::max(*u, *v)};
    if (!seen.insert(key).second)
      throw ParseError("duplicate edge " + std::to_string(*u) + " " + std::to_string(*v), lineno);
    edges.emplace_back(*u, *v);
  }
  if (n < 0) throw ParseError("missing header", lineno);
  return {n, std::move(edges), directed};
}

SpatioTemporalGraph load_graph(const std::filesystem::path& path) {
  return parse_graph(detail::read_text_file(path));
}

std::string format_graph(const SpatioTemporalGraph& g) {
  std::string out = std::to_string(g.num_nodes()) + (g.directed() ? " directed\n" : " undirected\n");
  for (const auto& [u, v] : g.arcs()) {
    if (!g.directed() && u > v) continue;
    out += std::to_string(u) + " " + std::to_string(v) + "\n";
  }
  return out;
}

void save_graph(const std::filesystem::path& path, const SpatioTemporalGraph& g) {
  detail::write_text_file(path, format_graph(g));
}

}  // namespace stg
