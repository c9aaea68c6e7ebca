#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stg {

/// Raised for malformed input files. Carries the 1-based line number when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

using Edge = std::pair<int, int>;

/// Fixed traffic graph over N nodes. Undirected graphs are stored as a
/// symmetric directed edge set; edges are kept sorted and unique.
class SpatioTemporalGraph {
 public:
  SpatioTemporalGraph() = default;
  /// Throws std::invalid_argument on self-loops, duplicates or out-of-range ends.
  /// For undirected graphs each listed pair contributes both directions.
  SpatioTemporalGraph(int num_nodes, std::vector<Edge> edges, bool directed);

  int num_nodes() const noexcept { return num_nodes_; }
  bool directed() const noexcept { return directed_; }
  /// All directed arcs, sorted lexicographically.
  const std::vector<Edge>& arcs() const noexcept { return arcs_; }
  std::size_t num_arcs() const noexcept { return arcs_.size(); }
  /// Out-neighbours of v in ascending order.
  const std::vector<int>& successors(int v) const { return succ_.at(static_cast<std::size_t>(v)); }
  /// Neighbours in either direction, ascending, without duplicates.
  std::vector<int> neighbours(int v) const;

  /// Relabel node i as perm[i].
  SpatioTemporalGraph permuted(const std::vector<int>& perm) const;
  /// Copy with one extra arc (both directions if undirected).
  SpatioTemporalGraph with_edge(int u, int v) const;

  bool operator==(const SpatioTemporalGraph&) const = default;

 private:
  int num_nodes_ = 0;
  bool directed_ = true;
  std::vector<Edge> arcs_;
  std::vector<std::vector<int>> succ_;
};

struct Degrees {
  std::vector<int> indegree;
  std::vector<int> outdegree;
};

Degrees degrees(const SpatioTemporalGraph& g);

/// All-pairs hop distances; -1 marks "no path".
class SpdMatrix {
 public:
  static constexpr int kUnreachable = -1;

  SpdMatrix() = default;
  SpdMatrix(int n, std::vector<int> values);

  int size() const noexcept { return n_; }
  int at(int i, int j) const { return values_[static_cast<std::size_t>(i) * n_ + j]; }
  const std::vector<int>& values() const noexcept { return values_; }
  int max_observed() const noexcept { return max_observed_; }

  bool operator==(const SpdMatrix&) const = default;

 private:
  int n_ = 0;
  std::vector<int> values_;
  int max_observed_ = 0;
};

/// Breadth-first search from every source.
SpdMatrix shortest_path_matrix(const SpatioTemporalGraph& g);

/// Edge-list text: "<N> <directed|undirected>" then "<u> <v>" lines; '#' comments.
SpatioTemporalGraph parse_graph(const std::string& text);
SpatioTemporalGraph load_graph(const std::filesystem::path& path);
/// Canonical form: undirected graphs list each pair once as (min, max); sorted.
std::string format_graph(const SpatioTemporalGraph& g);
void save_graph(const std::filesystem::path& path, const SpatioTemporalGraph& g);

}  // namespace stg
