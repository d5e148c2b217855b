#pragma once

#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "prodigy/graph.hpp"

namespace testing {

using namespace prodigy;

inline Matrix ones_features(int n, int width = 2) { return Matrix::Ones(n, width); }

inline Graph path_graph(int n, bool directed = false, int width = 2) {
  std::vector<Edge> edges;
  for (int i = 0; i + 1 < n; ++i) edges.push_back({i, 0, i + 1});
  Matrix f(n, width);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < width; ++j) f(i, j) = 0.1 * i + 0.01 * j;
  return Graph(f, edges, 1, directed);
}

inline Graph random_graph(int n, double p, Rng& rng, bool directed = false, int relations = 1, int width = 3) {
  std::vector<Edge> edges;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j || (!directed && j < i)) continue;
      if (u(rng) < p) edges.push_back({i, static_cast<RelationId>(rng() % relations), j});
    }
  Matrix f(n, width);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < width; ++j) f(i, j) = normal(rng);
  return Graph(f, edges, relations, directed);
}

/// All-pairs shortest path lengths by Floyd-Warshall over the traversal relation; -1 if unreachable.
inline std::vector<std::vector<int>> all_pairs_distance(const Graph& g) {
  const int n = g.num_nodes();
  const int inf = std::numeric_limits<int>::max() / 4;
  std::vector<std::vector<int>> d(n, std::vector<int>(n, inf));
  for (int i = 0; i < n; ++i) d[i][i] = 0;
  for (const Edge& e : g.edges()) {
    if (e.u != e.v) d[e.u][e.v] = 1;
    if (!g.directed() && e.u != e.v) d[e.v][e.u] = 1;
  }
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (d[i][k] + d[k][j] < d[i][j]) d[i][j] = d[i][k] + d[k][j];
  for (auto& row : d)
    for (int& x : row)
      if (x >= inf) x = -1;
  return d;
}

/// Distance from the nearest seed, per node (-1 unreachable).
inline std::vector<int> seed_distance(const std::vector<std::vector<int>>& apd, const std::vector<NodeId>& seeds) {
  std::vector<int> out(apd.size(), -1);
  for (std::size_t v = 0; v < apd.size(); ++v)
    for (NodeId s : seeds) {
      const int d = apd[static_cast<std::size_t>(s)][v];
      if (d >= 0 && (out[v] < 0 || d < out[v])) out[v] = d;
    }
  return out;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("prodigy_test_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream is(p);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace testing
