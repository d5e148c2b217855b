#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "prodigy/rng.hpp"

namespace prodigy {

using NodeId = std::int32_t;
using RelationId = std::int32_t;
using EdgeId = std::int32_t;
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct Edge {
  NodeId u = 0;
  RelationId r = 0;
  NodeId v = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// One traversal step out of a node.
struct Adjacency {
  NodeId node;
  RelationId relation;
  EdgeId edge;
};

enum class Level { node, edge };

/// A classification input: one node, or an ordered endpoint pair. `target_edge` names
/// the graph edge whose label is being predicted; it is hidden from the data graph.
struct Datapoint {
  std::vector<NodeId> nodes;
  Level level = Level::node;
  std::optional<EdgeId> target_edge;

  static Datapoint node(NodeId n) { return {{n}, Level::node, std::nullopt}; }
  static Datapoint edge(NodeId a, NodeId b, std::optional<EdgeId> target = std::nullopt) {
    return {{a, b}, Level::edge, target};
  }
  friend bool operator==(const Datapoint&, const Datapoint&) = default;
};

/// Validates the node/edge arity of a datapoint.
void validate_datapoint(const Datapoint& dp);

/// Immutable relation-typed multigraph with dense node ids.
///
/// Edges are stored once as (u, r, v). With `directed == false` traversal treats every
/// edge symmetrically; otherwise traversal follows u -> v only.
class Graph {
 public:
  Graph(Matrix node_features, std::vector<Edge> edges, int num_relations, bool directed);

  int num_nodes() const { return static_cast<int>(features_.rows()); }
  int num_edges() const { return static_cast<int>(edges_.size()); }
  int num_relations() const { return num_relations_; }
  int feature_dim() const { return static_cast<int>(features_.cols()); }
  bool directed() const { return directed_; }

  const Matrix& features() const { return features_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(EdgeId e) const { return edges_[static_cast<std::size_t>(e)]; }

  /// Traversal neighbors (out-neighbors when directed).
  std::span<const Adjacency> neighbors(NodeId u) const;
  /// Every edge touching `u`, regardless of direction.
  std::span<const Adjacency> incident(NodeId u) const;
  int degree(NodeId u) const { return static_cast<int>(incident(u).size()); }

  void check_node(NodeId u) const;

 private:
  Matrix features_;
  std::vector<Edge> edges_;
  int num_relations_;
  bool directed_;
  std::vector<std::size_t> nbr_offsets_;
  std::vector<Adjacency> nbrs_;
  std::vector<std::size_t> inc_offsets_;
  std::vector<Adjacency> inc_;
};

/// Class assignment for a set of datapoints (nodes, or edges for relation tasks).
struct Labeling {
  Level level = Level::node;
  std::vector<Datapoint> items;
  std::vector<int> classes;
  int num_classes = 0;

  std::size_t size() const { return items.size(); }
  /// Item indices grouped by class.
  std::vector<std::vector<std::size_t>> by_class() const;
  void validate(const Graph& g) const;
};

/// Labels every edge by its relation id; each item hides its own edge.
Labeling relation_labeling(const Graph& g);

// ---- loaders ---------------------------------------------------------------

/// Reads `u<TAB>r<TAB>v` rows and one feature row per node.
Graph load_graph(const std::filesystem::path& edge_path, const std::filesystem::path& feature_path,
                 bool directed);

/// Reads `node_id<TAB>class_id` rows.
Labeling load_labeling(const std::filesystem::path& path, const Graph& g);

void save_graph(const Graph& g, const std::filesystem::path& edge_path,
                const std::filesystem::path& feature_path);
void save_labeling(const Labeling& lab, const std::filesystem::path& path);

// ---- neighborhoods ---------------------------------------------------------

/// Nodes at shortest-path distance exactly `hops` from the nearest seed, sorted.
std::vector<NodeId> exact_hop_neighbors(const Graph& g, std::span<const NodeId> seeds, int hops);

struct Subgraph {
  std::vector<NodeId> nodes;  // sorted
  std::vector<EdgeId> edges;  // sorted; every edge with both endpoints in `nodes`
};

/// Seeds plus a sample of each exact hop ring up to `hops`. Each frontier node contributes
/// at most `fanout_cap` uniformly chosen ring members; nullopt keeps every member.
Subgraph khop_union(const Graph& g, std::span<const NodeId> seeds, int hops,
                    std::optional<std::size_t> fanout_cap, Rng& rng);

// ---- synthetic fixtures ----------------------------------------------------

struct PlantedGraph {
  Graph graph;
  Labeling labels;
};

/// Stochastic block model, undirected, single relation. Features are the block one-hot
/// plus i.i.d. Gaussian noise of standard deviation `feature_noise`.
PlantedGraph synth_planted_graph(int num_blocks, int nodes_per_block, double p_in, double p_out,
                                 double feature_noise, std::uint64_t seed);

}  // namespace prodigy
