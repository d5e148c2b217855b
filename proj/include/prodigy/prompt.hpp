#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prodigy/few_shot_prompt.hpp"
#include "prodigy/graph.hpp"

namespace prodigy {

struct LocalEdge {
  int u = 0;
  RelationId r = 0;
  int v = 0;
  friend bool operator==(const LocalEdge&, const LocalEdge&) = default;
};

struct AugmentationRecord {
  std::vector<NodeId> dropped;  // global ids
  std::vector<NodeId> masked;   // global ids
  friend bool operator==(const AugmentationRecord&, const AugmentationRecord&) = default;
};

/// Contextualized neighborhood of one datapoint.
struct DataGraph {
  std::vector<NodeId> local_nodes;  // local index -> global id
  Matrix features;                  // local count x d_in
  std::vector<LocalEdge> edges;
  std::vector<int> input_local;     // datapoint nodes, in datapoint order
  Level level = Level::node;
  bool directed = false;
  int num_relations = 1;
  AugmentationRecord aug;
  /// Local indices of masked nodes and their original feature rows (same order).
  std::vector<int> masked_local;
  Matrix masked_original;

  int num_nodes() const { return static_cast<int>(local_nodes.size()); }
  bool operator==(const DataGraph& o) const;
  /// Checks the structural invariants; throws ValidationError.
  void validate() const;
};

enum class DataRole : std::uint8_t { example = 0, query = 1 };

struct TaskDataNode {
  int prompt_index = 0;  // index into examples (role example) or queries (role query)
  DataRole role = DataRole::example;
  friend bool operator==(const TaskDataNode&, const TaskDataNode&) = default;
};

struct TaskEdge {
  int data_index = 0;
  int label_index = 0;
  bool is_example = false;
  bool is_true = false;  // always false on query edges
  friend bool operator==(const TaskEdge&, const TaskEdge&) = default;
};

/// Bipartite data-node / label-node graph. Example edges carry messages both ways;
/// query edges carry them label -> query only.
struct TaskGraph {
  int ways = 0;
  int shots = 0;
  std::vector<TaskDataNode> data_nodes;  // examples first, then queries
  std::vector<int> label_nodes;          // class index per label node
  std::vector<TaskEdge> edges;

  int num_examples() const { return ways * shots; }
  int num_queries() const { return static_cast<int>(data_nodes.size()) - num_examples(); }
  friend bool operator==(const TaskGraph&, const TaskGraph&) = default;
};

/// Empty when the task graph is sound, otherwise the name of the first violated invariant.
std::optional<std::string> check_task_graph(const TaskGraph& tg);

struct PromptGraph {
  std::vector<DataGraph> data_graphs;  // examples then queries
  TaskGraph task_graph;
  Level level = Level::node;
  /// Per-class origin copied from the prompt; keys the label-embedding initialization.
  std::vector<std::int64_t> class_meta;
  /// Optional class feature rows for provided-feature label initialization.
  std::optional<Matrix> label_features;
  std::uint64_t label_seed = 0;

  bool operator==(const PromptGraph& o) const;
};

struct AugmentConfig {
  bool enabled = true;
  double p_drop = 0.5;
  double p_mask = 0.5;

  static AugmentConfig off() { return {false, 0.0, 0.0}; }
};

struct ContextConfig {
  int hops = 2;
  std::optional<std::size_t> fanout_cap = 10;
};

DataGraph contextualize(const Graph& g, const Datapoint& dp, int hops,
                        std::optional<std::size_t> fanout_cap, Rng& rng);

/// Removes each non-input node with probability p.
DataGraph drop_node(const DataGraph& dg, double p, Rng& rng);

/// Zeroes each node's feature row with probability p, retaining the original rows.
DataGraph mask_node(const DataGraph& dg, double p, Rng& rng);

TaskGraph build_task_graph(int ways, int shots, int num_queries, std::span<const int> example_labels);

PromptGraph assemble_prompt_graph(const Graph& g, const FewShotPrompt& prompt,
                                  const ContextConfig& ctx, const AugmentConfig& aug, Rng& rng);

// ---- prompt-graph dump ----------------------------------------------------

void save_prompt_graph(const PromptGraph& pg, const std::filesystem::path& path);
/// Throws LoadError on a malformed file. Does not check task-graph invariants.
PromptGraph load_prompt_graph(const std::filesystem::path& path);

}  // namespace prodigy
