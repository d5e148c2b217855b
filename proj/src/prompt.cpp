#include "prodigy/prompt.hpp"

#include <algorithm>
#include <unordered_map>

#include "prodigy/error.hpp"

namespace prodigy {

const char* family_name(Family f) {
  switch (f) {
    case Family::neighbor_matching: return "nm";
    case Family::multi_task: return "mt";
    case Family::downstream: return "downstream";
  }
  return "?";
}

void FewShotPrompt::validate() const {
  if (ways < 1 || shots < 1) throw ValidationError("prompt needs ways >= 1 and shots >= 1");
  const auto mk = static_cast<std::size_t>(ways * shots);
  if (examples.size() != mk || example_labels.size() != mk)
    throw ValidationError("prompt must hold ways*shots = " + std::to_string(mk) + " examples");
  std::vector<int> count(static_cast<std::size_t>(ways), 0);
  for (int y : example_labels) {
    if (y < 0 || y >= ways) throw ValidationError("example label " + std::to_string(y) + " out of range");
    ++count[static_cast<std::size_t>(y)];
  }
  for (int c = 0; c < ways; ++c)
    if (count[static_cast<std::size_t>(c)] != shots)
      throw ValidationError("class " + std::to_string(c) + " has " +
                            std::to_string(count[static_cast<std::size_t>(c)]) + " examples, expected " +
                            std::to_string(shots));
  if (!query_labels.empty() && query_labels.size() != queries.size())
    throw ValidationError("query label count does not match query count");
  for (int y : query_labels)
    if (y < 0 || y >= ways) throw ValidationError("query label " + std::to_string(y) + " out of range");
  if (class_meta.size() != static_cast<std::size_t>(ways))
    throw ValidationError("class_meta must have one entry per class");
  for (const auto* set : {&examples, &queries})
    for (const Datapoint& dp : *set) {
      if (dp.level != level) throw ValidationError("datapoint level differs from prompt level");
      validate_datapoint(dp);
    }
}

FewShotPrompt strip_query_labels(FewShotPrompt p) {
  p.query_labels.clear();
  return p;
}

bool DataGraph::operator==(const DataGraph& o) const {
  return local_nodes == o.local_nodes && features == o.features && edges == o.edges &&
         input_local == o.input_local && level == o.level && directed == o.directed &&
         num_relations == o.num_relations && aug == o.aug && masked_local == o.masked_local &&
         masked_original == o.masked_original;
}

void DataGraph::validate() const {
  const int n = num_nodes();
  if (features.rows() != n) throw ValidationError("data graph feature rows differ from node count");
  for (const LocalEdge& e : edges)
    if (e.u < 0 || e.u >= n || e.v < 0 || e.v >= n)
      throw ValidationError("data graph edge references a missing local node");
  for (int i : input_local)
    if (i < 0 || i >= n) throw ValidationError("data graph input node missing");
  if (masked_original.rows() != static_cast<Eigen::Index>(masked_local.size()))
    throw ValidationError("masked side table size mismatch");
  for (int i : masked_local)
    if (i < 0 || i >= n || !features.row(i).isZero(0.0))
      throw ValidationError("masked feature row is not zero");
}

bool PromptGraph::operator==(const PromptGraph& o) const {
  return data_graphs == o.data_graphs && task_graph == o.task_graph && level == o.level &&
         class_meta == o.class_meta && label_features == o.label_features && label_seed == o.label_seed;
}

DataGraph contextualize(const Graph& g, const Datapoint& dp, int hops,
                        std::optional<std::size_t> fanout_cap, Rng& rng) {
  validate_datapoint(dp);
  Subgraph sub = khop_union(g, dp.nodes, hops, fanout_cap, rng);

  DataGraph dg;
  dg.level = dp.level;
  dg.directed = g.directed();
  dg.num_relations = g.num_relations();
  dg.local_nodes = sub.nodes;
  std::unordered_map<NodeId, int> local;
  local.reserve(sub.nodes.size());
  for (std::size_t i = 0; i < sub.nodes.size(); ++i) local.emplace(sub.nodes[i], static_cast<int>(i));

  dg.features.resize(static_cast<Eigen::Index>(sub.nodes.size()), g.feature_dim());
  for (std::size_t i = 0; i < sub.nodes.size(); ++i)
    dg.features.row(static_cast<Eigen::Index>(i)) = g.features().row(sub.nodes[i]);
  for (EdgeId e : sub.edges) {
    if (dp.target_edge && *dp.target_edge == e) continue;
    const Edge& ge = g.edge(e);
    dg.edges.push_back({local.at(ge.u), ge.r, local.at(ge.v)});
  }
  for (NodeId n : dp.nodes) dg.input_local.push_back(local.at(n));
  dg.masked_original.resize(0, g.feature_dim());
  return dg;
}

DataGraph drop_node(const DataGraph& dg, double p, Rng& rng) {
  if (p < 0.0 || p > 1.0) throw ValidationError("drop probability must lie in [0, 1]");
  const int n = dg.num_nodes();
  std::vector<char> is_input(static_cast<std::size_t>(n), 0);
  for (int i : dg.input_local) is_input[static_cast<std::size_t>(i)] = 1;

  std::vector<int> remap(static_cast<std::size_t>(n), -1);
  DataGraph out;
  out.level = dg.level;
  out.directed = dg.directed;
  out.num_relations = dg.num_relations;
  out.aug = dg.aug;
  std::vector<int> keep;
  for (int i = 0; i < n; ++i) {
    if (!is_input[static_cast<std::size_t>(i)] && bernoulli(p, rng)) {
      out.aug.dropped.push_back(dg.local_nodes[static_cast<std::size_t>(i)]);
      continue;
    }
    remap[static_cast<std::size_t>(i)] = static_cast<int>(keep.size());
    keep.push_back(i);
  }
  std::sort(out.aug.dropped.begin(), out.aug.dropped.end());

  out.features.resize(static_cast<Eigen::Index>(keep.size()), dg.features.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.local_nodes.push_back(dg.local_nodes[static_cast<std::size_t>(keep[i])]);
    out.features.row(static_cast<Eigen::Index>(i)) = dg.features.row(keep[i]);
  }
  for (const LocalEdge& e : dg.edges) {
    const int u = remap[static_cast<std::size_t>(e.u)], v = remap[static_cast<std::size_t>(e.v)];
    if (u >= 0 && v >= 0) out.edges.push_back({u, e.r, v});
  }
  for (int i : dg.input_local) out.input_local.push_back(remap[static_cast<std::size_t>(i)]);

  std::vector<Eigen::Index> rows;
  for (std::size_t j = 0; j < dg.masked_local.size(); ++j) {
    const int m = remap[static_cast<std::size_t>(dg.masked_local[j])];
    if (m < 0) continue;
    out.masked_local.push_back(m);
    rows.push_back(static_cast<Eigen::Index>(j));
  }
  out.masked_original.resize(static_cast<Eigen::Index>(rows.size()), dg.features.cols());
  for (std::size_t j = 0; j < rows.size(); ++j)
    out.masked_original.row(static_cast<Eigen::Index>(j)) = dg.masked_original.row(rows[j]);
  return out;
}

DataGraph mask_node(const DataGraph& dg, double p, Rng& rng) {
  if (p < 0.0 || p > 1.0) throw ValidationError("mask probability must lie in [0, 1]");
  DataGraph out = dg;
  std::vector<char> already(static_cast<std::size_t>(dg.num_nodes()), 0);
  for (int i : dg.masked_local) already[static_cast<std::size_t>(i)] = 1;

  std::vector<int> fresh;
  for (int i = 0; i < dg.num_nodes(); ++i)
    if (bernoulli(p, rng) && !already[static_cast<std::size_t>(i)]) fresh.push_back(i);
  if (fresh.empty()) return out;

  const auto old = static_cast<Eigen::Index>(out.masked_local.size());
  out.masked_original.conservativeResize(old + static_cast<Eigen::Index>(fresh.size()), dg.features.cols());
  for (std::size_t j = 0; j < fresh.size(); ++j) {
    const int i = fresh[j];
    out.masked_original.row(old + static_cast<Eigen::Index>(j)) = dg.features.row(i);
    out.features.row(i).setZero();
    out.masked_local.push_back(i);
    out.aug.masked.push_back(dg.local_nodes[static_cast<std::size_t>(i)]);
  }
  std::sort(out.aug.masked.begin(), out.aug.masked.end());
  return out;
}

TaskGraph build_task_graph(int ways, int shots, int num_queries, std::span<const int> example_labels) {
  if (ways < 1 || shots < 1 || num_queries < 0)
    throw ValidationError("task graph needs ways >= 1, shots >= 1, queries >= 0");
  if (example_labels.size() != static_cast<std::size_t>(ways * shots))
    throw ValidationError("expected " + std::to_string(ways * shots) + " example labels");
  std::vector<int> count(static_cast<std::size_t>(ways), 0);
  for (int y : example_labels) {
    if (y < 0 || y >= ways) throw ValidationError("example label " + std::to_string(y) + " out of range");
    ++count[static_cast<std::size_t>(y)];
  }
  for (int c = 0; c < ways; ++c)
    if (count[static_cast<std::size_t>(c)] != shots)
      throw ValidationError("class " + std::to_string(c) + " has " +
                            std::to_string(count[static_cast<std::size_t>(c)]) +
                            " examples, expected " + std::to_string(shots));

  TaskGraph tg;
  tg.ways = ways;
  tg.shots = shots;
  const int mk = ways * shots;
  for (int i = 0; i < mk; ++i) tg.data_nodes.push_back({i, DataRole::example});
  for (int j = 0; j < num_queries; ++j) tg.data_nodes.push_back({j, DataRole::query});
  for (int c = 0; c < ways; ++c) tg.label_nodes.push_back(c);
  tg.edges.reserve(static_cast<std::size_t>((mk + num_queries) * ways));
  for (int i = 0; i < mk; ++i)
    for (int c = 0; c < ways; ++c) tg.edges.push_back({i, c, true, example_labels[static_cast<std::size_t>(i)] == c});
  for (int j = 0; j < num_queries; ++j)
    for (int c = 0; c < ways; ++c) tg.edges.push_back({mk + j, c, false, false});
  return tg;
}

std::optional<std::string> check_task_graph(const TaskGraph& tg) {
  const int m = tg.ways, mk = tg.ways * tg.shots;
  const int data = static_cast<int>(tg.data_nodes.size());
  if (m < 1 || tg.shots < 1 || data < mk) return "data-node count (m*k + n)";
  const int n = data - mk;
  if (static_cast<int>(tg.label_nodes.size()) != m) return "label-node count (m)";
  if (static_cast<int>(tg.edges.size()) != (mk + n) * m) return "edge count ((m*k + n)*m)";
  for (int i = 0; i < data; ++i) {
    const auto& dn = tg.data_nodes[static_cast<std::size_t>(i)];
    const bool example = i < mk;
    if ((dn.role == DataRole::example) != example) return "data-node role order (examples then queries)";
  }
  std::vector<int> true_edges(static_cast<std::size_t>(data), 0), total(static_cast<std::size_t>(data), 0);
  std::vector<int> true_label(static_cast<std::size_t>(data), -1);
  for (const TaskEdge& e : tg.edges) {
    if (e.data_index < 0 || e.data_index >= data || e.label_index < 0 || e.label_index >= m)
      return "edge endpoint range";
    const bool example = e.data_index < mk;
    if (e.is_example != example) return "is_example flag matches data-node role";
    if (!example && e.is_true) return "query edges carry is_true = 0";
    ++total[static_cast<std::size_t>(e.data_index)];
    if (e.is_true) {
      ++true_edges[static_cast<std::size_t>(e.data_index)];
      true_label[static_cast<std::size_t>(e.data_index)] = e.label_index;
    }
  }
  for (int i = 0; i < data; ++i) {
    if (total[static_cast<std::size_t>(i)] != m) return "each data node has m label edges";
    if (i < mk && true_edges[static_cast<std::size_t>(i)] != 1) return "one true edge per example";
  }
  std::vector<int> per_class(static_cast<std::size_t>(m), 0);
  for (int i = 0; i < mk; ++i) ++per_class[static_cast<std::size_t>(true_label[static_cast<std::size_t>(i)])];
  for (int c : per_class)
    if (c != tg.shots) return "k true edges per label";
  return std::nullopt;
}

PromptGraph assemble_prompt_graph(const Graph& g, const FewShotPrompt& prompt,
                                  const ContextConfig& ctx, const AugmentConfig& aug, Rng& rng) {
  prompt.validate();
  PromptGraph pg;
  pg.level = prompt.level;
  pg.class_meta = prompt.class_meta;
  auto add = [&](const Datapoint& dp) {
    for (NodeId n : dp.nodes) g.check_node(n);
    DataGraph dg = contextualize(g, dp, ctx.hops, ctx.fanout_cap, rng);
    if (aug.enabled) {
      dg = drop_node(dg, aug.p_drop, rng);
      dg = mask_node(dg, aug.p_mask, rng);
    }
    pg.data_graphs.push_back(std::move(dg));
  };
  for (const Datapoint& dp : prompt.examples) add(dp);
  for (const Datapoint& dp : prompt.queries) add(dp);
  pg.task_graph = build_task_graph(prompt.ways, prompt.shots, prompt.num_queries(), prompt.example_labels);
  pg.label_seed = rng();
  return pg;
}

}  // namespace prodigy
