#include "prodigy/tasks.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "prodigy/error.hpp"

namespace prodigy {

namespace {

int ceil_div(int a, int b) { return (a + b - 1) / b; }

void check_shape(int ways, int shots, int queries) {
  if (ways < 1 || shots < 1 || queries < 0)
    throw TaskGenerationError("episode needs ways >= 1, shots >= 1, queries >= 0");
}

/// k distinct members, then q queries: distinct from the examples while the pool allows,
/// with replacement from the whole pool afterwards. Requires pool.size() >= k.
template <typename T>
void draw_class(const std::vector<T>& pool, int k, int q, Rng& rng, std::vector<T>& examples,
                std::vector<T>& queries) {
  const auto order = sample_without_replacement(pool.size(), pool.size(), rng);
  const auto ku = static_cast<std::size_t>(k);
  for (std::size_t i = 0; i < ku; ++i) examples.push_back(pool[order[i]]);
  int taken = 0;
  for (std::size_t i = ku; i < order.size() && taken < q; ++i, ++taken) queries.push_back(pool[order[i]]);
  for (; taken < q; ++taken) queries.push_back(pool[uniform_index(pool.size(), rng)]);
}

FewShotPrompt sample_nm(const Graph& g, int ways, int shots, int queries, int hops, Rng& rng,
                        int max_retries, Level level) {
  check_shape(ways, shots, queries);
  if (hops < 1) throw TaskGenerationError("neighbor matching needs hops >= 1");
  if (ways < 2) throw TaskGenerationError("neighbor matching needs ways >= 2");
  if (g.num_nodes() < ways)
    throw TaskGenerationError("graph has fewer nodes than the requested " + std::to_string(ways) + " anchors");

  std::vector<NodeId> anchors;
  std::vector<std::vector<NodeId>> rings;
  std::set<NodeId> tried;
  int retries = 0;
  while (static_cast<int>(anchors.size()) < ways) {
    if (static_cast<int>(tried.size()) == g.num_nodes())
      throw TaskGenerationError("no " + std::to_string(ways) + " anchors whose exact " + std::to_string(hops) +
                                "-hop ring holds >= " + std::to_string(shots) + " nodes");
    const auto c = static_cast<NodeId>(uniform_index(static_cast<std::size_t>(g.num_nodes()), rng));
    if (!tried.insert(c).second) continue;
    const NodeId seed[] = {c};
    auto ring = exact_hop_neighbors(g, seed, hops);
    if (level == Level::edge)
      std::erase_if(ring, [&](NodeId x) { return g.degree(x) == 0; });
    if (static_cast<int>(ring.size()) < shots) {
      if (++retries > max_retries)
        throw TaskGenerationError("anchor retries exhausted (" + std::to_string(max_retries) +
                                  "): need an exact " + std::to_string(hops) + "-hop ring with >= " +
                                  std::to_string(shots) + " nodes");
      continue;
    }
    anchors.push_back(c);
    rings.push_back(std::move(ring));
  }

  FewShotPrompt p;
  p.ways = ways;
  p.shots = shots;
  p.level = level;
  p.family = Family::neighbor_matching;
  const int per_class = ceil_div(queries, ways);
  auto expand = [&](NodeId x) {
    if (level == Level::node) return Datapoint::node(x);
    const auto inc = g.incident(x);
    const Edge& e = g.edge(inc[uniform_index(inc.size(), rng)].edge);
    return Datapoint::edge(e.u, e.v);
  };
  for (int c = 0; c < ways; ++c) {
    std::vector<NodeId> ex, qu;
    draw_class(rings[static_cast<std::size_t>(c)], shots, per_class, rng, ex, qu);
    for (NodeId x : ex) {
      p.examples.push_back(expand(x));
      p.example_labels.push_back(c);
    }
    for (NodeId x : qu) {
      p.queries.push_back(expand(x));
      p.query_labels.push_back(c);
    }
    p.class_meta.push_back(anchors[static_cast<std::size_t>(c)]);
  }
  return p;
}

FewShotPrompt sample_labeled(const Labeling& lab, int ways, int shots, int queries, Rng& rng) {
  check_shape(ways, shots, queries);
  const auto groups = lab.by_class();
  std::vector<int> usable;
  for (int c = 0; c < lab.num_classes; ++c)
    if (static_cast<int>(groups[static_cast<std::size_t>(c)].size()) >= shots) usable.push_back(c);
  if (static_cast<int>(usable.size()) < ways)
    throw TaskGenerationError("only " + std::to_string(usable.size()) + " classes have >= " +
                              std::to_string(shots) + " labeled items; need " + std::to_string(ways));

  const auto pick = sample_without_replacement(usable.size(), static_cast<std::size_t>(ways), rng);
  FewShotPrompt p;
  p.ways = ways;
  p.shots = shots;
  p.level = lab.level;
  p.family = Family::multi_task;
  const int per_class = ceil_div(queries, ways);
  for (int c = 0; c < ways; ++c) {
    const int source = usable[pick[static_cast<std::size_t>(c)]];
    std::vector<std::size_t> ex, qu;
    draw_class(groups[static_cast<std::size_t>(source)], shots, per_class, rng, ex, qu);
    for (auto i : ex) {
      p.examples.push_back(lab.items[i]);
      p.example_labels.push_back(c);
    }
    for (auto i : qu) {
      p.queries.push_back(lab.items[i]);
      p.query_labels.push_back(c);
    }
    p.class_meta.push_back(source);
  }
  return p;
}

}  // namespace

FewShotPrompt sample_nm_node(const Graph& g, int ways, int shots, int queries, int hops, Rng& rng,
                             int max_retries) {
  return sample_nm(g, ways, shots, queries, hops, rng, max_retries, Level::node);
}

FewShotPrompt sample_nm_edge(const Graph& g, int ways, int shots, int queries, int hops, Rng& rng,
                             int max_retries) {
  return sample_nm(g, ways, shots, queries, hops, rng, max_retries, Level::edge);
}

FewShotPrompt sample_mt_node(const Graph& g, const Labeling& lab, int ways, int shots, int queries,
                             Rng& rng) {
  if (lab.level != Level::node) throw TaskGenerationError("node multi-task needs a node labeling");
  lab.validate(g);
  return sample_labeled(lab, ways, shots, queries, rng);
}

FewShotPrompt sample_mt_edge(const Graph& g, int ways, int shots, int queries, Rng& rng) {
  return sample_labeled(relation_labeling(g), ways, shots, queries, rng);
}

int usable_classes(const Labeling& lab, int min_items) {
  int n = 0;
  for (const auto& grp : lab.by_class()) n += static_cast<int>(grp.size()) >= min_items;
  return n;
}

Split random_split(const Labeling& lab, double train_fraction, Rng& rng) {
  if (train_fraction < 0.0 || train_fraction > 1.0) throw ValidationError("train fraction must lie in [0, 1]");
  Split s;
  for (const auto& grp : lab.by_class()) {
    const auto order = sample_without_replacement(grp.size(), grp.size(), rng);
    const auto ntrain = static_cast<std::size_t>(train_fraction * static_cast<double>(grp.size()));
    for (std::size_t i = 0; i < order.size(); ++i) (i < ntrain ? s.train : s.test).push_back(grp[order[i]]);
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

std::vector<FewShotPrompt> sample_downstream_eval(const Graph& g, const Labeling& lab, const Split& split,
                                                  const DownstreamSpec& spec, Rng& rng) {
  lab.validate(g);
  check_shape(spec.ways, spec.shots, spec.queries);
  if (spec.shots > spec.pool_size)
    throw TaskGenerationError("shots (" + std::to_string(spec.shots) + ") exceed pool size (" +
                              std::to_string(spec.pool_size) + ")");
  if (split.test.empty()) throw TaskGenerationError("test split is empty");

  const auto nc = static_cast<std::size_t>(lab.num_classes);
  std::vector<std::vector<std::size_t>> train_by(nc), test_by(nc);
  for (auto i : split.train) train_by[static_cast<std::size_t>(lab.classes.at(i))].push_back(i);
  for (auto i : split.test) test_by[static_cast<std::size_t>(lab.classes.at(i))].push_back(i);

  // Fixed labeled pools, drawn once.
  std::vector<int> usable;
  std::vector<std::vector<std::size_t>> pools(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    if (static_cast<int>(train_by[c].size()) < spec.pool_size || test_by[c].empty()) continue;
    for (auto j : sample_without_replacement(train_by[c].size(), static_cast<std::size_t>(spec.pool_size), rng))
      pools[c].push_back(train_by[c][j]);
    usable.push_back(static_cast<int>(c));
  }
  if (static_cast<int>(usable.size()) < spec.ways)
    throw TaskGenerationError("only " + std::to_string(usable.size()) + " classes have a pool of " +
                              std::to_string(spec.pool_size) + " train items and test items; need " +
                              std::to_string(spec.ways));

  std::vector<FewShotPrompt> tasks;
  tasks.reserve(static_cast<std::size_t>(spec.num_tasks));
  for (int t = 0; t < spec.num_tasks; ++t) {
    FewShotPrompt p;
    p.ways = spec.ways;
    p.shots = spec.shots;
    p.level = lab.level;
    p.family = Family::downstream;
    const auto pick = sample_without_replacement(usable.size(), static_cast<std::size_t>(spec.ways), rng);
    std::vector<std::pair<std::size_t, int>> candidates;  // (test item, class index)
    for (int c = 0; c < spec.ways; ++c) {
      const auto source = static_cast<std::size_t>(usable[pick[static_cast<std::size_t>(c)]]);
      for (auto j : sample_without_replacement(pools[source].size(), static_cast<std::size_t>(spec.shots), rng)) {
        p.examples.push_back(lab.items[pools[source][j]]);
        p.example_labels.push_back(c);
      }
      for (auto i : test_by[source]) candidates.push_back({i, c});
      p.class_meta.push_back(static_cast<std::int64_t>(source));
    }
    const auto want = static_cast<std::size_t>(spec.queries);
    std::vector<std::size_t> order;
    if (candidates.size() >= want) {
      order = sample_without_replacement(candidates.size(), want, rng);
    } else {
      for (std::size_t i = 0; i < want; ++i) order.push_back(uniform_index(candidates.size(), rng));
    }
    for (auto o : order) {
      p.queries.push_back(lab.items[candidates[o].first]);
      p.query_labels.push_back(candidates[o].second);
    }
    tasks.push_back(std::move(p));
  }
  return tasks;
}

nlohmann::json prompt_record(const FewShotPrompt& p) {
  auto dp_json = [](const Datapoint& dp) {
    nlohmann::json j = dp.nodes;
    return j;
  };
  nlohmann::json r;
  r["family"] = family_name(p.family);
  r["level"] = p.level == Level::node ? "node" : "edge";
  r["ways"] = p.ways;
  r["shots"] = p.shots;
  r["class_meta"] = p.class_meta;
  r["examples"] = nlohmann::json::array();
  for (std::size_t i = 0; i < p.examples.size(); ++i)
    r["examples"].push_back({{"nodes", dp_json(p.examples[i])}, {"label", p.example_labels[i]}});
  r["queries"] = nlohmann::json::array();
  for (std::size_t i = 0; i < p.queries.size(); ++i) {
    nlohmann::json q = {{"nodes", dp_json(p.queries[i])}};
    if (i < p.query_labels.size()) q["label"] = p.query_labels[i];
    r["queries"].push_back(std::move(q));
  }
  return r;
}

}  // namespace prodigy
