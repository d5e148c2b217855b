#pragma once

#include <vector>

#include <json.hpp>

#include "prodigy/few_shot_prompt.hpp"
#include "prodigy/graph.hpp"

namespace prodigy {

inline constexpr int kDefaultMaxRetries = 50;

/// Neighbor matching over nodes: m anchors, each class drawn from its exact `hops` ring.
/// An anchor qualifies when its ring holds at least `shots` nodes; queries fall back to
/// sampling with replacement once the ring is exhausted.
FewShotPrompt sample_nm_node(const Graph& g, int ways, int shots, int queries, int hops, Rng& rng,
                             int max_retries = kDefaultMaxRetries);

/// Neighbor matching over edges: each sampled ring node is expanded to a random incident edge.
FewShotPrompt sample_nm_edge(const Graph& g, int ways, int shots, int queries, int hops, Rng& rng,
                             int max_retries = kDefaultMaxRetries);

/// Supervised episode from a node labeling.
FewShotPrompt sample_mt_node(const Graph& g, const Labeling& lab, int ways, int shots, int queries,
                             Rng& rng);

/// Supervised episode whose classes are relation types; each datapoint hides its own edge.
FewShotPrompt sample_mt_edge(const Graph& g, int ways, int shots, int queries, Rng& rng);

/// Number of classes with at least `min_items` members.
int usable_classes(const Labeling& lab, int min_items);

/// Train/test partition of labeling item indices, stratified by class.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

Split random_split(const Labeling& lab, double train_fraction, Rng& rng);

struct DownstreamSpec {
  int ways = 3;
  int shots = 3;
  int queries = 3;
  int pool_size = 10;
  int num_tasks = 500;
};

/// Evaluation prompts: a fixed pool of `pool_size` train items per class is drawn once;
/// every task then takes its examples from the pools and its queries from the test split.
std::vector<FewShotPrompt> sample_downstream_eval(const Graph& g, const Labeling& lab, const Split& split,
                                                  const DownstreamSpec& spec, Rng& rng);

/// Line record for episode auditing.
nlohmann::json prompt_record(const FewShotPrompt& p);

}  // namespace prodigy
