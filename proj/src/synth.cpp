#include "prodigy/graph.hpp"

#include "prodigy/error.hpp"

namespace prodigy {

PlantedGraph synth_planted_graph(int num_blocks, int nodes_per_block, double p_in, double p_out,
                                 double feature_noise, std::uint64_t seed) {
  if (num_blocks < 1 || nodes_per_block < 1) throw ValidationError("block counts must be positive");
  if (!(0.0 <= p_out && p_out <= p_in && p_in <= 1.0))
    throw ValidationError("planted graph requires 0 <= p_out <= p_in <= 1");
  if (feature_noise < 0.0) throw ValidationError("feature noise must be nonnegative");

  Rng rng(seed);
  const int n = num_blocks * nodes_per_block;
  auto block = [&](int i) { return i / nodes_per_block; };

  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (bernoulli(block(i) == block(j) ? p_in : p_out, rng)) edges.push_back({i, 0, j});

  Matrix features = Matrix::Zero(n, num_blocks);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    features(i, block(i)) = 1.0;
    if (feature_noise > 0.0)
      for (int c = 0; c < num_blocks; ++c) features(i, c) += feature_noise * noise(rng);
  }

  Labeling lab;
  lab.level = Level::node;
  lab.num_classes = num_blocks;
  for (int i = 0; i < n; ++i) {
    lab.items.push_back(Datapoint::node(i));
    lab.classes.push_back(block(i));
  }
  return {Graph(std::move(features), std::move(edges), 1, false), std::move(lab)};
}

}  // namespace prodigy
