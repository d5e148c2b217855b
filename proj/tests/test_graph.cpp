#include <doctest.h>

#include <set>

#include "prodigy/error.hpp"
#include "support.hpp"

using namespace prodigy;
using namespace testing;

TEST_CASE("load_graph reads a 5-node path") {
  TempDir dir("load");
  write_text(dir / "e.tsv", "0\t0\t1\n1\t0\t2\n2\t0\t3\n3\t0\t4\n");
  write_text(dir / "f.tsv", "1 2\n3 4\n5 6\n7 8\n9 10\n");
  const Graph g = load_graph(dir / "e.tsv", dir / "f.tsv", false);
  CHECK(g.num_nodes() == 5);
  CHECK(g.num_edges() == 4);
  CHECK(g.feature_dim() == 2);
  CHECK(g.features()(4, 1) == 10.0);
  // Undirected: stored once, traversed both ways.
  CHECK(g.neighbors(1).size() == 2);
  CHECK(g.neighbors(0).size() == 1);
}

TEST_CASE("load_graph degenerate and malformed inputs") {
  TempDir dir("load_bad");
  write_text(dir / "empty.tsv", "");
  write_text(dir / "one.tsv", "0.5 0.5\n");
  const Graph g = load_graph(dir / "empty.tsv", dir / "one.tsv", false);
  CHECK(g.num_nodes() == 1);
  CHECK(g.num_edges() == 0);

  write_text(dir / "f5.tsv", "0\n0\n0\n0\n0\n");
  write_text(dir / "oob.tsv", "0\t0\t9\n");
  CHECK_THROWS_AS(load_graph(dir / "oob.tsv", dir / "f5.tsv", false), ValidationError);

  write_text(dir / "bad.tsv", "0\t0\t1\n0 x 1\n");
  try {
    load_graph(dir / "bad.tsv", dir / "f5.tsv", false);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  write_text(dir / "ragged.tsv", "1 2\n3\n");
  CHECK_THROWS_AS(load_graph(dir / "empty.tsv", dir / "ragged.tsv", false), ParseError);
  CHECK_THROWS_AS(load_graph(dir / "missing.tsv", dir / "f5.tsv", false), ParseError);
}

TEST_CASE("graph construction validates ranges") {
  CHECK_THROWS_AS(Graph(Matrix::Zero(2, 1), {{0, 0, 2}}, 1, false), ValidationError);
  CHECK_THROWS_AS(Graph(Matrix::Zero(2, 1), {{0, 1, 1}}, 1, false), ValidationError);
  Matrix bad = Matrix::Zero(2, 1);
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(Graph(bad, {}, 1, false), ValidationError);
}

TEST_CASE("graph and labeling save/load round trip") {
  TempDir dir("roundtrip");
  const PlantedGraph pg = synth_planted_graph(2, 10, 0.5, 0.1, 0.3, 3);
  save_graph(pg.graph, dir / "e.tsv", dir / "f.tsv");
  save_labeling(pg.labels, dir / "l.tsv");
  const Graph g = load_graph(dir / "e.tsv", dir / "f.tsv", false);
  CHECK(g.edges() == pg.graph.edges());
  CHECK(g.features() == pg.graph.features());
  const Labeling lab = load_labeling(dir / "l.tsv", g);
  CHECK(lab.classes == pg.labels.classes);
  CHECK(lab.num_classes == 2);
}

TEST_CASE("exact_hop_neighbors on small fixtures") {
  const Graph p = path_graph(5);
  const NodeId two[] = {2};
  CHECK(exact_hop_neighbors(p, two, 1) == std::vector<NodeId>{1, 3});
  CHECK(exact_hop_neighbors(p, two, 2) == std::vector<NodeId>{0, 4});
  const NodeId seeds[] = {4, 1};
  CHECK(exact_hop_neighbors(p, seeds, 0) == std::vector<NodeId>{1, 4});

  const Graph tri(Matrix::Zero(3, 1), {{0, 0, 1}, {1, 0, 2}, {0, 0, 2}}, 1, false);
  const NodeId zero[] = {0};
  CHECK(exact_hop_neighbors(tri, zero, 2).empty());

  const NodeId oob[] = {7};
  CHECK_THROWS_AS(exact_hop_neighbors(p, oob, 1), ValidationError);
}

TEST_CASE("directed traversal follows out-edges only") {
  const Graph p = path_graph(4, true);
  const NodeId two[] = {2};
  CHECK(exact_hop_neighbors(p, two, 1) == std::vector<NodeId>{3});
  CHECK(exact_hop_neighbors(p, two, 2).empty());
}

TEST_CASE("exact_hop_neighbors matches a Floyd-Warshall oracle and partitions components") {
  Rng rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 49);
    const bool directed = trial % 3 == 0;
    const Graph g = random_graph(n, 0.08, rng, directed);
    const auto apd = all_pairs_distance(g);
    std::vector<NodeId> seeds;
    for (int s = 0, c = 1 + static_cast<int>(rng() % 3); s < c; ++s) seeds.push_back(static_cast<NodeId>(rng() % n));
    const auto dist = seed_distance(apd, seeds);
    std::set<NodeId> seen;
    for (int i = 0; i <= n; ++i) {
      const auto got = exact_hop_neighbors(g, seeds, i);
      std::vector<NodeId> want;
      for (int v = 0; v < n; ++v)
        if (dist[static_cast<std::size_t>(v)] == i) want.push_back(v);
      REQUIRE(got == want);
      for (NodeId v : got) CHECK(seen.insert(v).second);
    }
    std::size_t reachable = 0;
    for (int d : dist) reachable += d >= 0;
    CHECK(seen.size() == reachable);
  }
}

TEST_CASE("khop_union fixtures") {
  Rng rng(1);
  const Graph p = path_graph(5);
  const NodeId two[] = {2};
  Subgraph s = khop_union(p, two, 2, std::nullopt, rng);
  CHECK(s.nodes == std::vector<NodeId>{0, 1, 2, 3, 4});
  CHECK(s.edges.size() == 4);
  const NodeId zero[] = {0};
  s = khop_union(p, zero, 1, std::nullopt, rng);
  CHECK(s.nodes == std::vector<NodeId>{0, 1});
  CHECK(s.edges.size() == 1);

  std::vector<Edge> star;
  for (int i = 1; i <= 10; ++i) star.push_back({0, 0, i});
  const Graph st(Matrix::Zero(11, 1), star, 1, false);
  Rng a(42), b(42);
  const Subgraph s1 = khop_union(st, zero, 1, 3, a);
  const Subgraph s2 = khop_union(st, zero, 1, 3, b);
  CHECK(s1.nodes.size() == 4);
  CHECK(s1.nodes.front() == 0);
  CHECK(s1.edges.size() == 3);
  CHECK(s1.nodes == s2.nodes);
}

TEST_CASE("khop_union with unlimited fanout is the exact ball; capped output stays on true rings") {
  Rng rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 40);
    const Graph g = random_graph(n, 0.1, rng, trial % 4 == 0, 2);
    const NodeId seed[] = {static_cast<NodeId>(rng() % n)};
    const int k = static_cast<int>(rng() % 4);
    std::set<NodeId> ball;
    for (int i = 0; i <= k; ++i)
      for (NodeId v : exact_hop_neighbors(g, seed, i)) ball.insert(v);
    const Subgraph full = khop_union(g, seed, k, std::nullopt, rng);
    CHECK(std::vector<NodeId>(ball.begin(), ball.end()) == full.nodes);
    const std::set<NodeId> in(full.nodes.begin(), full.nodes.end());
    std::size_t induced = 0;
    for (const Edge& e : g.edges()) induced += in.count(e.u) && in.count(e.v);
    CHECK(full.edges.size() == induced);

    const Subgraph capped = khop_union(g, seed, k, 1, rng);
    for (NodeId v : capped.nodes) CHECK(ball.count(v) == 1);
    CHECK(std::binary_search(capped.nodes.begin(), capped.nodes.end(), seed[0]));
  }
}

TEST_CASE("sampling is reproducible for identical seeds") {
  Rng g_rng(9);
  const Graph g = random_graph(30, 0.2, g_rng);
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng a(s), b(s);
    const NodeId seed[] = {static_cast<NodeId>(s % 30)};
    const Subgraph x = khop_union(g, seed, 2, 2, a);
    const Subgraph y = khop_union(g, seed, 2, 2, b);
    CHECK(x.nodes == y.nodes);
    CHECK(x.edges == y.edges);
  }
}

TEST_CASE("synth_planted_graph") {
  const PlantedGraph cliques = synth_planted_graph(2, 4, 1.0, 0.0, 0.0, 1);
  CHECK(cliques.graph.num_edges() == 12);
  for (const Edge& e : cliques.graph.edges()) CHECK(e.u / 4 == e.v / 4);

  const PlantedGraph a = synth_planted_graph(2, 50, 0.2, 0.02, 1.0, 7);
  const PlantedGraph b = synth_planted_graph(2, 50, 0.2, 0.02, 1.0, 7);
  const auto groups = a.labels.by_class();
  CHECK(groups.size() == 2);
  CHECK(groups[0].size() == 50);
  CHECK(groups[1].size() == 50);
  CHECK(a.graph.edges() == b.graph.edges());
  CHECK(a.graph.features() == b.graph.features());
  CHECK_THROWS_AS(synth_planted_graph(2, 5, 0.1, 0.2, 0.0, 1), ValidationError);
}
