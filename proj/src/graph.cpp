#include "prodigy/graph.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

#include "prodigy/error.hpp"

namespace prodigy {

namespace {

void build_csr(int n, const std::vector<std::pair<NodeId, Adjacency>>& entries,
               std::vector<std::size_t>& offsets, std::vector<Adjacency>& out) {
  offsets.assign(static_cast<std::size_t>(n) + 1, 0);
  for (const auto& [src, _] : entries) ++offsets[static_cast<std::size_t>(src) + 1];
  for (int i = 0; i < n; ++i) offsets[i + 1] += offsets[i];
  out.resize(entries.size());
  std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
  for (const auto& [src, adj] : entries) out[cursor[static_cast<std::size_t>(src)]++] = adj;
}

std::string location(const std::filesystem::path& p, std::size_t line) {
  return p.string() + ":" + std::to_string(line);
}

template <typename T>
bool parse_int(std::string_view tok, T& out) {
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> toks;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) toks.push_back(line.substr(i, j - i));
    i = j;
  }
  return toks;
}

bool blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(),
                     [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

}  // namespace

void validate_datapoint(const Datapoint& dp) {
  const std::size_t want = dp.level == Level::node ? 1 : 2;
  if (dp.nodes.size() != want)
    throw ValidationError("datapoint has " + std::to_string(dp.nodes.size()) +
                          " input nodes, level requires " + std::to_string(want));
}

Graph::Graph(Matrix node_features, std::vector<Edge> edges, int num_relations, bool directed)
    : features_(std::move(node_features)),
      edges_(std::move(edges)),
      num_relations_(num_relations),
      directed_(directed) {
  const int n = num_nodes();
  if (num_relations_ < 1) throw ValidationError("graph needs at least one relation");
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const Edge& e = edges_[i];
    if (e.u < 0 || e.u >= n || e.v < 0 || e.v >= n)
      throw ValidationError("edge " + std::to_string(i) + " endpoint out of range [0, " +
                            std::to_string(n) + ")");
    if (e.r < 0 || e.r >= num_relations_)
      throw ValidationError("edge " + std::to_string(i) + " relation " + std::to_string(e.r) +
                            " out of range [0, " + std::to_string(num_relations_) + ")");
  }
  if (!features_.allFinite()) throw ValidationError("node features contain non-finite values");

  std::vector<std::pair<NodeId, Adjacency>> nbr, inc;
  nbr.reserve(edges_.size() * (directed_ ? 1 : 2));
  inc.reserve(edges_.size() * 2);
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const Edge& e = edges_[i];
    const auto id = static_cast<EdgeId>(i);
    nbr.push_back({e.u, {e.v, e.r, id}});
    if (!directed_ && e.u != e.v) nbr.push_back({e.v, {e.u, e.r, id}});
    inc.push_back({e.u, {e.v, e.r, id}});
    if (e.u != e.v) inc.push_back({e.v, {e.u, e.r, id}});
  }
  build_csr(n, nbr, nbr_offsets_, nbrs_);
  build_csr(n, inc, inc_offsets_, inc_);
}

std::span<const Adjacency> Graph::neighbors(NodeId u) const {
  const auto i = static_cast<std::size_t>(u);
  return {nbrs_.data() + nbr_offsets_[i], nbr_offsets_[i + 1] - nbr_offsets_[i]};
}

std::span<const Adjacency> Graph::incident(NodeId u) const {
  const auto i = static_cast<std::size_t>(u);
  return {inc_.data() + inc_offsets_[i], inc_offsets_[i + 1] - inc_offsets_[i]};
}

void Graph::check_node(NodeId u) const {
  if (u < 0 || u >= num_nodes())
    throw ValidationError("node " + std::to_string(u) + " out of range [0, " +
                          std::to_string(num_nodes()) + ")");
}

std::vector<std::vector<std::size_t>> Labeling::by_class() const {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < classes.size(); ++i) out[static_cast<std::size_t>(classes[i])].push_back(i);
  return out;
}

void Labeling::validate(const Graph& g) const {
  if (items.size() != classes.size()) throw ValidationError("labeling items/classes size mismatch");
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].level != level) throw ValidationError("labeling mixes datapoint levels");
    validate_datapoint(items[i]);
    for (NodeId n : items[i].nodes) g.check_node(n);
    if (classes[i] < 0 || classes[i] >= num_classes)
      throw ValidationError("class id " + std::to_string(classes[i]) + " out of range [0, " +
                            std::to_string(num_classes) + ")");
  }
}

Labeling relation_labeling(const Graph& g) {
  Labeling lab;
  lab.level = Level::edge;
  lab.num_classes = g.num_relations();
  lab.items.reserve(g.edges().size());
  for (std::size_t i = 0; i < g.edges().size(); ++i) {
    const Edge& e = g.edges()[i];
    lab.items.push_back(Datapoint::edge(e.u, e.v, static_cast<EdgeId>(i)));
    lab.classes.push_back(e.r);
  }
  return lab;
}

Graph load_graph(const std::filesystem::path& edge_path, const std::filesystem::path& feature_path,
                 bool directed) {
  std::ifstream ef(edge_path);
  if (!ef) throw ParseError("cannot open edge file " + edge_path.string());
  std::ifstream ff(feature_path);
  if (!ff) throw ParseError("cannot open feature file " + feature_path.string());

  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ff, line)) {
    ++lineno;
    if (blank(line)) continue;
    std::vector<double> row;
    for (auto tok : split_ws(line)) {
      // from_chars for double is unavailable on older libstdc++; strtod is locale-bound but fine here.
      std::string s(tok);
      char* end = nullptr;
      double v = std::strtod(s.c_str(), &end);
      if (end != s.c_str() + s.size())
        throw ParseError(location(feature_path, lineno) + ": malformed real '" + s + "'");
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError(location(feature_path, lineno) + ": expected " +
                       std::to_string(rows.front().size()) + " columns, got " +
                       std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto width = rows.empty() ? Eigen::Index{0} : static_cast<Eigen::Index>(rows.front().size());
  Matrix features(n, width);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < width; ++j) features(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];

  std::vector<Edge> edges;
  int max_rel = -1;
  lineno = 0;
  while (std::getline(ef, line)) {
    ++lineno;
    if (blank(line)) continue;
    auto toks = split_ws(line);
    Edge e;
    if (toks.size() != 3 || !parse_int(toks[0], e.u) || !parse_int(toks[1], e.r) ||
        !parse_int(toks[2], e.v))
      throw ParseError(location(edge_path, lineno) + ": expected 'u<TAB>r<TAB>v' integers");
    if (e.u < 0 || e.v < 0 || e.u >= n || e.v >= n)
      throw ValidationError(location(edge_path, lineno) + ": endpoint out of range [0, " +
                            std::to_string(n) + ")");
    if (e.r < 0) throw ValidationError(location(edge_path, lineno) + ": negative relation id");
    max_rel = std::max(max_rel, e.r);
    edges.push_back(e);
  }
  return Graph(std::move(features), std::move(edges), std::max(1, max_rel + 1), directed);
}

Labeling load_labeling(const std::filesystem::path& path, const Graph& g) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open labeling file " + path.string());
  Labeling lab;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    auto toks = split_ws(line);
    NodeId node = 0;
    int cls = 0;
    if (toks.size() != 2 || !parse_int(toks[0], node) || !parse_int(toks[1], cls))
      throw ParseError(location(path, lineno) + ": expected 'node_id<TAB>class_id'");
    if (cls < 0) throw ValidationError(location(path, lineno) + ": negative class id");
    g.check_node(node);
    lab.items.push_back(Datapoint::node(node));
    lab.classes.push_back(cls);
    lab.num_classes = std::max(lab.num_classes, cls + 1);
  }
  return lab;
}

void save_graph(const Graph& g, const std::filesystem::path& edge_path,
                const std::filesystem::path& feature_path) {
  std::ofstream ef(edge_path);
  for (const Edge& e : g.edges()) ef << e.u << '\t' << e.r << '\t' << e.v << '\n';
  std::ofstream ff(feature_path);
  ff << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index i = 0; i < g.features().rows(); ++i) {
    for (Eigen::Index j = 0; j < g.features().cols(); ++j) ff << (j ? " " : "") << g.features()(i, j);
    ff << '\n';
  }
  if (!ef || !ff) throw Error("failed writing graph files");
}

void save_labeling(const Labeling& lab, const std::filesystem::path& path) {
  if (lab.level != Level::node) throw UsageError("only node labelings have a file format");
  std::ofstream out(path);
  for (std::size_t i = 0; i < lab.items.size(); ++i)
    out << lab.items[i].nodes[0] << '\t' << lab.classes[i] << '\n';
}

std::vector<NodeId> exact_hop_neighbors(const Graph& g, std::span<const NodeId> seeds, int hops) {
  if (hops < 0) throw ValidationError("hop count must be >= 0");
  if (seeds.empty()) throw ValidationError("seed set is empty");
  for (NodeId s : seeds) g.check_node(s);

  std::vector<int> dist(static_cast<std::size_t>(g.num_nodes()), -1);
  std::vector<NodeId> frontier;
  for (NodeId s : seeds) {
    if (dist[static_cast<std::size_t>(s)] < 0) {
      dist[static_cast<std::size_t>(s)] = 0;
      frontier.push_back(s);
    }
  }
  for (int h = 1; h <= hops && !frontier.empty(); ++h) {
    std::vector<NodeId> next;
    for (NodeId u : frontier)
      for (const Adjacency& a : g.neighbors(u))
        if (dist[static_cast<std::size_t>(a.node)] < 0) {
          dist[static_cast<std::size_t>(a.node)] = h;
          next.push_back(a.node);
        }
    frontier = std::move(next);
  }
  std::sort(frontier.begin(), frontier.end());
  return frontier;
}

Subgraph khop_union(const Graph& g, std::span<const NodeId> seeds, int hops,
                    std::optional<std::size_t> fanout_cap, Rng& rng) {
  if (hops < 0) throw ValidationError("hop count must be >= 0");
  if (seeds.empty()) throw ValidationError("seed set is empty");
  for (NodeId s : seeds) g.check_node(s);

  const auto n = static_cast<std::size_t>(g.num_nodes());
  // Exact distances first so every sampled node lies on its true ring.
  std::vector<int> dist(n, -1);
  std::vector<NodeId> ring;
  for (NodeId s : seeds)
    if (dist[static_cast<std::size_t>(s)] < 0) {
      dist[static_cast<std::size_t>(s)] = 0;
      ring.push_back(s);
    }
  for (int h = 1; h <= hops && !ring.empty(); ++h) {
    std::vector<NodeId> next;
    for (NodeId u : ring)
      for (const Adjacency& a : g.neighbors(u))
        if (dist[static_cast<std::size_t>(a.node)] < 0) {
          dist[static_cast<std::size_t>(a.node)] = h;
          next.push_back(a.node);
        }
    ring = std::move(next);
  }

  std::vector<char> chosen(n, 0);
  std::vector<NodeId> frontier;
  for (NodeId s : seeds)
    if (!chosen[static_cast<std::size_t>(s)]) {
      chosen[static_cast<std::size_t>(s)] = 1;
      frontier.push_back(s);
    }
  std::sort(frontier.begin(), frontier.end());
  std::vector<NodeId> nodes = frontier;

  for (int h = 1; h <= hops && !frontier.empty(); ++h) {
    std::vector<NodeId> next;
    for (NodeId u : frontier) {
      std::vector<NodeId> cand;
      for (const Adjacency& a : g.neighbors(u)) {
        const auto w = static_cast<std::size_t>(a.node);
        if (dist[w] == h && !chosen[w] &&
            std::find(cand.begin(), cand.end(), a.node) == cand.end())
          cand.push_back(a.node);
      }
      if (fanout_cap && cand.size() > *fanout_cap) {
        auto pick = sample_without_replacement(cand.size(), *fanout_cap, rng);
        std::vector<NodeId> kept;
        kept.reserve(pick.size());
        for (auto i : pick) kept.push_back(cand[i]);
        cand = std::move(kept);
      }
      for (NodeId w : cand) {
        chosen[static_cast<std::size_t>(w)] = 1;
        next.push_back(w);
      }
    }
    std::sort(next.begin(), next.end());
    nodes.insert(nodes.end(), next.begin(), next.end());
    frontier = std::move(next);
  }

  Subgraph out;
  std::sort(nodes.begin(), nodes.end());
  out.nodes = std::move(nodes);
  for (NodeId u : out.nodes)
    for (const Adjacency& a : g.incident(u)) {
      const Edge& e = g.edge(a.edge);
      // Visit each edge once: from its u endpoint.
      if (e.u == u && chosen[static_cast<std::size_t>(e.v)]) out.edges.push_back(a.edge);
    }
  std::sort(out.edges.begin(), out.edges.end());
  out.edges.erase(std::unique(out.edges.begin(), out.edges.end()), out.edges.end());
  return out;
}

}  // namespace prodigy
