#include <string>

#include "prodigy/container.hpp"
#include "prodigy/error.hpp"
#include "prodigy/prompt.hpp"

namespace prodigy {

namespace {

constexpr std::string_view kMagic = "PRDGPG01";
constexpr std::uint32_t kVersion = 1;

using nlohmann::json;

const char* level_name(Level l) { return l == Level::node ? "node" : "edge"; }

Level parse_level(const std::string& s) {
  if (s == "node") return Level::node;
  if (s == "edge") return Level::edge;
  throw LoadError("unknown level '" + s + "'");
}

}  // namespace

void save_prompt_graph(const PromptGraph& pg, const std::filesystem::path& path) {
  Container c;
  json& h = c.header;
  h["format"] = "prompt-graph";
  h["level"] = level_name(pg.level);
  h["label_seed"] = pg.label_seed;
  h["class_meta"] = pg.class_meta;

  const TaskGraph& tg = pg.task_graph;
  json t;
  t["ways"] = tg.ways;
  t["shots"] = tg.shots;
  t["data_nodes"] = json::array();
  for (const auto& dn : tg.data_nodes)
    t["data_nodes"].push_back({dn.prompt_index, dn.role == DataRole::example ? "example" : "query"});
  t["label_nodes"] = tg.label_nodes;
  t["edge_columns"] = {"data_index", "label_index", "is_example", "is_true"};
  t["edges"] = json::array();
  for (const auto& e : tg.edges)
    t["edges"].push_back({e.data_index, e.label_index, int(e.is_example), int(e.is_true)});
  h["task_graph"] = std::move(t);

  h["data_graphs"] = json::array();
  for (const DataGraph& dg : pg.data_graphs) {
    json d;
    d["level"] = level_name(dg.level);
    d["directed"] = dg.directed;
    d["num_relations"] = dg.num_relations;
    d["local_nodes"] = dg.local_nodes;
    d["edges"] = json::array();
    for (const auto& e : dg.edges) d["edges"].push_back({e.u, e.r, e.v});
    d["input_local"] = dg.input_local;
    d["dropped"] = dg.aug.dropped;
    d["masked"] = dg.aug.masked;
    d["masked_local"] = dg.masked_local;
    d["features"] = c.put(dg.features);
    d["masked_original"] = c.put(dg.masked_original);
    h["data_graphs"].push_back(std::move(d));
  }
  h["label_features"] = pg.label_features ? c.put(*pg.label_features) : json(nullptr);
  write_container(path, kMagic, kVersion, c, false);
}

PromptGraph load_prompt_graph(const std::filesystem::path& path) {
  Container c = read_container(path, kMagic, kVersion, false);
  const json& h = c.header;
  PromptGraph pg;
  try {
    if (h.at("format") != "prompt-graph") throw LoadError("not a prompt-graph dump");
    pg.level = parse_level(h.at("level").get<std::string>());
    pg.label_seed = h.at("label_seed").get<std::uint64_t>();
    pg.class_meta = h.at("class_meta").get<std::vector<std::int64_t>>();

    const json& t = h.at("task_graph");
    TaskGraph& tg = pg.task_graph;
    tg.ways = t.at("ways").get<int>();
    tg.shots = t.at("shots").get<int>();
    for (const auto& dn : t.at("data_nodes"))
      tg.data_nodes.push_back({dn.at(0).get<int>(), dn.at(1) == "example" ? DataRole::example : DataRole::query});
    tg.label_nodes = t.at("label_nodes").get<std::vector<int>>();
    for (const auto& e : t.at("edges"))
      tg.edges.push_back({e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<int>() != 0, e.at(3).get<int>() != 0});

    for (const json& d : h.at("data_graphs")) {
      DataGraph dg;
      dg.level = parse_level(d.at("level").get<std::string>());
      dg.directed = d.at("directed").get<bool>();
      dg.num_relations = d.at("num_relations").get<int>();
      dg.local_nodes = d.at("local_nodes").get<std::vector<NodeId>>();
      for (const auto& e : d.at("edges")) dg.edges.push_back({e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<int>()});
      dg.input_local = d.at("input_local").get<std::vector<int>>();
      dg.aug.dropped = d.at("dropped").get<std::vector<NodeId>>();
      dg.aug.masked = d.at("masked").get<std::vector<NodeId>>();
      dg.masked_local = d.at("masked_local").get<std::vector<int>>();
      dg.features = c.get(d.at("features"));
      dg.masked_original = c.get(d.at("masked_original"));
      pg.data_graphs.push_back(std::move(dg));
    }
    if (!h.at("label_features").is_null()) pg.label_features = c.get(h.at("label_features"));
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": malformed prompt-graph header: " + e.what());
  }
  return pg;
}

}  // namespace prodigy
