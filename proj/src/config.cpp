#include "prodigy/config.hpp"

#include <fstream>
#include <set>

#include "prodigy/error.hpp"

namespace prodigy {

using nlohmann::json;

namespace {

void check_keys(const json& j, const char* section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string("config section '") + section + "' must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key)) throw ConfigError(std::string("unknown config key '") + section + "." + key + "'");
}

const json& section(const json& j, const char* name) {
  static const json empty = json::object();
  return j.contains(name) ? j.at(name) : empty;
}

}  // namespace

json run_config_to_json(const RunConfig& c) {
  json train = c.train;
  train.erase("seed");
  train["method"] = c.train_method;
  train["contrastive_batch"] = c.contrastive.batch;
  return {{"seed", c.seed},
          {"output_dir", c.output_dir},
          {"graph",
           {{"edges", c.graph.edges},
            {"features", c.graph.features},
            {"labels", c.graph.labels},
            {"directed", c.graph.directed}}},
          {"model", c.model},
          {"train", train},
          {"task", c.task},
          {"eval",
           {{"method", c.eval.method},
            {"ways", c.eval.ways},
            {"shots", c.eval.shots},
            {"queries", c.eval.queries},
            {"num_tasks", c.eval.num_tasks},
            {"pool_size", c.eval.pool_size},
            {"train_fraction", c.eval.train_fraction},
            {"jobs", c.eval.jobs},
            {"finetune_epochs", c.eval.head.epochs},
            {"finetune_lr", c.eval.head.lr}}}};
}

RunConfig run_config_from_json(const json& j) {
  try {
    check_keys(j, "<root>", {"seed", "output_dir", "graph", "model", "train", "task", "eval"});
    RunConfig c;
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", c.output_dir);

    const json& g = section(j, "graph");
    check_keys(g, "graph", {"edges", "features", "labels", "directed"});
    c.graph.edges = g.value("edges", std::string());
    c.graph.features = g.value("features", std::string());
    c.graph.labels = g.value("labels", std::string());
    c.graph.directed = g.value("directed", false);

    const json& t = section(j, "task");
    check_keys(t, "task", {"ways", "shots", "queries", "nm_hops", "data_hops", "fanout_cap", "level", "augment",
                           "p_drop", "p_mask", "max_retries"});
    c.task = t.get<EpisodeConfig>();

    const json& m = section(j, "model");
    check_keys(m, "model", {"d_in", "d", "layers_data", "layers_task", "rounds", "readout", "task_edge_policy",
                            "label_init", "temperature", "num_relations", "label_feature_dim"});
    json mm = m;
    const bool edge = c.task.level == Level::edge;
    if (!mm.contains("readout")) mm["readout"] = edge ? "pair_pool" : "single_node";
    if (!mm.contains("layers_task")) mm["layers_task"] = edge ? 2 : 1;
    c.model = mm.get<ModelConfig>();
    if ((c.model.readout == Readout::pair_pool) != edge)
      throw ConfigError("model.readout must be pair_pool for edge-level tasks and single_node for node-level tasks");

    const json& tr = section(j, "train");
    check_keys(tr, "train", {"method", "steps", "batch_size", "lr", "weight_decay", "nm_count", "mt_count",
                             "attr_weight", "checkpoint_every", "grad_clip", "contrastive_batch"});
    json trc = tr;
    c.train_method = trc.value("method", c.train_method);
    if (c.train_method != "prodigy" && c.train_method != "contrastive")
      throw ConfigError("train.method must be 'prodigy' or 'contrastive'");
    c.contrastive.batch = trc.value("contrastive_batch", c.contrastive.batch);
    trc.erase("method");
    trc.erase("contrastive_batch");
    c.train = trc.get<TrainConfig>();
    c.train.seed = c.seed;
    c.train.validate();

    const json& e = section(j, "eval");
    check_keys(e, "eval", {"method", "ways", "shots", "queries", "num_tasks", "pool_size", "train_fraction", "jobs",
                           "finetune_epochs", "finetune_lr"});
    c.eval.method = e.value("method", c.eval.method);
    c.eval.ways = e.value("ways", c.eval.ways);
    c.eval.shots = e.value("shots", c.eval.shots);
    c.eval.queries = e.value("queries", c.eval.queries);
    c.eval.num_tasks = e.value("num_tasks", c.eval.num_tasks);
    c.eval.pool_size = e.value("pool_size", c.eval.pool_size);
    c.eval.train_fraction = e.value("train_fraction", c.eval.train_fraction);
    c.eval.jobs = e.value("jobs", c.eval.jobs);
    c.eval.head.epochs = e.value("finetune_epochs", c.eval.head.epochs);
    c.eval.head.lr = e.value("finetune_lr", c.eval.head.lr);
    if (c.eval.ways < 1 || c.eval.shots < 1 || c.eval.queries < 1 || c.eval.num_tasks < 1 || c.eval.jobs < 1)
      throw ConfigError("eval ways, shots, queries, num_tasks and jobs must be >= 1");
    if (c.eval.pool_size < c.eval.shots) throw ConfigError("eval.pool_size must be >= eval.shots");
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override '" + assignment + "' has an empty key segment");
    if (!node->is_object()) throw ConfigError("override '" + assignment + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

json load_config_document(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path.string());
    doc = json::parse(is, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw ConfigError(path.string() + ": not a JSON object");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return doc;
}

}  // namespace prodigy
