#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prodigy/baselines.hpp"
#include "prodigy/model.hpp"
#include "prodigy/tasks.hpp"
#include "prodigy/train.hpp"

namespace prodigy {

struct GraphSource {
  std::string edges;
  std::string features;
  /// Node labels; required for node-level multi-task episodes and for evaluation.
  std::string labels;
  bool directed = false;
};

struct EvalSettings {
  std::string method = "prodigy";
  int ways = 3;
  int shots = 3;
  int queries = 3;
  int num_tasks = 500;
  int pool_size = 10;
  double train_fraction = 0.5;
  int jobs = 1;
  HeadConfig head;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "run";
  GraphSource graph;
  ModelConfig model;
  /// "prodigy" or "contrastive".
  std::string train_method = "prodigy";
  TrainConfig train;
  ContrastiveConfig contrastive;
  EpisodeConfig task;
  EvalSettings eval;
};

nlohmann::json run_config_to_json(const RunConfig& c);
/// Unknown keys are rejected with ConfigError. Level-dependent model defaults (readout,
/// task depth) are filled in when the document leaves them out.
RunConfig run_config_from_json(const nlohmann::json& j);

/// Applies `a.b.c=value`; the value is parsed as JSON when it parses, else taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Reads `path` (empty means all defaults) and applies the overrides in order.
nlohmann::json load_config_document(const std::filesystem::path& path, const std::vector<std::string>& overrides);

}  // namespace prodigy
