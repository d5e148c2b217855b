#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prodigy/model.hpp"
#include "prodigy/prompt.hpp"

namespace prodigy {

struct EvalReport {
  std::string method;
  int ways = 0;
  int shots = 0;
  int queries = 0;
  int num_tasks = 0;
  std::uint64_t seed = 0;
  std::optional<std::int64_t> checkpoint_step;
  std::vector<double> per_task;
  double mean = 0.0;
  /// Sample standard deviation of per-task accuracy over sqrt(num_tasks).
  double std_error = 0.0;
  /// Free-form extras recorded alongside the numbers (e.g. ablation settings).
  nlohmann::json notes = nlohmann::json::object();

  /// Recomputes num_tasks, mean and std_error from per_task.
  void finalize();
};

void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);

void write_report(const EvalReport& r, const std::filesystem::path& path);
EvalReport read_report(const std::filesystem::path& path);
void write_per_task_csv(const EvalReport& r, const std::filesystem::path& path);

struct EvalOptions {
  ContextConfig context;
  /// Keys the per-task sampling streams (neighborhood fan-out).
  std::uint64_t seed = 0;
  int jobs = 1;
};

/// Predicts query classes for a prompt whose query labels have been removed.
using Predictor = std::function<std::vector<int>(const FewShotPrompt& stripped, Rng& rng)>;

/// Runs `predict` on every task (in parallel up to `jobs`) and scores against the
/// held-back query labels. Task t uses a stream derived from (seed, t).
EvalReport evaluate_tasks(std::span<const FewShotPrompt> tasks, const Predictor& predict, const EvalOptions& opt,
                          std::string method);

/// In-context predictions: prompt graph without augmentation, inference-mode forward.
std::vector<int> predict_in_context(const ModelParams& params, const Graph& g, const FewShotPrompt& stripped,
                                    const ContextConfig& ctx, Rng& rng);

EvalReport evaluate_in_context(const ModelParams& params, const Graph& g, std::span<const FewShotPrompt> tasks,
                               const EvalOptions& opt);

}  // namespace prodigy
