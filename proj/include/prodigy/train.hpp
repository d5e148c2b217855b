#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prodigy/checkpoint.hpp"
#include "prodigy/model.hpp"
#include "prodigy/prompt.hpp"
#include "prodigy/tasks.hpp"

namespace prodigy {

struct TrainConfig {
  std::int64_t steps = 1000;
  int batch_size = 1;
  double lr = 1e-3;
  double weight_decay = 1e-3;
  /// Episodes are drawn round-robin: `nm_count` neighbor-matching then `mt_count` multi-task.
  int nm_count = 1;
  int mt_count = 1;
  double attr_weight = 1.0;
  std::int64_t checkpoint_every = 500;
  std::optional<double> grad_clip;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// How pretraining episodes are drawn and contextualized.
struct EpisodeConfig {
  int ways = 30;
  int shots = 3;
  int queries = 4;
  /// Exact ring distance defining a neighbor-matching class.
  int nm_hops = 2;
  ContextConfig context;
  Level level = Level::node;
  AugmentConfig augment;
  int max_retries = kDefaultMaxRetries;
};

void to_json(nlohmann::json& j, const EpisodeConfig& c);
void from_json(const nlohmann::json& j, EpisodeConfig& c);

/// One episode ready for the loss: its prompt graph and ground truth.
struct Episode {
  Family family = Family::neighbor_matching;
  PromptGraph graph;
  std::vector<int> query_labels;
};

struct LossMetrics {
  double loss = 0.0;
  double loss_ce = 0.0;   // sum over families of the per-family mean CE
  double loss_attr = 0.0; // mean attribute loss over all data graphs
  double ce_nm = 0.0;
  double ce_mt = 0.0;
  int queries_nm = 0;
  int queries_mt = 0;
  int correct = 0;
  int queries = 0;
  double query_acc() const { return queries == 0 ? 0.0 : static_cast<double>(correct) / queries; }
};

struct LossResult {
  LossMetrics metrics;
  /// Gradient of the loss w.r.t. every weight (same layout as params.weights).
  TensorStore grads;
  std::vector<BnObservation> bn;
  /// Index of the first episode whose contribution was non-finite.
  std::optional<std::size_t> nonfinite_episode;
};

/// Cross-entropy averaged within each family, summed across families present, plus
/// `attr_weight` times the attribute loss averaged over every data graph of the batch.
LossResult compute_loss(const ModelParams& params, std::span<const Episode> batch, double attr_weight);

struct StepMetrics {
  std::int64_t step = 0;
  std::string family;
  double loss_ce = 0.0;
  double loss_attr = 0.0;
  double query_acc = 0.0;
  double wall_ms = 0.0;
};

struct Telemetry {
  double last_loss = 0.0;
  double last_acc = 0.0;
  double ema_loss = 0.0;
  double ema_acc = 0.0;
  friend bool operator==(const Telemetry&, const Telemetry&) = default;
};

struct TrainState {
  ModelParams params;
  TensorStore adam_m;
  TensorStore adam_v;
  std::int64_t step = 0;
  Rng rng;
  Telemetry telemetry;
};

/// Fresh state for a run: initialized params, zero moments, rng seeded from config.
TrainState initial_state(const ModelConfig& model_cfg, const TrainConfig& train_cfg);

CheckpointData to_checkpoint(const TrainState& s, const TrainConfig& cfg);
/// Rejects a checkpoint written under a different seed.
TrainState from_checkpoint(const CheckpointData& ck, const TrainConfig& cfg);

struct PretrainIO {
  /// Checkpoints, metrics.csv and failure dumps go here when set.
  std::optional<std::filesystem::path> output_dir;
  /// Called after every step.
  std::function<void(const StepMetrics&)> on_step;
};

struct PretrainResult {
  TrainState state;
  std::vector<StepMetrics> log;
  std::vector<std::filesystem::path> checkpoints;
};

/// Draws a pretraining prompt of the given family. Multi-task ways are capped at the number
/// of classes with enough members.
FewShotPrompt sample_prompt(const Graph& g, const Labeling* lab, Family family, const EpisodeConfig& ep, Rng& rng);

/// Draws a prompt and assembles its (augmented) prompt graph from the same stream.
Episode sample_episode(const Graph& g, const Labeling* lab, Family family, const EpisodeConfig& ep, Rng& rng);

/// Runs steps from `state.step` up to `train_cfg.steps`.
PretrainResult continue_training(TrainState state, const Graph& g, const Labeling* lab,
                                 const TrainConfig& train_cfg, const EpisodeConfig& ep, const PretrainIO& io);

PretrainResult pretrain(const Graph& g, const Labeling* lab, const ModelConfig& model_cfg,
                        const TrainConfig& train_cfg, const EpisodeConfig& ep, const PretrainIO& io);

PretrainResult resume(const std::filesystem::path& checkpoint, const Graph& g, const Labeling* lab,
                      const TrainConfig& train_cfg, const EpisodeConfig& ep, const PretrainIO& io);

/// AdamW with decoupled weight decay; `t` is the 1-based update count.
void adamw_update(TensorStore& weights, const TensorStore& grads, TensorStore& m, TensorStore& v,
                  std::int64_t t, double lr, double weight_decay, const std::vector<std::string>* only = nullptr);

/// Scales grads so their global L2 norm is at most `max_norm`; returns the pre-clip norm.
double clip_grad_norm(TensorStore& grads, double max_norm);

std::string checkpoint_name(std::int64_t step);

}  // namespace prodigy
