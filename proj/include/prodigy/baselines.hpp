#pragma once

#include <optional>
#include <vector>

#include "prodigy/model.hpp"
#include "prodigy/train.hpp"

namespace prodigy {

/// Freshly initialized full model, evaluated in context without training.
ModelParams baseline_nopretrain(const ModelConfig& cfg, std::uint64_t seed);

struct ContrastiveConfig {
  /// Datapoints per step; each contributes two views.
  int batch = 32;
};

/// Normalized-temperature cross-entropy over 2B views where rows i and i+B are positives.
ad::Var nt_xent(const ad::Var& views, double temperature);

struct ContrastiveResult {
  ModelParams params;
  std::vector<double> losses;
};

/// Trains only the data-graph encoder on two augmented views of each sampled datapoint.
/// Uses train_cfg.{steps, lr, weight_decay, seed, grad_clip}; episode config supplies the
/// level, neighborhood and augmentation.
ContrastiveResult baseline_contrastive_pretrain(const Graph& g, const ModelConfig& model_cfg,
                                                const TrainConfig& train_cfg, const EpisodeConfig& ep,
                                                const ContrastiveConfig& cc);

/// Encoder readouts for each datapoint, without augmentation. One row per datapoint.
Matrix embed_datapoints(const ModelParams& params, const Graph& g, std::span<const Datapoint> points,
                        const ContextConfig& ctx, Rng& rng);

/// Per query, the class whose example mean has the highest cosine; ties go to the lowest index.
std::vector<int> class_mean_predict(const Matrix& examples, std::span<const int> example_labels, int ways,
                                    const Matrix& queries);

std::vector<int> baseline_contrastive_classify(const ModelParams& params, const FewShotPrompt& task, const Graph& g,
                                               const ContextConfig& ctx, Rng& rng);

struct HeadConfig {
  int epochs = 100;
  double lr = 1e-2;
};

struct LinearHead {
  Matrix w;     // d x ways
  RowVector b;  // ways
};

/// Zero-initialized linear head fitted by full-batch gradient descent on mean cross-entropy.
LinearHead fit_linear_head(const Matrix& x, std::span<const int> labels, int ways, const HeadConfig& cfg);
std::vector<int> predict_linear_head(const LinearHead& head, const Matrix& x);

std::vector<int> baseline_finetune(const ModelParams& params, const FewShotPrompt& task, const Graph& g,
                                   const ContextConfig& ctx, const HeadConfig& cfg, Rng& rng);

}  // namespace prodigy
