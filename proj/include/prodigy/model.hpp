#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prodigy/autodiff.hpp"
#include "prodigy/prompt.hpp"

namespace prodigy {

enum class Readout { single_node, pair_pool };
enum class TaskEdgePolicy { all, positive_and_query };
enum class LabelInit { seeded_gaussian, provided_features };
enum class Mode { train, infer };

struct ModelConfig {
  int d_in = 0;
  int d = 256;
  int layers_data = 2;
  int layers_task = 1;
  int rounds = 1;
  Readout readout = Readout::single_node;
  TaskEdgePolicy edge_policy = TaskEdgePolicy::all;
  LabelInit label_init = LabelInit::seeded_gaussian;
  double temperature = 0.1;
  /// Relation count of the source graphs; one-hot relation messages are used when > 1.
  int num_relations = 1;
  /// Width of provided class features; a projection to d is learned unless it equals d.
  int label_feature_dim = 0;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Named dense tensors in insertion order.
class TensorStore {
 public:
  void add(std::string name, Matrix value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Matrix& at(const std::string& name);
  const Matrix& at(const std::string& name) const;
  std::vector<std::pair<std::string, Matrix>>& entries() { return entries_; }
  const std::vector<std::pair<std::string, Matrix>>& entries() const { return entries_; }
  /// Same names and shapes, all zeros.
  TensorStore zeros_like() const;
  std::size_t num_values() const;
  bool operator==(const TensorStore& o) const { return entries_ == o.entries_; }

 private:
  std::vector<std::pair<std::string, Matrix>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Task-graph normalization keeps one statistics group. Example and label nodes (the prompt
/// context) define the batch statistics; query nodes are normalized with them without
/// contributing, so label embeddings never depend on queries.
inline constexpr int kBnGroups = 1;

struct ModelParams {
  ModelConfig config;
  TensorStore weights;
  /// Per task layer: "<layer>.mean" / "<layer>.var", kBnGroups x d.
  TensorStore bn_running;
  /// Mixed into every label-embedding seed.
  std::uint64_t label_salt = 0;

  bool operator==(const ModelParams& o) const {
    return config == o.config && weights == o.weights && bn_running == o.bn_running && label_salt == o.label_salt;
  }
};

/// Glorot-uniform weights, zero biases, unit BN scale, running stats (0, 1).
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Names of the data-graph encoder weights (message passing and edge readout).
std::vector<std::string> encoder_weight_names(const ModelParams& p);

// ---- tape-level building blocks -------------------------------------------

/// Binds parameters to a tape lazily; gradients land in `grads` when provided.
class Binder {
 public:
  Binder(ad::Tape& tape, const ModelParams& params, TensorStore* grads = nullptr)
      : tape_(tape), params_(params), grads_(grads) {}
  ad::Var operator()(const std::string& name);
  ad::Tape& tape() { return tape_; }
  const ModelParams& params() const { return params_; }

 private:
  ad::Tape& tape_;
  const ModelParams& params_;
  TensorStore* grads_;
  std::map<std::string, ad::Var> bound_;
};

struct AttentionTrace {
  std::vector<int> dst;
  std::vector<int> src;
  Eigen::VectorXd alpha;
};

/// Running-statistic observation from one normalization layer.
struct BnObservation {
  std::string layer;
  ad::BatchNormObservation stats;
};

struct TapeForward {
  ad::Var logits;                 // n x m, scaled by 1/temperature
  ad::Var cosines;                // unscaled
  ad::Var embeddings;             // all task-graph nodes after the last layer
  std::vector<ad::Var> data_embeddings;  // per data graph, node embeddings E
  std::vector<ad::Var> attr_losses;      // per data graph; constant 0 when nothing masked
  std::vector<AttentionTrace> attention;
  std::vector<BnObservation> bn;
};

ad::Var encode_data_graph(Binder& b, const DataGraph& dg);
ad::Var readout(Binder& b, const ad::Var& E, const DataGraph& dg);
ad::Var attr_loss(Binder& b, const DataGraph& dg, const ad::Var& E);
/// `layers_task` attention layers over the task graph starting from H (data rows then label rows).
ad::Var task_message_pass(Binder& b, const TaskGraph& tg, ad::Var H, Mode mode,
                          std::vector<AttentionTrace>* trace, std::vector<BnObservation>* bn);
TapeForward forward_tape(Binder& b, const PromptGraph& pg, Mode mode);

// ---- value-level operations -------------------------------------------------

struct Logits {
  Matrix scaled;    // n x m
  Matrix cosine;    // unscaled, in [-1, 1]
  std::vector<int> predicted;
  /// (query, label) pairs whose cosine was undefined (zero-norm row) and set to 0.
  std::vector<std::pair<int, int>> zero_norm;
};

Matrix encode_data_graph(const ModelParams& p, const DataGraph& dg);
RowVector readout_node(const Matrix& E, const DataGraph& dg);
RowVector readout_edge(const ModelParams& p, const Matrix& E, const DataGraph& dg);
Matrix init_label_embeddings(const ModelParams& p, int ways, std::span<const std::int64_t> class_meta,
                             std::uint64_t label_seed, const std::optional<Matrix>& label_features);

struct TaskPassResult {
  Matrix H;
  std::vector<AttentionTrace> attention;
};
TaskPassResult task_message_pass(const ModelParams& p, const TaskGraph& tg, const Matrix& data_embeds,
                                 const Matrix& label_embeds, Mode mode);
Logits predict_logits(const Matrix& H, const TaskGraph& tg, double temperature);
double attr_loss(const ModelParams& p, const DataGraph& dg, const Matrix& E);

struct ForwardResult {
  Logits logits;
  std::vector<double> attr_losses;
  Matrix embeddings;
  std::vector<AttentionTrace> attention;
  std::vector<BnObservation> bn;
};

ForwardResult forward(const ModelParams& p, const PromptGraph& pg, Mode mode = Mode::infer);

/// Arg-max with ties to the lowest index.
int argmax_lowest(const Eigen::Ref<const RowVector>& row);

/// Folds observed batch statistics into the running averages.
void apply_bn_observations(ModelParams& p, std::span<const BnObservation> obs, double momentum = 0.1);

}  // namespace prodigy
