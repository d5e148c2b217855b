#include "prodigy/baselines.hpp"

#include <cmath>

#include "prodigy/error.hpp"

namespace prodigy {

using ad::Var;

ModelParams baseline_nopretrain(const ModelConfig& cfg, std::uint64_t seed) { return init_params(cfg, seed); }

Var nt_xent(const Var& views, double temperature) {
  const Eigen::Index two_b = views.rows();
  if (two_b < 4 || two_b % 2 != 0) throw ConfigError("contrastive loss needs a batch of at least 2 datapoints");
  const Eigen::Index b = two_b / 2;
  Matrix mask = Matrix::Zero(two_b, two_b);
  mask.diagonal().setConstant(-1e30);
  std::vector<int> partner(static_cast<std::size_t>(two_b));
  for (Eigen::Index i = 0; i < two_b; ++i) partner[static_cast<std::size_t>(i)] = static_cast<int>(i < b ? i + b : i - b);
  Var sim = ad::scale(ad::cosine_matrix(views, views), 1.0 / temperature);
  Var logits = ad::add(sim, views.tape().constant(std::move(mask)));
  return ad::scale(ad::cross_entropy_sum(logits, std::move(partner)), 1.0 / static_cast<double>(two_b));
}

ContrastiveResult baseline_contrastive_pretrain(const Graph& g, const ModelConfig& model_cfg,
                                                const TrainConfig& train_cfg, const EpisodeConfig& ep,
                                                const ContrastiveConfig& cc) {
  train_cfg.validate();
  if (cc.batch < 2) throw ConfigError("contrastive batch must be >= 2 (in-batch negatives are required)");
  if (g.feature_dim() != model_cfg.d_in) throw ConfigError("graph feature width does not match model d_in");
  const std::size_t pool = ep.level == Level::node ? static_cast<std::size_t>(g.num_nodes())
                                                   : static_cast<std::size_t>(g.num_edges());
  const std::size_t batch = std::min(pool, static_cast<std::size_t>(cc.batch));
  if (batch < 2) throw ConfigError("graph has too few datapoints for contrastive batches");

  ContrastiveResult res;
  res.params = init_params(model_cfg, derive_seed({train_cfg.seed, 0x9a7a}));
  const auto names = encoder_weight_names(res.params);
  TensorStore m = res.params.weights.zeros_like(), v = res.params.weights.zeros_like();
  const AugmentConfig aug = ep.augment.enabled ? ep.augment : AugmentConfig::off();

  for (std::int64_t step = 0; step < train_cfg.steps; ++step) {
    Rng rng = derive_rng({train_cfg.seed, 0xc0417, static_cast<std::uint64_t>(step)});
    ad::Tape tape;
    TensorStore grads = res.params.weights.zeros_like();
    Binder bind(tape, res.params, &grads);
    const auto picks = sample_without_replacement(pool, batch, rng);
    std::vector<DataGraph> views[2];
    for (std::size_t idx : picks) {
      Datapoint dp;
      if (ep.level == Level::node) {
        dp = Datapoint::node(static_cast<NodeId>(idx));
      } else {
        const Edge& e = g.edge(static_cast<EdgeId>(idx));
        dp = Datapoint::edge(e.u, e.v);
      }
      const DataGraph base = contextualize(g, dp, ep.context.hops, ep.context.fanout_cap, rng);
      for (auto& side : views) {
        if (aug.enabled) {
          DataGraph dg = drop_node(base, aug.p_drop, rng);
          side.push_back(mask_node(dg, aug.p_mask, rng));
        } else {
          side.push_back(base);
        }
      }
    }
    std::vector<Var> rows;
    for (const auto& side : views)
      for (const DataGraph& dg : side) rows.push_back(readout(bind, encode_data_graph(bind, dg), dg));
    Var loss = nt_xent(ad::vcat(rows), model_cfg.temperature);
    const double value = loss.value()(0, 0);
    if (!std::isfinite(value)) throw NumericError("non-finite contrastive loss at step " + std::to_string(step));
    tape.backward(loss);
    if (train_cfg.grad_clip) clip_grad_norm(grads, *train_cfg.grad_clip);
    adamw_update(res.params.weights, grads, m, v, step + 1, train_cfg.lr, train_cfg.weight_decay, &names);
    res.losses.push_back(value);
  }
  return res;
}

Matrix embed_datapoints(const ModelParams& params, const Graph& g, std::span<const Datapoint> points,
                        const ContextConfig& ctx, Rng& rng) {
  Matrix out(static_cast<Eigen::Index>(points.size()), params.config.d);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const DataGraph dg = contextualize(g, points[i], ctx.hops, ctx.fanout_cap, rng);
    ad::Tape tape;
    Binder bind(tape, params);
    out.row(static_cast<Eigen::Index>(i)) = readout(bind, encode_data_graph(bind, dg), dg).value();
  }
  return out;
}

std::vector<int> class_mean_predict(const Matrix& examples, std::span<const int> example_labels, int ways,
                                    const Matrix& queries) {
  if (static_cast<Eigen::Index>(example_labels.size()) != examples.rows())
    throw ShapeError("one label per example row is required");
  Matrix means = Matrix::Zero(ways, examples.cols());
  std::vector<int> counts(static_cast<std::size_t>(ways), 0);
  for (std::size_t i = 0; i < example_labels.size(); ++i) {
    const int c = example_labels[i];
    if (c < 0 || c >= ways) throw ValidationError("example label out of range");
    means.row(c) += examples.row(static_cast<Eigen::Index>(i));
    ++counts[static_cast<std::size_t>(c)];
  }
  for (int c = 0; c < ways; ++c)
    if (counts[static_cast<std::size_t>(c)] > 0) means.row(c) /= counts[static_cast<std::size_t>(c)];
  ad::Tape tape;
  const Matrix cos = ad::cosine_matrix(tape.constant(queries), tape.constant(means)).value();
  std::vector<int> pred;
  for (Eigen::Index i = 0; i < cos.rows(); ++i) pred.push_back(argmax_lowest(cos.row(i)));
  return pred;
}

std::vector<int> baseline_contrastive_classify(const ModelParams& params, const FewShotPrompt& task, const Graph& g,
                                               const ContextConfig& ctx, Rng& rng) {
  const Matrix ex = embed_datapoints(params, g, task.examples, ctx, rng);
  const Matrix q = embed_datapoints(params, g, task.queries, ctx, rng);
  return class_mean_predict(ex, task.example_labels, task.ways, q);
}

LinearHead fit_linear_head(const Matrix& x, std::span<const int> labels, int ways, const HeadConfig& cfg) {
  if (static_cast<Eigen::Index>(labels.size()) != x.rows() || x.rows() == 0)
    throw ShapeError("linear head needs one label per nonempty row");
  LinearHead h{Matrix::Zero(x.cols(), ways), RowVector::Zero(ways)};
  Matrix y = Matrix::Zero(x.rows(), ways);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= ways) throw ValidationError("label out of range");
    y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  for (int e = 0; e < cfg.epochs; ++e) {
    Matrix z = (x * h.w).rowwise() + h.b;
    z.colwise() -= z.rowwise().maxCoeff();
    Matrix p = z.array().exp();
    p.array().colwise() /= p.rowwise().sum().array();
    const Matrix gz = (p - y) * inv_n;
    h.w -= cfg.lr * (x.transpose() * gz);
    h.b -= cfg.lr * gz.colwise().sum();
  }
  return h;
}

std::vector<int> predict_linear_head(const LinearHead& head, const Matrix& x) {
  const Matrix z = (x * head.w).rowwise() + head.b;
  std::vector<int> pred;
  for (Eigen::Index i = 0; i < z.rows(); ++i) pred.push_back(argmax_lowest(z.row(i)));
  return pred;
}

std::vector<int> baseline_finetune(const ModelParams& params, const FewShotPrompt& task, const Graph& g,
                                   const ContextConfig& ctx, const HeadConfig& cfg, Rng& rng) {
  if (static_cast<int>(task.examples.size()) != task.ways * task.shots)
    throw ValidationError("finetune needs ways * shots examples");
  const Matrix ex = embed_datapoints(params, g, task.examples, ctx, rng);
  const Matrix q = embed_datapoints(params, g, task.queries, ctx, rng);
  return predict_linear_head(fit_linear_head(ex, task.example_labels, task.ways, cfg), q);
}

}  // namespace prodigy
