#include "prodigy/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "prodigy/error.hpp"

namespace prodigy {

using nlohmann::json;

namespace {

const char* level_name(Level l) { return l == Level::node ? "node" : "edge"; }

Level parse_level(const std::string& s) {
  if (s == "node") return Level::node;
  if (s == "edge") return Level::edge;
  throw ConfigError("unknown level '" + s + "' (expected node or edge)");
}

bool all_finite(const TensorStore& s) {
  for (const auto& [_, m] : s.entries())
    if (!m.allFinite()) return false;
  return true;
}

std::string rng_to_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng rng_from_string(const std::string& s) {
  Rng rng;
  std::istringstream is(s);
  is >> rng;
  if (is.fail()) throw LoadError("checkpoint rng state is malformed");
  return rng;
}

json store_json(const Telemetry& t) {
  return {{"last_loss", t.last_loss}, {"last_acc", t.last_acc}, {"ema_loss", t.ema_loss}, {"ema_acc", t.ema_acc}};
}

Family family_at(std::int64_t episode, const TrainConfig& cfg) {
  const std::int64_t cycle = cfg.nm_count + cfg.mt_count;
  return episode % cycle < cfg.nm_count ? Family::neighbor_matching : Family::multi_task;
}

void write_metrics_row(std::ostream& os, const StepMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%s,%.17g,%.17g,%.17g,%.3f\n", static_cast<long long>(m.step),
                m.family.c_str(), m.loss_ce, m.loss_attr, m.query_acc, m.wall_ms);
  os << buf;
}

}  // namespace

// ---- configs ---------------------------------------------------------------

void TrainConfig::validate() const {
  if (steps < 0) throw ConfigError("train.steps must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
  if (nm_count < 0 || mt_count < 0 || nm_count + mt_count == 0)
    throw ConfigError("train episode ratio counts must be >= 0 and not both 0");
  if (!(attr_weight >= 0.0)) throw ConfigError("train.attr_weight must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
  if (grad_clip && !(*grad_clip > 0.0)) throw ConfigError("train.grad_clip must be > 0 when set");
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"steps", c.steps},
       {"batch_size", c.batch_size},
       {"lr", c.lr},
       {"weight_decay", c.weight_decay},
       {"nm_count", c.nm_count},
       {"mt_count", c.mt_count},
       {"attr_weight", c.attr_weight},
       {"checkpoint_every", c.checkpoint_every},
       {"grad_clip", c.grad_clip ? json(*c.grad_clip) : json(nullptr)},
       {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
  TrainConfig d;
  c.steps = j.value("steps", d.steps);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.lr = j.value("lr", d.lr);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.nm_count = j.value("nm_count", d.nm_count);
  c.mt_count = j.value("mt_count", d.mt_count);
  c.attr_weight = j.value("attr_weight", d.attr_weight);
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
  c.grad_clip = j.contains("grad_clip") && !j.at("grad_clip").is_null()
                    ? std::optional<double>(j.at("grad_clip").get<double>())
                    : std::nullopt;
  c.seed = j.value("seed", d.seed);
}

void to_json(json& j, const EpisodeConfig& c) {
  j = {{"ways", c.ways},
       {"shots", c.shots},
       {"queries", c.queries},
       {"nm_hops", c.nm_hops},
       {"data_hops", c.context.hops},
       {"fanout_cap", c.context.fanout_cap ? json(*c.context.fanout_cap) : json(nullptr)},
       {"level", level_name(c.level)},
       {"augment", c.augment.enabled},
       {"p_drop", c.augment.p_drop},
       {"p_mask", c.augment.p_mask},
       {"max_retries", c.max_retries}};
}

void from_json(const json& j, EpisodeConfig& c) {
  EpisodeConfig d;
  c.ways = j.value("ways", d.ways);
  c.shots = j.value("shots", d.shots);
  c.queries = j.value("queries", d.queries);
  c.nm_hops = j.value("nm_hops", d.nm_hops);
  c.context.hops = j.value("data_hops", d.context.hops);
  if (j.contains("fanout_cap"))
    c.context.fanout_cap = j.at("fanout_cap").is_null() ? std::nullopt
                                                         : std::optional<std::size_t>(j.at("fanout_cap").get<std::size_t>());
  else
    c.context.fanout_cap = d.context.fanout_cap;
  c.level = parse_level(j.value("level", std::string(level_name(d.level))));
  c.augment.enabled = j.value("augment", d.augment.enabled);
  c.augment.p_drop = j.value("p_drop", d.augment.p_drop);
  c.augment.p_mask = j.value("p_mask", d.augment.p_mask);
  c.max_retries = j.value("max_retries", d.max_retries);
  if (c.ways < 1 || c.shots < 1 || c.queries < 0) throw ConfigError("task ways/shots must be >= 1, queries >= 0");
  if (c.nm_hops < 1 || c.context.hops < 0) throw ConfigError("task hop counts out of range");
  for (double p : {c.augment.p_drop, c.augment.p_mask})
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("augmentation probabilities must lie in [0, 1]");
}

// ---- loss ------------------------------------------------------------------

LossResult compute_loss(const ModelParams& params, std::span<const Episode> batch, double attr_weight) {
  if (batch.empty()) throw UsageError("compute_loss needs a nonempty batch");
  int q_nm = 0, q_mt = 0, data_graphs = 0;
  for (const Episode& e : batch) {
    (e.family == Family::neighbor_matching ? q_nm : q_mt) += static_cast<int>(e.query_labels.size());
    data_graphs += static_cast<int>(e.graph.data_graphs.size());
  }

  LossResult out;
  out.grads = params.weights.zeros_like();
  LossMetrics& m = out.metrics;
  m.queries_nm = q_nm;
  m.queries_mt = q_mt;
  double attr_total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Episode& e = batch[i];
    const int qf = e.family == Family::neighbor_matching ? q_nm : q_mt;
    ad::Tape tape;
    TensorStore g = params.weights.zeros_like();
    Binder b(tape, params, &g);
    TapeForward f = forward_tape(b, e.graph, Mode::train);
    if (static_cast<Eigen::Index>(e.query_labels.size()) != f.logits.rows())
      throw ValidationError("episode query labels do not match its query count");

    ad::Var total = tape.constant(Matrix::Zero(1, 1));
    double ce_value = 0.0;
    if (qf > 0 && !e.query_labels.empty()) {
      ad::Var ce = ad::cross_entropy_sum(f.logits, e.query_labels);
      ce_value = ce.value()(0, 0);
      total = ad::add(total, ad::scale(ce, 1.0 / qf));
    }
    double attr_value = 0.0;
    if (!f.attr_losses.empty()) {
      ad::Var attr = f.attr_losses.front();
      for (std::size_t k = 1; k < f.attr_losses.size(); ++k) attr = ad::add(attr, f.attr_losses[k]);
      attr_value = attr.value()(0, 0);
      if (attr_weight > 0.0) total = ad::add(total, ad::scale(attr, attr_weight / data_graphs));
    }
    tape.backward(total);

    const bool finite = std::isfinite(ce_value) && std::isfinite(attr_value) && all_finite(g);
    if (!finite && !out.nonfinite_episode) out.nonfinite_episode = i;

    (e.family == Family::neighbor_matching ? m.ce_nm : m.ce_mt) += ce_value;
    attr_total += attr_value;
    for (std::size_t k = 0; k < g.entries().size(); ++k) out.grads.entries()[k].second += g.entries()[k].second;
    for (auto& o : f.bn) out.bn.push_back(std::move(o));
    const Matrix& logits = f.logits.value();
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      m.correct += argmax_lowest(logits.row(r)) == e.query_labels[static_cast<std::size_t>(r)];
      ++m.queries;
    }
  }
  if (q_nm > 0) m.ce_nm /= q_nm;
  if (q_mt > 0) m.ce_mt /= q_mt;
  m.loss_ce = m.ce_nm + m.ce_mt;
  m.loss_attr = data_graphs > 0 ? attr_total / data_graphs : 0.0;
  m.loss = m.loss_ce + attr_weight * m.loss_attr;
  return out;
}

// ---- optimizer ---------------------------------------------------------------

void adamw_update(TensorStore& weights, const TensorStore& grads, TensorStore& m, TensorStore& v, std::int64_t t,
                  double lr, double weight_decay, const std::vector<std::string>* only) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  auto step_one = [&](const std::string& name) {
    Matrix& w = weights.at(name);
    const Matrix& g = grads.at(name);
    Matrix& mm = m.at(name);
    Matrix& vv = v.at(name);
    mm = b1 * mm + (1.0 - b1) * g;
    vv = b2 * vv + (1.0 - b2) * g.cwiseProduct(g);
    w -= lr * weight_decay * w;
    w.array() -= lr * (mm.array() / c1) / ((vv.array() / c2).sqrt() + eps);
  };
  if (only)
    for (const auto& name : *only) step_one(name);
  else
    for (const auto& [name, _] : weights.entries()) step_one(name);
}

double clip_grad_norm(TensorStore& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, g] : grads.entries()) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0)
    for (auto& [_, g] : grads.entries()) g *= max_norm / norm;
  return norm;
}

// ---- state ---------------------------------------------------------------------

TrainState initial_state(const ModelConfig& model_cfg, const TrainConfig& train_cfg) {
  train_cfg.validate();
  TrainState s;
  s.params = init_params(model_cfg, derive_seed({train_cfg.seed, 0x9a7a}));
  s.adam_m = s.params.weights.zeros_like();
  s.adam_v = s.params.weights.zeros_like();
  s.rng = Rng(derive_seed({train_cfg.seed, 0x57e9}));
  return s;
}

CheckpointData to_checkpoint(const TrainState& s, const TrainConfig& cfg) {
  CheckpointData ck;
  ck.params = s.params;
  ck.groups.emplace("adam_m", s.adam_m);
  ck.groups.emplace("adam_v", s.adam_v);
  ck.meta = {{"train_config", cfg},
             {"seed", cfg.seed},
             {"step", s.step},
             {"rng", rng_to_string(s.rng)},
             {"telemetry", store_json(s.telemetry)}};
  return ck;
}

TrainState from_checkpoint(const CheckpointData& ck, const TrainConfig& cfg) {
  TrainState s;
  try {
    const auto seed = ck.meta.at("seed").get<std::uint64_t>();
    if (seed != cfg.seed)
      throw ConfigError("checkpoint was written with seed " + std::to_string(seed) + ", run is configured with seed " +
                        std::to_string(cfg.seed));
    s.params = ck.params;
    s.adam_m = ck.groups.at("adam_m");
    s.adam_v = ck.groups.at("adam_v");
    s.step = ck.meta.at("step").get<std::int64_t>();
    s.rng = rng_from_string(ck.meta.at("rng").get<std::string>());
    const json& t = ck.meta.at("telemetry");
    s.telemetry = {t.at("last_loss").get<double>(), t.at("last_acc").get<double>(), t.at("ema_loss").get<double>(),
                   t.at("ema_acc").get<double>()};
  } catch (const json::exception& e) {
    throw LoadError(std::string("checkpoint lacks training state: ") + e.what());
  } catch (const std::out_of_range&) {
    throw LoadError("checkpoint lacks optimizer moments");
  }
  return s;
}

std::string checkpoint_name(std::int64_t step) { return "ckpt_" + std::to_string(step) + ".bin"; }

// ---- episodes --------------------------------------------------------------------

FewShotPrompt sample_prompt(const Graph& g, const Labeling* lab, Family family, const EpisodeConfig& ep, Rng& rng) {
  FewShotPrompt p;
  if (family == Family::neighbor_matching) {
    p = ep.level == Level::node ? sample_nm_node(g, ep.ways, ep.shots, ep.queries, ep.nm_hops, rng, ep.max_retries)
                                : sample_nm_edge(g, ep.ways, ep.shots, ep.queries, ep.nm_hops, rng, ep.max_retries);
  } else if (ep.level == Level::node) {
    if (!lab) throw ConfigError("multi-task episodes need a node labeling");
    const int ways = std::min(ep.ways, usable_classes(*lab, ep.shots));
    if (ways < 1) throw TaskGenerationError("no class has enough labeled nodes for a multi-task episode");
    p = sample_mt_node(g, *lab, ways, ep.shots, ep.queries, rng);
  } else {
    if (g.num_relations() < 2) throw ConfigError("edge multi-task episodes need at least two relation types");
    const int ways = std::min(ep.ways, usable_classes(relation_labeling(g), ep.shots));
    if (ways < 1) throw TaskGenerationError("no relation has enough edges for a multi-task episode");
    p = sample_mt_edge(g, ways, ep.shots, ep.queries, rng);
  }
  return p;
}

Episode sample_episode(const Graph& g, const Labeling* lab, Family family, const EpisodeConfig& ep, Rng& rng) {
  const FewShotPrompt p = sample_prompt(g, lab, family, ep, rng);
  Episode e;
  e.family = family;
  e.query_labels = p.query_labels;
  AugmentConfig aug = ep.augment.enabled ? ep.augment : AugmentConfig::off();
  e.graph = assemble_prompt_graph(g, strip_query_labels(p), ep.context, aug, rng);
  return e;
}

// ---- loop ------------------------------------------------------------------------

PretrainResult continue_training(TrainState state, const Graph& g, const Labeling* lab, const TrainConfig& cfg,
                                 const EpisodeConfig& ep, const PretrainIO& io) {
  cfg.validate();
  if (cfg.mt_count > 0 && ep.level == Level::node && !lab)
    throw ConfigError("multi-task episodes requested (mt_count > 0) but no node labels were given");
  if (cfg.mt_count > 0 && ep.level == Level::edge && g.num_relations() < 2)
    throw ConfigError("edge multi-task episodes need at least two relation types");
  if (g.feature_dim() != state.params.config.d_in)
    throw ConfigError("graph feature width " + std::to_string(g.feature_dim()) + " does not match model d_in " +
                      std::to_string(state.params.config.d_in));

  PretrainResult res;
  std::ofstream metrics;
  if (io.output_dir) {
    std::filesystem::create_directories(*io.output_dir);
    const auto path = *io.output_dir / "metrics.csv";
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    metrics.open(path, std::ios::app);
    if (!metrics) throw Error("cannot open " + path.string());
    if (fresh) metrics << "step,family,loss_ce,loss_attr,query_acc,wall_ms\n";
  }
  auto write_ckpt = [&]() {
    if (!io.output_dir) return;
    const auto path = *io.output_dir / checkpoint_name(state.step);
    save_checkpoint(to_checkpoint(state, cfg), path);
    res.checkpoints.push_back(path);
  };

  std::int64_t last_ckpt = -1;
  while (state.step < cfg.steps) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t step_key = state.rng();
    std::vector<Episode> batch;
    bool has_nm = false, has_mt = false;
    for (int i = 0; i < cfg.batch_size; ++i) {
      const Family fam = family_at(state.step * cfg.batch_size + i, cfg);
      (fam == Family::neighbor_matching ? has_nm : has_mt) = true;
      Rng rng = derive_rng({step_key, static_cast<std::uint64_t>(i)});
      batch.push_back(sample_episode(g, lab, fam, ep, rng));
    }

    LossResult lr = compute_loss(state.params, batch, cfg.attr_weight);
    if (lr.nonfinite_episode || !std::isfinite(lr.metrics.loss)) {
      std::string where;
      if (io.output_dir) {
        const std::size_t bad = lr.nonfinite_episode.value_or(0);
        const auto dump = *io.output_dir / ("nonfinite_step" + std::to_string(state.step) + "_episode" +
                                            std::to_string(bad) + ".bin");
        save_prompt_graph(batch[bad].graph, dump);
        where = "; offending prompt graph written to " + dump.string();
      }
      throw NumericError("non-finite loss at step " + std::to_string(state.step) + " (ce " +
                         std::to_string(lr.metrics.loss_ce) + ", attr " + std::to_string(lr.metrics.loss_attr) + ")" +
                         where);
    }
    if (cfg.grad_clip) clip_grad_norm(lr.grads, *cfg.grad_clip);
    apply_bn_observations(state.params, lr.bn);
    adamw_update(state.params.weights, lr.grads, state.adam_m, state.adam_v, state.step + 1, cfg.lr,
                 cfg.weight_decay);

    StepMetrics row;
    row.step = state.step;
    row.family = has_nm && has_mt ? "nm+mt" : has_nm ? "nm" : "mt";
    row.loss_ce = lr.metrics.loss_ce;
    row.loss_attr = lr.metrics.loss_attr;
    row.query_acc = lr.metrics.query_acc();
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    Telemetry& tel = state.telemetry;
    const bool first = state.step == 0;
    tel.last_loss = lr.metrics.loss;
    tel.last_acc = row.query_acc;
    tel.ema_loss = first ? tel.last_loss : 0.9 * tel.ema_loss + 0.1 * tel.last_loss;
    tel.ema_acc = first ? tel.last_acc : 0.9 * tel.ema_acc + 0.1 * tel.last_acc;
    ++state.step;

    if (metrics) {
      write_metrics_row(metrics, row);
      metrics.flush();
    }
    res.log.push_back(row);
    if (io.on_step) io.on_step(row);
    if (cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0) {
      write_ckpt();
      last_ckpt = state.step;
    }
  }
  if (last_ckpt != state.step) write_ckpt();
  res.state = std::move(state);
  return res;
}

PretrainResult pretrain(const Graph& g, const Labeling* lab, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                        const EpisodeConfig& ep, const PretrainIO& io) {
  return continue_training(initial_state(model_cfg, train_cfg), g, lab, train_cfg, ep, io);
}

PretrainResult resume(const std::filesystem::path& checkpoint, const Graph& g, const Labeling* lab,
                      const TrainConfig& train_cfg, const EpisodeConfig& ep, const PretrainIO& io) {
  return continue_training(from_checkpoint(load_checkpoint(checkpoint), train_cfg), g, lab, train_cfg, ep, io);
}

}  // namespace prodigy
