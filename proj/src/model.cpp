#include "prodigy/model.hpp"

#include <array>
#include <cmath>

#include "prodigy/error.hpp"

namespace prodigy {

using ad::Var;

namespace {

const char* readout_name(Readout r) { return r == Readout::single_node ? "single_node" : "pair_pool"; }
const char* policy_name(TaskEdgePolicy p) { return p == TaskEdgePolicy::all ? "all" : "positive_and_query"; }
const char* label_init_name(LabelInit l) {
  return l == LabelInit::seeded_gaussian ? "seeded_gaussian" : "provided_features";
}

template <typename E>
E parse_enum(const std::string& s, std::initializer_list<std::pair<const char*, E>> options, const char* what) {
  for (const auto& [name, value] : options)
    if (s == name) return value;
  throw ConfigError(std::string("unknown ") + what + " '" + s + "'");
}

Matrix glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-a, a);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

std::string layer_name(const char* prefix, int l) { return std::string(prefix) + "." + std::to_string(l); }

bool is_query_node(const TaskGraph& tg, int node) {
  return node >= tg.num_examples() && node < static_cast<int>(tg.data_nodes.size());
}

Var label_embeddings_tape(Binder& b, int ways, std::span<const std::int64_t> class_meta, std::uint64_t label_seed,
                          const std::optional<Matrix>& label_features) {
  const ModelParams& p = b.params();
  const int d = p.config.d;
  if (p.config.label_init == LabelInit::seeded_gaussian) {
    if (static_cast<int>(class_meta.size()) != ways) throw ShapeError("class_meta must have one entry per class");
    Matrix L(ways, d);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
    for (int c = 0; c < ways; ++c) {
      Rng rng(derive_seed({label_seed, p.label_salt, static_cast<std::uint64_t>(class_meta[static_cast<std::size_t>(c)])}));
      for (int j = 0; j < d; ++j) L(c, j) = normal(rng);
    }
    return b.tape().constant(std::move(L));
  }
  if (!label_features) throw ConfigError("provided_features label init requires class feature vectors");
  if (label_features->rows() != ways) throw ShapeError("class feature rows must equal the number of ways");
  if (label_features->cols() == d && !p.weights.contains("label.proj")) return b.tape().constant(*label_features);
  if (!p.weights.contains("label.proj") || p.weights.at("label.proj").rows() != label_features->cols())
    throw ShapeError("class feature width does not match label_feature_dim");
  return ad::matmul(b.tape().constant(*label_features), b("label.proj"));
}

}  // namespace

// ---- config ---------------------------------------------------------------

void ModelConfig::validate() const {
  if (d_in < 1) throw ConfigError("model.d_in must be >= 1");
  if (d < 1) throw ConfigError("model.d must be >= 1");
  if (layers_data < 1 || layers_task < 1) throw ConfigError("model depths must be >= 1");
  if (rounds < 1) throw ConfigError("model.rounds must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("model.temperature must be > 0");
  if (num_relations < 1) throw ConfigError("model.num_relations must be >= 1");
  if (label_feature_dim < 0) throw ConfigError("model.label_feature_dim must be >= 0");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"d_in", c.d_in},
       {"d", c.d},
       {"layers_data", c.layers_data},
       {"layers_task", c.layers_task},
       {"rounds", c.rounds},
       {"readout", readout_name(c.readout)},
       {"task_edge_policy", policy_name(c.edge_policy)},
       {"label_init", label_init_name(c.label_init)},
       {"temperature", c.temperature},
       {"num_relations", c.num_relations},
       {"label_feature_dim", c.label_feature_dim}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.d_in = j.value("d_in", d.d_in);
  c.d = j.value("d", d.d);
  c.layers_data = j.value("layers_data", d.layers_data);
  c.layers_task = j.value("layers_task", d.layers_task);
  c.rounds = j.value("rounds", d.rounds);
  c.readout = parse_enum<Readout>(j.value("readout", std::string(readout_name(d.readout))),
                                  {{"single_node", Readout::single_node}, {"pair_pool", Readout::pair_pool}}, "readout");
  c.edge_policy = parse_enum<TaskEdgePolicy>(
      j.value("task_edge_policy", std::string(policy_name(d.edge_policy))),
      {{"all", TaskEdgePolicy::all}, {"positive_and_query", TaskEdgePolicy::positive_and_query}}, "task_edge_policy");
  c.label_init = parse_enum<LabelInit>(
      j.value("label_init", std::string(label_init_name(d.label_init))),
      {{"seeded_gaussian", LabelInit::seeded_gaussian}, {"provided_features", LabelInit::provided_features}},
      "label_init");
  c.temperature = j.value("temperature", d.temperature);
  c.num_relations = j.value("num_relations", d.num_relations);
  c.label_feature_dim = j.value("label_feature_dim", d.label_feature_dim);
}

// ---- tensor store ----------------------------------------------------------

void TensorStore::add(std::string name, Matrix value) {
  if (contains(name)) throw UsageError("duplicate tensor '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
}

Matrix& TensorStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("no tensor named '" + name + "'");
  return entries_[it->second].second;
}

const Matrix& TensorStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("no tensor named '" + name + "'");
  return entries_[it->second].second;
}

TensorStore TensorStore::zeros_like() const {
  TensorStore z;
  for (const auto& [name, m] : entries_) z.add(name, Matrix::Zero(m.rows(), m.cols()));
  return z;
}

std::size_t TensorStore::num_values() const {
  std::size_t n = 0;
  for (const auto& [_, m] : entries_) n += static_cast<std::size_t>(m.size());
  return n;
}

// ---- parameters --------------------------------------------------------------

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams p;
  p.config = config;
  p.label_salt = derive_seed({seed, 0x1abe1ULL});
  Rng rng(seed);
  const int d = config.d;
  auto& w = p.weights;
  for (int l = 0; l < config.layers_data; ++l) {
    const int din = l == 0 ? config.d_in : d;
    const auto base = layer_name("data", l);
    w.add(base + ".self", glorot(din, d, rng));
    w.add(base + ".msg", glorot(din, d, rng));
    if (config.num_relations > 1) w.add(base + ".rel", glorot(config.num_relations, d, rng));
    w.add(base + ".bias", Matrix::Zero(1, d));
  }
  if (config.readout == Readout::pair_pool) {
    w.add("readout.w", glorot(3 * d, d, rng));
    w.add("readout.b", Matrix::Zero(1, d));
  }
  for (int l = 0; l < config.layers_task; ++l) {
    const auto base = layer_name("task", l);
    w.add(base + ".wq", glorot(d, d, rng));
    w.add(base + ".wk", glorot(d, d, rng));
    w.add(base + ".wv", glorot(d, d, rng));
    w.add(base + ".wo", glorot(d, d, rng));
    w.add(base + ".att1", glorot(2 * d + 3, d, rng));
    w.add(base + ".att1_bias", Matrix::Zero(1, d));
    w.add(base + ".att2", glorot(d, 1, rng));
    w.add(base + ".gamma", Matrix::Ones(1, d));
    w.add(base + ".beta", Matrix::Zero(1, d));
    p.bn_running.add(base + ".mean", Matrix::Zero(kBnGroups, d));
    p.bn_running.add(base + ".var", Matrix::Ones(kBnGroups, d));
  }
  w.add("attr.w1", glorot(d, d, rng));
  w.add("attr.b1", Matrix::Zero(1, d));
  w.add("attr.w2", glorot(d, config.d_in, rng));
  w.add("attr.b2", Matrix::Zero(1, config.d_in));
  if (config.label_init == LabelInit::provided_features && config.label_feature_dim > 0 &&
      config.label_feature_dim != d)
    w.add("label.proj", glorot(config.label_feature_dim, d, rng));
  return p;
}

std::vector<std::string> encoder_weight_names(const ModelParams& p) {
  std::vector<std::string> names;
  for (const auto& [name, _] : p.weights.entries())
    if (name.rfind("data.", 0) == 0 || name.rfind("readout.", 0) == 0) names.push_back(name);
  return names;
}

Var Binder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Matrix* sink = grads_ ? &grads_->at(name) : nullptr;
  Var v = tape_.parameter(params_.weights.at(name), sink);
  bound_.emplace(name, v);
  return v;
}

// ---- data graph stage ------------------------------------------------------

Var encode_data_graph(Binder& b, const DataGraph& dg) {
  const ModelConfig& cfg = b.params().config;
  const int n = dg.num_nodes();
  if (n == 0) throw ShapeError("data graph is empty");
  if (dg.features.cols() != cfg.d_in)
    throw ShapeError("feature width " + std::to_string(dg.features.cols()) + " does not match d_in " +
                     std::to_string(cfg.d_in));
  if (dg.features.rows() != n) throw ShapeError("feature rows do not match node count");
  if (dg.num_relations > cfg.num_relations)
    throw ShapeError("data graph has more relations than the model was configured for");

  // Incoming messages: undirected edges deliver both ways, directed edges deliver v -> u,
  // matching the traversal direction used to sample the neighborhood.
  std::vector<std::vector<std::pair<int, int>>> inbox(static_cast<std::size_t>(n));
  for (const LocalEdge& e : dg.edges) {
    inbox[static_cast<std::size_t>(e.u)].push_back({e.v, e.r});
    if (!dg.directed && e.u != e.v) inbox[static_cast<std::size_t>(e.v)].push_back({e.u, e.r});
  }
  std::vector<Eigen::Triplet<double>> trips;
  const bool use_rel = cfg.num_relations > 1;
  Matrix rel_mean = Matrix::Zero(n, use_rel ? cfg.num_relations : 0);
  for (int i = 0; i < n; ++i) {
    const auto& in = inbox[static_cast<std::size_t>(i)];
    if (in.empty()) continue;
    const double w = 1.0 / static_cast<double>(in.size());
    for (const auto& [j, r] : in) {
      trips.emplace_back(i, j, w);
      if (use_rel) rel_mean(i, r) += w;
    }
  }
  auto adj = std::make_shared<ad::SparseMat>(n, n);
  adj->setFromTriplets(trips.begin(), trips.end());

  ad::Tape& t = b.tape();
  Var h = t.constant(dg.features);
  Var rel = t.constant(std::move(rel_mean));
  for (int l = 0; l < cfg.layers_data; ++l) {
    const auto base = layer_name("data", l);
    Var pre = ad::add(ad::matmul(h, b(base + ".self")), ad::spmm(adj, ad::matmul(h, b(base + ".msg"))));
    if (use_rel) pre = ad::add(pre, ad::matmul(rel, b(base + ".rel")));
    h = ad::relu(ad::add_row(pre, b(base + ".bias")));
  }
  return h;
}

Var readout(Binder& b, const Var& E, const DataGraph& dg) {
  const ModelConfig& cfg = b.params().config;
  if (dg.level == Level::node) {
    if (cfg.readout != Readout::single_node) throw UsageError("node-level data graph needs single_node readout");
    if (dg.input_local.size() != 1) throw ShapeError("node readout needs exactly one input node");
    return ad::gather_rows(E, {dg.input_local[0]});
  }
  if (cfg.readout != Readout::pair_pool) throw UsageError("edge-level data graph needs pair_pool readout");
  if (dg.input_local.size() != 2) throw ShapeError("edge readout needs exactly two input nodes");
  const Var parts[] = {ad::gather_rows(E, {dg.input_local[0]}), ad::gather_rows(E, {dg.input_local[1]}),
                       ad::col_max(E)};
  return ad::add_row(ad::matmul(ad::hcat(parts), b("readout.w")), b("readout.b"));
}

Var attr_loss(Binder& b, const DataGraph& dg, const Var& E) {
  if (dg.masked_local.empty()) return b.tape().constant(Matrix::Zero(1, 1));
  Var em = ad::gather_rows(E, dg.masked_local);
  Var hidden = ad::relu(ad::add_row(ad::matmul(em, b("attr.w1")), b("attr.b1")));
  Var pred = ad::add_row(ad::matmul(hidden, b("attr.w2")), b("attr.b2"));
  return ad::scale(ad::mse_rows_sum(pred, dg.masked_original), 1.0 / static_cast<double>(dg.num_nodes()));
}

// ---- task graph stage ------------------------------------------------------

Var task_message_pass(Binder& b, const TaskGraph& tg, Var H, Mode mode, std::vector<AttentionTrace>* trace,
                      std::vector<BnObservation>* bn) {
  const ModelParams& p = b.params();
  const int data = static_cast<int>(tg.data_nodes.size());
  const int N = data + tg.ways;
  if (H.rows() != N || H.cols() != p.config.d) throw ShapeError("task-graph embeddings misaligned with nodes");

  std::vector<int> src, dst;
  std::vector<std::array<double, 3>> feat;
  auto link = [&](int s, int d, std::array<double, 3> f) {
    src.push_back(s);
    dst.push_back(d);
    feat.push_back(f);
  };
  const bool positive_only = p.config.edge_policy == TaskEdgePolicy::positive_and_query;
  std::vector<int> indegree(static_cast<std::size_t>(N), 0);
  for (const TaskEdge& e : tg.edges) {
    const int label = data + e.label_index;
    if (e.is_example) {
      if (positive_only && !e.is_true) continue;
      const double t = e.is_true ? 1.0 : 0.0;
      link(e.data_index, label, {1.0, t, 0.0});
      link(label, e.data_index, {1.0, t, 0.0});
      ++indegree[static_cast<std::size_t>(label)];
    } else {
      link(label, e.data_index, {0.0, 0.0, 0.0});
    }
    ++indegree[static_cast<std::size_t>(e.data_index)];
  }
  for (int q = tg.num_examples(); q < data; ++q)
    if (indegree[static_cast<std::size_t>(q)] != tg.ways) throw ShapeError("query node lacks its label edges");
  for (int i = 0; i < N; ++i) link(i, i, {0.0, 0.0, 1.0});

  Matrix ef(static_cast<Eigen::Index>(feat.size()), 3);
  for (std::size_t e = 0; e < feat.size(); ++e)
    for (int c = 0; c < 3; ++c) ef(static_cast<Eigen::Index>(e), c) = feat[e][static_cast<std::size_t>(c)];
  Var efv = b.tape().constant(std::move(ef));
  const std::vector<int> groups(static_cast<std::size_t>(N), 0);
  std::vector<char> in_stats(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) in_stats[static_cast<std::size_t>(i)] = is_query_node(tg, i) ? 0 : 1;

  for (int l = 0; l < p.config.layers_task; ++l) {
    const auto base = layer_name("task", l);
    Var q = ad::matmul(H, b(base + ".wq"));
    Var k = ad::matmul(H, b(base + ".wk"));
    Var v = ad::matmul(H, b(base + ".wv"));
    const Var parts[] = {ad::gather_rows(q, dst), ad::gather_rows(k, src), efv};
    Var hidden = ad::relu(ad::add_row(ad::matmul(ad::hcat(parts), b(base + ".att1")), b(base + ".att1_bias")));
    Var score = ad::matmul(hidden, b(base + ".att2"));
    Var alpha = ad::segment_softmax(score, dst, N);
    Var agg = ad::scatter_add_rows(ad::mul_rows(alpha, ad::gather_rows(v, src)), dst, N);
    Var pre = ad::add(H, ad::matmul(agg, b(base + ".wo")));
    ad::BatchNormObservation obs;
    const bool training = mode == Mode::train;
    Var normed = ad::batch_norm(pre, b(base + ".gamma"), b(base + ".beta"), groups, kBnGroups, training,
                                &p.bn_running.at(base + ".mean"), &p.bn_running.at(base + ".var"), 1e-5, &obs,
                                in_stats);
    H = ad::relu(normed);
    if (trace) trace->push_back({dst, src, alpha.value().col(0)});
    if (bn && training) bn->push_back({base, std::move(obs)});
  }
  return H;
}

TapeForward forward_tape(Binder& b, const PromptGraph& pg, Mode mode) {
  const ModelParams& p = b.params();
  const TaskGraph& tg = pg.task_graph;
  if (auto bad = check_task_graph(tg)) throw ShapeError("malformed task graph: " + *bad);
  if (pg.data_graphs.size() != tg.data_nodes.size()) throw ShapeError("data graphs misaligned with task graph");

  TapeForward out;
  std::vector<Var> readouts;
  readouts.reserve(pg.data_graphs.size());
  for (const DataGraph& dg : pg.data_graphs) {
    if (dg.level != pg.level) throw ShapeError("data graph level differs from prompt level");
    Var E = encode_data_graph(b, dg);
    readouts.push_back(readout(b, E, dg));
    out.attr_losses.push_back(attr_loss(b, dg, E));
    out.data_embeddings.push_back(E);
  }
  Var G = ad::vcat(readouts);
  Var L = label_embeddings_tape(b, tg.ways, pg.class_meta, pg.label_seed, pg.label_features);
  const Var init[] = {G, L};
  Var H = ad::vcat(init);
  Var reinject;
  if (p.config.rounds > 1) {
    const Var parts[] = {G, b.tape().constant(Matrix::Zero(tg.ways, p.config.d))};
    reinject = ad::vcat(parts);
  }
  for (int r = 0; r < p.config.rounds; ++r) {
    if (r > 0) H = ad::add(H, reinject);
    H = task_message_pass(b, tg, H, mode, &out.attention, &out.bn);
  }

  const int data = static_cast<int>(tg.data_nodes.size());
  std::vector<int> query_rows, label_rows;
  for (int i = tg.num_examples(); i < data; ++i) query_rows.push_back(i);
  for (int c = 0; c < tg.ways; ++c) label_rows.push_back(data + c);
  out.embeddings = H;
  out.cosines = ad::cosine_matrix(ad::gather_rows(H, query_rows), ad::gather_rows(H, label_rows));
  out.logits = ad::scale(out.cosines, 1.0 / p.config.temperature);
  return out;
}

// ---- value-level wrappers ----------------------------------------------------

Matrix encode_data_graph(const ModelParams& p, const DataGraph& dg) {
  ad::Tape t;
  Binder b(t, p);
  return encode_data_graph(b, dg).value();
}

RowVector readout_node(const Matrix& E, const DataGraph& dg) {
  if (dg.level != Level::node) throw UsageError("readout_node on an edge-level data graph");
  if (dg.input_local.size() != 1 || dg.input_local[0] < 0 || dg.input_local[0] >= E.rows())
    throw ShapeError("node readout needs exactly one valid input node");
  return E.row(dg.input_local[0]);
}

RowVector readout_edge(const ModelParams& p, const Matrix& E, const DataGraph& dg) {
  if (dg.level != Level::edge) throw UsageError("readout_edge on a node-level data graph");
  ad::Tape t;
  Binder b(t, p);
  return readout(b, t.constant(E), dg).value().row(0);
}

Matrix init_label_embeddings(const ModelParams& p, int ways, std::span<const std::int64_t> class_meta,
                             std::uint64_t label_seed, const std::optional<Matrix>& label_features) {
  ad::Tape t;
  Binder b(t, p);
  return label_embeddings_tape(b, ways, class_meta, label_seed, label_features).value();
}

TaskPassResult task_message_pass(const ModelParams& p, const TaskGraph& tg, const Matrix& data_embeds,
                                 const Matrix& label_embeds, Mode mode) {
  if (data_embeds.rows() != static_cast<Eigen::Index>(tg.data_nodes.size()) ||
      label_embeds.rows() != tg.ways)
    throw ShapeError("embeddings misaligned with task-graph nodes");
  ad::Tape t;
  Binder b(t, p);
  const Var parts[] = {t.constant(data_embeds), t.constant(label_embeds)};
  TaskPassResult r;
  r.H = task_message_pass(b, tg, ad::vcat(parts), mode, &r.attention, nullptr).value();
  return r;
}

int argmax_lowest(const Eigen::Ref<const RowVector>& row) {
  int best = 0;
  for (Eigen::Index j = 1; j < row.size(); ++j)
    if (row(j) > row(best)) best = static_cast<int>(j);
  return best;
}

Logits predict_logits(const Matrix& H, const TaskGraph& tg, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  const int data = static_cast<int>(tg.data_nodes.size());
  if (H.rows() != data + tg.ways) throw ShapeError("embeddings misaligned with task-graph nodes");
  if (!H.allFinite()) throw ShapeError("non-finite embeddings");
  ad::Tape t;
  Var h = t.constant(H);
  std::vector<int> qrows, lrows;
  for (int i = tg.num_examples(); i < data; ++i) qrows.push_back(i);
  for (int c = 0; c < tg.ways; ++c) lrows.push_back(data + c);
  Logits out;
  out.cosine = ad::cosine_matrix(ad::gather_rows(h, qrows), ad::gather_rows(h, lrows)).value();
  out.scaled = out.cosine / temperature;
  for (Eigen::Index i = 0; i < out.cosine.rows(); ++i) {
    out.predicted.push_back(argmax_lowest(out.scaled.row(i)));
    for (Eigen::Index j = 0; j < out.cosine.cols(); ++j)
      if (H.row(qrows[static_cast<std::size_t>(i)]).norm() <= 1e-12 || H.row(lrows[static_cast<std::size_t>(j)]).norm() <= 1e-12)
        out.zero_norm.push_back({static_cast<int>(i), static_cast<int>(j)});
  }
  return out;
}

double attr_loss(const ModelParams& p, const DataGraph& dg, const Matrix& E) {
  if (E.rows() != dg.num_nodes() || E.cols() != p.config.d) throw ShapeError("embedding shape mismatch");
  ad::Tape t;
  Binder b(t, p);
  return attr_loss(b, dg, t.constant(E)).value()(0, 0);
}

ForwardResult forward(const ModelParams& p, const PromptGraph& pg, Mode mode) {
  ad::Tape t;
  Binder b(t, p);
  TapeForward f = forward_tape(b, pg, mode);
  ForwardResult r;
  r.logits = predict_logits(f.embeddings.value(), pg.task_graph, p.config.temperature);
  for (const Var& a : f.attr_losses) r.attr_losses.push_back(a.value()(0, 0));
  r.embeddings = f.embeddings.value();
  r.attention = std::move(f.attention);
  r.bn = std::move(f.bn);
  return r;
}

void apply_bn_observations(ModelParams& p, std::span<const BnObservation> obs, double momentum) {
  for (const BnObservation& o : obs) {
    Matrix& mean = p.bn_running.at(o.layer + ".mean");
    Matrix& var = p.bn_running.at(o.layer + ".var");
    for (std::size_t r = 0; r < o.stats.counts.size(); ++r) {
      if (o.stats.counts[r] < 2) continue;
      const auto ri = static_cast<Eigen::Index>(r);
      mean.row(ri) = (1.0 - momentum) * mean.row(ri) + momentum * o.stats.mean.row(ri);
      var.row(ri) = (1.0 - momentum) * var.row(ri) + momentum * o.stats.var.row(ri);
    }
  }
}

}  // namespace prodigy
