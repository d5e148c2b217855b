#include <doctest.h>

#include <cmath>
#include <fstream>

#include "prodigy/checkpoint.hpp"
#include "prodigy/error.hpp"
#include "prodigy/train.hpp"
#include "support.hpp"

using namespace prodigy;
using namespace testing;

namespace {

ModelConfig model_for(const Graph& g, int d = 8) {
  ModelConfig c;
  c.d_in = g.feature_dim();
  c.d = d;
  return c;
}

EpisodeConfig small_episodes() {
  EpisodeConfig ep;
  ep.ways = 2;
  ep.shots = 2;
  ep.queries = 3;
  ep.context.fanout_cap = 4;
  return ep;
}

TrainConfig short_run(std::int64_t steps, std::uint64_t seed = 3) {
  TrainConfig t;
  t.steps = steps;
  t.seed = seed;
  t.batch_size = 2;
  t.checkpoint_every = 0;
  return t;
}

Episode episode(const PlantedGraph& pg, Family f, std::uint64_t seed, const EpisodeConfig& ep = small_episodes()) {
  Rng rng(seed);
  return sample_episode(pg.graph, &pg.labels, f, ep, rng);
}

bool same_rows(const std::vector<StepMetrics>& a, const std::vector<StepMetrics>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].step != b[i].step || a[i].family != b[i].family || a[i].loss_ce != b[i].loss_ce ||
        a[i].loss_attr != b[i].loss_attr || a[i].query_acc != b[i].query_acc)
      return false;
  return true;
}

std::vector<std::string> lines(const std::filesystem::path& p) {
  std::ifstream is(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

/// Metrics CSV with the wall-clock column removed.
std::vector<std::string> metrics_without_time(const std::filesystem::path& p) {
  std::vector<std::string> out;
  for (std::string l : lines(p)) out.push_back(l.substr(0, l.rfind(',')));
  return out;
}

}  // namespace

TEST_CASE("training configuration validation and serialization") {
  TrainConfig t;
  t.validate();
  CHECK(t.lr == 1e-3);
  CHECK(t.weight_decay == 1e-3);
  CHECK(t.checkpoint_every == 500);
  CHECK(t.attr_weight == 1.0);
  CHECK(t.nm_count == 1);
  CHECK(t.mt_count == 1);
  CHECK_FALSE(t.grad_clip.has_value());
  t.grad_clip = 2.0;
  nlohmann::json j = t;
  CHECK(j.get<TrainConfig>() == t);
  TrainConfig bad = t;
  bad.lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = t;
  bad.nm_count = 0;
  bad.mt_count = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = t;
  bad.attr_weight = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("uniform logits give log m cross-entropy and attribute weight behaves") {
  PlantedGraph pg = synth_planted_graph(3, 20, 0.3, 0.05, 0.5, 1);
  ModelParams p = init_params(model_for(pg.graph), 2);
  p.weights.at("task.0.gamma").setZero();
  p.weights.at("task.0.beta").setZero();
  EpisodeConfig ep = small_episodes();
  ep.ways = 3;
  const std::vector<Episode> batch{episode(pg, Family::multi_task, 4, ep)};
  LossResult r = compute_loss(p, batch, 0.0);
  CHECK(r.metrics.loss_ce == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(r.metrics.loss == r.metrics.loss_ce);

  // constant features: a head that outputs the constant reconstructs perfectly
  Graph flat(Matrix::Ones(pg.graph.num_nodes(), 2), pg.graph.edges(), 1, false);
  PlantedGraph fpg{flat, pg.labels};
  ModelParams q = init_params(model_for(flat), 5);
  q.weights.at("attr.w2").setZero();
  q.weights.at("attr.b2").setOnes();
  const std::vector<Episode> fb{episode(fpg, Family::multi_task, 6, ep)};
  bool masked = false;
  for (const DataGraph& dg : fb[0].graph.data_graphs) masked |= !dg.masked_local.empty();
  CHECK(masked);
  LossResult with = compute_loss(q, fb, 1.0), without = compute_loss(q, fb, 0.0);
  CHECK(with.metrics.loss_attr == 0.0);
  CHECK(with.metrics.loss == without.metrics.loss);

  ModelParams noisy = init_params(model_for(flat), 5);
  CHECK(compute_loss(noisy, fb, 1.0).metrics.loss > compute_loss(noisy, fb, 0.0).metrics.loss);
}

TEST_CASE("cross-entropy is averaged within a family and summed across families") {
  PlantedGraph pg = synth_planted_graph(2, 30, 0.3, 0.05, 0.5, 7);
  ModelParams p = init_params(model_for(pg.graph), 8);
  Episode nm = episode(pg, Family::neighbor_matching, 9), mt = episode(pg, Family::multi_task, 10);
  const std::vector<Episode> one{nm}, two{nm, nm}, only_mt{mt}, mixed{nm, mt};
  LossResult a = compute_loss(p, one, 0.0), b = compute_loss(p, two, 0.0);
  CHECK(b.metrics.ce_nm == doctest::Approx(a.metrics.ce_nm).epsilon(1e-12));
  CHECK(b.metrics.loss_ce == doctest::Approx(a.metrics.loss_ce).epsilon(1e-12));
  CHECK(a.metrics.queries_mt == 0);
  CHECK(a.metrics.loss_ce == doctest::Approx(a.metrics.ce_nm).epsilon(1e-15));
  LossResult m = compute_loss(p, mixed, 0.0), c = compute_loss(p, only_mt, 0.0);
  CHECK(m.metrics.loss_ce == doctest::Approx(a.metrics.ce_nm + c.metrics.ce_mt).epsilon(1e-12));

  Episode broken = nm;
  broken.query_labels[0] = 7;
  const std::vector<Episode> bad{broken};
  CHECK_THROWS_AS(compute_loss(p, bad, 0.0), ValidationError);
}

TEST_CASE("loss is finite at initialization") {
  PlantedGraph pg = synth_planted_graph(3, 30, 0.2, 0.03, 1.0, 11);
  EpisodeConfig ep = small_episodes();
  ep.ways = 3;
  for (std::uint64_t s = 0; s < 100; ++s) {
    ModelParams p = init_params(model_for(pg.graph, 16), s);
    const std::vector<Episode> batch{episode(pg, s % 2 ? Family::multi_task : Family::neighbor_matching, s, ep)};
    LossResult r = compute_loss(p, batch, 1.0);
    CHECK(std::isfinite(r.metrics.loss));
    CHECK_FALSE(r.nonfinite_episode.has_value());
  }
}

TEST_CASE("a small optimizer step does not increase the loss on its own batch") {
  PlantedGraph pg = synth_planted_graph(2, 30, 0.3, 0.05, 0.5, 12);
  int violations = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    ModelParams p = init_params(model_for(pg.graph), 100 + s);
    const std::vector<Episode> batch{episode(pg, Family::neighbor_matching, 2 * s),
                                     episode(pg, Family::multi_task, 2 * s + 1)};
    LossResult before = compute_loss(p, batch, 1.0);
    TensorStore m = p.weights.zeros_like(), v = p.weights.zeros_like();
    adamw_update(p.weights, before.grads, m, v, 1, 1e-4, 1e-3);
    if (compute_loss(p, batch, 1.0).metrics.loss > before.metrics.loss) ++violations;
  }
  CHECK(violations <= 1);
}

TEST_CASE("AdamW and clipping against hand computation") {
  TensorStore w, g;
  w.add("x", (Matrix(1, 2) << 1.0, -2.0).finished());
  g.add("x", (Matrix(1, 2) << 0.5, 0.0).finished());
  TensorStore m = w.zeros_like(), v = w.zeros_like();
  adamw_update(w, g, m, v, 1, 0.1, 0.01);
  // first step: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps) plus decoupled decay
  CHECK(w.at("x")(0, 0) == doctest::Approx(1.0 - 0.1 * 0.01 * 1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  CHECK(w.at("x")(0, 1) == doctest::Approx(-2.0 + 0.1 * 0.01 * 2.0).epsilon(1e-12));

  TensorStore big;
  big.add("a", (Matrix(1, 2) << 3.0, 0.0).finished());
  big.add("b", (Matrix(1, 1) << 4.0).finished());
  CHECK(clip_grad_norm(big, 1.0) == doctest::Approx(5.0));
  CHECK(big.at("a")(0, 0) == doctest::Approx(0.6));
  CHECK(big.at("b")(0, 0) == doctest::Approx(0.8));
  CHECK(clip_grad_norm(big, 10.0) == doctest::Approx(1.0));
  CHECK(big.at("b")(0, 0) == doctest::Approx(0.8));
}

TEST_CASE("pretraining is deterministic and writes metrics and checkpoints") {
  PlantedGraph pg = synth_planted_graph(2, 30, 0.3, 0.05, 0.5, 13);
  TempDir a("train_a"), b("train_b");
  TrainConfig t = short_run(6);
  t.checkpoint_every = 4;
  PretrainIO ia, ib;
  ia.output_dir = a.path;
  ib.output_dir = b.path;
  PretrainResult ra = pretrain(pg.graph, &pg.labels, model_for(pg.graph), t, small_episodes(), ia);
  PretrainResult rb = pretrain(pg.graph, &pg.labels, model_for(pg.graph), t, small_episodes(), ib);
  CHECK(same_rows(ra.log, rb.log));
  CHECK(ra.state.params == rb.state.params);
  CHECK(ra.log.size() == 6);
  CHECK(ra.log[0].family == "nm+mt");
  REQUIRE(ra.checkpoints.size() == 2);
  CHECK(ra.checkpoints[0].filename() == "ckpt_4.bin");
  CHECK(ra.checkpoints[1].filename() == "ckpt_6.bin");
  auto rows = lines(a / "metrics.csv");
  REQUIRE(rows.size() == 7);
  CHECK(rows[0] == "step,family,loss_ce,loss_attr,query_acc,wall_ms");
  CHECK(metrics_without_time(a / "metrics.csv") == metrics_without_time(b / "metrics.csv"));

  PretrainResult other = pretrain(pg.graph, &pg.labels, model_for(pg.graph), short_run(6, 4), small_episodes(), {});
  CHECK_FALSE(same_rows(ra.log, other.log));
}

TEST_CASE("zero steps writes exactly one checkpoint holding the initial parameters") {
  PlantedGraph pg = synth_planted_graph(2, 20, 0.3, 0.05, 0.5, 14);
  TempDir dir("train_zero");
  PretrainIO io;
  io.output_dir = dir.path;
  TrainConfig t = short_run(0);
  PretrainResult r = pretrain(pg.graph, &pg.labels, model_for(pg.graph), t, small_episodes(), io);
  REQUIRE(r.checkpoints.size() == 1);
  CHECK(r.checkpoints[0].filename() == "ckpt_0.bin");
  CHECK(r.log.empty());
  CHECK(r.state.params == initial_state(model_for(pg.graph), t).params);
  CHECK(load_checkpoint(r.checkpoints[0]).params == r.state.params);
}

TEST_CASE("missing labels or a width mismatch are configuration errors") {
  PlantedGraph pg = synth_planted_graph(2, 20, 0.3, 0.05, 0.5, 15);
  CHECK_THROWS_AS(pretrain(pg.graph, nullptr, model_for(pg.graph), short_run(2), small_episodes(), {}), ConfigError);
  TrainConfig nm_only = short_run(2);
  nm_only.mt_count = 0;
  CHECK(pretrain(pg.graph, nullptr, model_for(pg.graph), nm_only, small_episodes(), {}).log.size() == 2);
  ModelConfig wide = model_for(pg.graph);
  wide.d_in += 1;
  CHECK_THROWS_AS(pretrain(pg.graph, &pg.labels, wide, short_run(1), small_episodes(), {}), ConfigError);
}

TEST_CASE("checkpoint round trip reproduces forward outputs exactly") {
  PlantedGraph pg = synth_planted_graph(2, 20, 0.3, 0.05, 0.5, 16);
  TrainConfig t = short_run(5);
  PretrainResult r = pretrain(pg.graph, &pg.labels, model_for(pg.graph), t, small_episodes(), {});
  TempDir dir("ckpt");
  save_checkpoint(to_checkpoint(r.state, t), dir / "c.bin");
  CheckpointData back = load_checkpoint(dir / "c.bin");
  CHECK(back.params == r.state.params);
  TrainState s = from_checkpoint(back, t);
  CHECK(s.adam_m == r.state.adam_m);
  CHECK(s.adam_v == r.state.adam_v);
  CHECK(s.step == 5);
  CHECK(s.rng == r.state.rng);
  CHECK(s.telemetry == r.state.telemetry);

  Episode probe = episode(pg, Family::multi_task, 17);
  for (Mode mode : {Mode::infer, Mode::train}) {
    Matrix a = forward(r.state.params, probe.graph, mode).logits.scaled;
    Matrix b = forward(back.params, probe.graph, mode).logits.scaled;
    CHECK(a == b);
  }
}

TEST_CASE("resuming continues the uninterrupted trajectory bit for bit") {
  PlantedGraph pg = synth_planted_graph(2, 30, 0.3, 0.05, 0.5, 18);
  TrainConfig full = short_run(8);
  full.checkpoint_every = 4;
  full.grad_clip = 1.0;
  TempDir straight("resume_straight"), split("resume_split");
  PretrainIO io_s, io_p;
  io_s.output_dir = straight.path;
  io_p.output_dir = split.path;
  PretrainResult whole = pretrain(pg.graph, &pg.labels, model_for(pg.graph), full, small_episodes(), io_s);

  TrainConfig half = full;
  half.steps = 4;
  pretrain(pg.graph, &pg.labels, model_for(pg.graph), half, small_episodes(), io_p);
  PretrainResult rest = resume(split / "ckpt_4.bin", pg.graph, &pg.labels, full, small_episodes(), io_p);
  CHECK(rest.state.params == whole.state.params);
  CHECK(rest.state.adam_m == whole.state.adam_m);
  CHECK(rest.state.telemetry == whole.state.telemetry);
  CHECK(rest.log.size() == 4);
  CHECK(load_checkpoint(split / "ckpt_8.bin").params == load_checkpoint(straight / "ckpt_8.bin").params);
  CHECK(metrics_without_time(split / "metrics.csv") == metrics_without_time(straight / "metrics.csv"));

  TrainConfig other_seed = full;
  other_seed.seed = 99;
  CHECK_THROWS_AS(resume(split / "ckpt_4.bin", pg.graph, &pg.labels, other_seed, small_episodes(), {}), ConfigError);
}

TEST_CASE("damaged checkpoints are rejected") {
  PlantedGraph pg = synth_planted_graph(2, 20, 0.3, 0.05, 0.5, 19);
  TrainConfig t = short_run(1);
  TempDir dir("ckpt_bad");
  PretrainIO io;
  io.output_dir = dir.path;
  pretrain(pg.graph, &pg.labels, model_for(pg.graph), t, small_episodes(), io);
  const auto good = dir / "ckpt_1.bin";
  const std::string bytes = read_text(good);

  std::ofstream(dir / "trunc.bin", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(dir / "trunc.bin"), LoadError);

  std::string flipped = bytes;
  flipped[flipped.size() / 2] = static_cast<char>(flipped[flipped.size() / 2] ^ 0x10);
  std::ofstream(dir / "flip.bin", std::ios::binary).write(flipped.data(), static_cast<std::streamsize>(flipped.size()));
  CHECK_THROWS_AS(load_checkpoint(dir / "flip.bin"), LoadError);

  std::string version = bytes;
  version[8] = 9;
  std::ofstream(dir / "ver.bin", std::ios::binary).write(version.data(), static_cast<std::streamsize>(version.size()));
  CHECK_THROWS_AS(load_checkpoint(dir / "ver.bin"), LoadError);

  CHECK_THROWS_AS(load_checkpoint(dir / "absent.bin"), LoadError);
  CHECK_THROWS_AS(resume(dir / "trunc.bin", pg.graph, &pg.labels, t, small_episodes(), {}), LoadError);
}

TEST_CASE("a non-finite loss aborts with a dump of the offending episode") {
  PlantedGraph pg = synth_planted_graph(2, 20, 0.3, 0.05, 0.5, 20);
  TrainConfig t = short_run(3);
  TrainState s = initial_state(model_for(pg.graph), t);
  s.params.weights.at("data.0.self")(0, 0) = std::nan("");
  TempDir dir("nonfinite");
  PretrainIO io;
  io.output_dir = dir.path;
  CHECK_THROWS_AS(continue_training(s, pg.graph, &pg.labels, t, small_episodes(), io), NumericError);
  bool dumped = false;
  for (const auto& entry : std::filesystem::directory_iterator(dir.path))
    if (entry.path().filename().string().rfind("nonfinite_step0", 0) == 0) {
      dumped = true;
      CHECK_NOTHROW(load_prompt_graph(entry.path()));
    }
  CHECK(dumped);
}

TEST_CASE("episode mixing follows the configured ratio") {
  PlantedGraph pg = synth_planted_graph(2, 20, 0.3, 0.05, 0.5, 21);
  TrainConfig t = short_run(4);
  t.batch_size = 1;
  t.nm_count = 1;
  t.mt_count = 3;
  PretrainResult r = pretrain(pg.graph, &pg.labels, model_for(pg.graph), t, small_episodes(), {});
  REQUIRE(r.log.size() == 4);
  CHECK(r.log[0].family == "nm");
  CHECK(r.log[1].family == "mt");
  CHECK(r.log[2].family == "mt");
  CHECK(r.log[3].family == "mt");
}
