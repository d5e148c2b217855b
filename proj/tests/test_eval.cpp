#include <doctest.h>

#include <cmath>
#include <map>

#include "prodigy/baselines.hpp"
#include "prodigy/error.hpp"
#include "prodigy/eval.hpp"
#include "prodigy/tasks.hpp"
#include "support.hpp"

using namespace prodigy;
using namespace testing;

namespace {

Matrix randn(int r, int c, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

ModelConfig config_for(const Graph& g, int d = 8) {
  ModelConfig c;
  c.d_in = g.feature_dim();
  c.d = d;
  return c;
}

std::vector<FewShotPrompt> downstream(const PlantedGraph& pg, int ways, int shots, int num_tasks, std::uint64_t seed) {
  Rng rng(seed);
  const Split split = random_split(pg.labels, 0.5, rng);
  return sample_downstream_eval(pg.graph, pg.labels, split, DownstreamSpec{ways, shots, 3, 10, num_tasks}, rng);
}

double cosine(const RowVector& a, const RowVector& b) {
  const double na = a.norm(), nb = b.norm();
  return na == 0.0 || nb == 0.0 ? 0.0 : a.dot(b) / (na * nb);
}

}  // namespace

TEST_CASE("report statistics and serialization") {
  EvalReport r;
  r.method = "x";
  r.per_task = {1.0, 0.5, 0.0, 0.5};
  r.finalize();
  CHECK(r.num_tasks == 4);
  CHECK(r.mean == 0.5);
  // sample variance (0.25 + 0 + 0.25 + 0) / 3, divided by n
  CHECK(r.std_error == doctest::Approx(std::sqrt((0.5 / 3.0) / 4.0)).epsilon(1e-14));
  r.per_task = {0.7};
  r.finalize();
  CHECK(r.std_error == 0.0);

  EvalReport full;
  full.method = "finetune";
  full.ways = 3;
  full.shots = 2;
  full.queries = 3;
  full.seed = 12;
  full.checkpoint_step = 40;
  full.per_task = {0.25, 1.0 / 3.0, 0.9};
  full.notes["aug"] = false;
  full.finalize();
  TempDir dir("report");
  write_report(full, dir / "r.json");
  EvalReport back = read_report(dir / "r.json");
  CHECK(back.method == full.method);
  CHECK(back.per_task == full.per_task);
  CHECK(back.mean == full.mean);
  CHECK(back.std_error == full.std_error);
  CHECK(back.checkpoint_step == full.checkpoint_step);
  CHECK(back.notes == full.notes);
  write_text(dir / "bad.json", "{\"method\": 1");
  CHECK_THROWS_AS(read_report(dir / "bad.json"), LoadError);
  write_per_task_csv(full, dir / "t.csv");
  CHECK(read_text(dir / "t.csv").rfind("task,accuracy\n0,0.25\n", 0) == 0);
}

TEST_CASE("the harness hides query labels and scores predictions exactly") {
  PlantedGraph pg = synth_planted_graph(3, 30, 0.3, 0.05, 0.5, 1);
  const auto tasks = downstream(pg, 3, 2, 40, 2);
  std::map<NodeId, int> truth;
  for (std::size_t i = 0; i < pg.labels.size(); ++i) truth[pg.labels.items[i].nodes[0]] = pg.labels.classes[i];
  // query labels are task-local indices; map each query to its class slot through class_meta
  Predictor oracle = [&](const FewShotPrompt& p, Rng&) {
    CHECK(p.query_labels.empty());
    std::vector<int> out;
    for (const Datapoint& q : p.queries) {
      const int cls = truth.at(q.nodes[0]);
      int slot = -1;
      for (int c = 0; c < p.ways; ++c)
        if (p.class_meta[static_cast<std::size_t>(c)] == cls) slot = c;
      out.push_back(slot);
    }
    return out;
  };
  EvalReport perfect = evaluate_tasks(tasks, oracle, EvalOptions{}, "oracle");
  CHECK(perfect.mean == 1.0);
  CHECK(perfect.std_error == 0.0);
  CHECK(perfect.num_tasks == 40);

  Predictor constant = [](const FewShotPrompt& p, Rng&) { return std::vector<int>(p.queries.size(), 0); };
  EvalReport zero = evaluate_tasks(tasks, constant, EvalOptions{}, "zero");
  double expect = 0.0;
  for (const auto& t : tasks) {
    int hits = 0;
    for (int l : t.query_labels) hits += l == 0;
    expect += static_cast<double>(hits) / t.num_queries();
  }
  CHECK(zero.mean == doctest::Approx(expect / 40).epsilon(1e-14));

  Predictor short_answer = [](const FewShotPrompt&, Rng&) { return std::vector<int>{0}; };
  CHECK_THROWS_AS(evaluate_tasks(tasks, short_answer, EvalOptions{}, "bad"), ShapeError);
  CHECK_THROWS_AS(evaluate_tasks(std::span<const FewShotPrompt>{}, constant, EvalOptions{}, "none"), UsageError);
}

TEST_CASE("in-context predictions ignore the query labels and are reproducible across jobs") {
  PlantedGraph pg = synth_planted_graph(3, 30, 0.3, 0.05, 0.5, 3);
  ModelParams p = baseline_nopretrain(config_for(pg.graph), 4);
  const auto tasks = downstream(pg, 3, 2, 30, 5);
  for (std::size_t t = 0; t < 10; ++t) {
    Rng a(t), b(t);
    CHECK(predict_in_context(p, pg.graph, tasks[t], ContextConfig{}, a) ==
          predict_in_context(p, pg.graph, strip_query_labels(tasks[t]), ContextConfig{}, b));
  }
  EvalOptions one, four;
  one.seed = four.seed = 9;
  four.jobs = 4;
  EvalReport r1 = evaluate_in_context(p, pg.graph, tasks, one), r4 = evaluate_in_context(p, pg.graph, tasks, four);
  CHECK(r1.per_task == r4.per_task);
  CHECK(r1.method == "prodigy");
  ModelConfig wide = config_for(pg.graph);
  wide.d_in = 5;
  CHECK_THROWS_AS(evaluate_in_context(baseline_nopretrain(wide, 1), pg.graph, tasks, one), ConfigError);
}

TEST_CASE("untrained models on unlearnable labels score at chance") {
  PlantedGraph pg = synth_planted_graph(2, 100, 0.2, 0.02, 1.0, 6);
  Rng shuffle(7);
  std::shuffle(pg.labels.classes.begin(), pg.labels.classes.end(), shuffle);
  const auto tasks = downstream(pg, 2, 3, 500, 8);
  EvalOptions opt;
  opt.seed = 10;
  opt.jobs = 4;
  Predictor guess = [](const FewShotPrompt& p, Rng& rng) {
    std::vector<int> out;
    for (int i = 0; i < p.num_queries(); ++i) out.push_back(static_cast<int>(rng() % 2));
    return out;
  };
  EvalReport g = evaluate_tasks(tasks, guess, opt, "guess");
  CHECK(std::abs(g.mean - 0.5) <= 3 * g.std_error);
  EvalReport n = evaluate_in_context(baseline_nopretrain(config_for(pg.graph), 11), pg.graph, tasks, opt);
  CHECK(n.num_tasks == 500);
  CHECK(std::abs(n.mean - 0.5) <= 3 * n.std_error);
}

TEST_CASE("the untrained baseline is keyed by its seed") {
  ModelConfig c;
  c.d_in = 3;
  c.d = 8;
  CHECK(baseline_nopretrain(c, 1) == baseline_nopretrain(c, 1));
  CHECK_FALSE(baseline_nopretrain(c, 1).weights == baseline_nopretrain(c, 2).weights);
}

TEST_CASE("class-mean prediction matches a brute-force loop") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const int ways = 2 + trial % 4, shots = 1 + trial % 3, d = 5, nq = 7;
    Matrix ex = randn(ways * shots, d, rng), q = randn(nq, d, rng);
    std::vector<int> labels;
    for (int c = 0; c < ways; ++c)
      for (int s = 0; s < shots; ++s) labels.push_back(c);
    const std::vector<int> got = class_mean_predict(ex, labels, ways, q);
    for (int i = 0; i < nq; ++i) {
      int best = 0;
      double best_sim = -2.0;
      for (int c = 0; c < ways; ++c) {
        RowVector mean = RowVector::Zero(d);
        for (int s = 0; s < shots; ++s) mean += ex.row(c * shots + s);
        mean /= shots;
        const double sim = cosine(q.row(i), mean);
        if (sim > best_sim + 1e-10) {
          best = c;
          best_sim = sim;
        }
      }
      CHECK(got[static_cast<std::size_t>(i)] == best);
    }
  }

  Matrix ex(2, 2);
  ex << 1, 0, 0, 1;
  Matrix q(3, 2);
  q << 1, 1, 0.2, 0.9, 5, -1;
  const std::vector<int> two{0, 1};
  CHECK(class_mean_predict(ex, two, 2, q) == std::vector<int>{0, 1, 0});
  CHECK_THROWS_AS(class_mean_predict(ex, std::vector<int>{0}, 2, q), ShapeError);
}

TEST_CASE("linear head fitting") {
  Matrix x(4, 2);
  x << 2, 0, 3, 0.5, 0, 2, -0.5, 3;
  const std::vector<int> y{0, 0, 1, 1};
  LinearHead h = fit_linear_head(x, y, 2, HeadConfig{});
  CHECK(predict_linear_head(h, x) == y);
  LinearHead again = fit_linear_head(x, y, 2, HeadConfig{});
  CHECK(again.w == h.w);
  CHECK(again.b == h.b);

  // zero embeddings leave the zero-initialized head at equal scores; ties go to class 0
  LinearHead flat = fit_linear_head(Matrix::Zero(4, 2), y, 2, HeadConfig{});
  CHECK(predict_linear_head(flat, Matrix::Zero(3, 2)) == std::vector<int>{0, 0, 0});
  CHECK(flat.w.isZero(0.0));

  LinearHead none = fit_linear_head(x, y, 2, HeadConfig{0, 1e-2});
  CHECK(none.w.isZero(0.0));
}

TEST_CASE("fine-tuning leaves the encoder untouched") {
  PlantedGraph pg = synth_planted_graph(2, 30, 0.3, 0.05, 0.5, 13);
  ModelParams p = baseline_nopretrain(config_for(pg.graph), 14);
  const ModelParams before = p;
  const auto tasks = downstream(pg, 2, 3, 5, 15);
  for (const auto& t : tasks) {
    Rng a(1), b(1);
    const auto first = baseline_finetune(p, strip_query_labels(t), pg.graph, ContextConfig{}, HeadConfig{}, a);
    CHECK(first == baseline_finetune(p, strip_query_labels(t), pg.graph, ContextConfig{}, HeadConfig{}, b));
    CHECK(first.size() == t.queries.size());
  }
  CHECK(p == before);
}

TEST_CASE("contrastive loss") {
  ad::Tape tape;
  Rng rng(16);
  Matrix v = randn(3, 4, rng);
  Matrix both(6, 4);
  both << v, v;
  const double tau = 0.5;
  const double loss = nt_xent(tape.constant(both), tau).value()(0, 0);
  double expect = 0.0;
  for (int i = 0; i < 6; ++i) {
    const int pos = i < 3 ? i + 3 : i - 3;
    double denom = 0.0;
    for (int j = 0; j < 6; ++j)
      if (j != i) denom += std::exp(cosine(both.row(i), both.row(j)) / tau);
    // identical views: the positive similarity is exactly 1
    CHECK(cosine(both.row(i), both.row(pos)) == doctest::Approx(1.0).epsilon(1e-14));
    expect -= std::log(std::exp(1.0 / tau) / denom);
  }
  CHECK(loss == doctest::Approx(expect / 6).epsilon(1e-12));
  CHECK_THROWS_AS(nt_xent(tape.constant(randn(2, 4, rng)), tau), ConfigError);

  PlantedGraph pg = synth_planted_graph(2, 20, 0.3, 0.05, 0.5, 17);
  TrainConfig t;
  t.steps = 3;
  t.seed = 2;
  EpisodeConfig ep;
  ep.context.fanout_cap = 3;
  CHECK_THROWS_AS(baseline_contrastive_pretrain(pg.graph, config_for(pg.graph), t, ep, ContrastiveConfig{1}),
                  ConfigError);
  ContrastiveResult a = baseline_contrastive_pretrain(pg.graph, config_for(pg.graph), t, ep, ContrastiveConfig{4});
  ContrastiveResult b = baseline_contrastive_pretrain(pg.graph, config_for(pg.graph), t, ep, ContrastiveConfig{4});
  CHECK(a.losses.size() == 3);
  CHECK(a.losses == b.losses);
  CHECK(a.params == b.params);
  // only encoder weights move
  ModelParams init = init_params(config_for(pg.graph), derive_seed({2, 0x9a7a}));
  CHECK(a.params.weights.at("task.0.att1") == init.weights.at("task.0.att1"));
  CHECK_FALSE(a.params.weights.at("data.0.self") == init.weights.at("data.0.self"));
}
