#include "prodigy/eval.hpp"

#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "prodigy/error.hpp"

namespace prodigy {

using nlohmann::json;

void EvalReport::finalize() {
  num_tasks = static_cast<int>(per_task.size());
  if (per_task.empty()) {
    mean = std_error = 0.0;
    return;
  }
  double s = 0.0;
  for (double a : per_task) s += a;
  mean = s / num_tasks;
  if (num_tasks < 2) {
    std_error = 0.0;
    return;
  }
  double ss = 0.0;
  for (double a : per_task) ss += (a - mean) * (a - mean);
  std_error = std::sqrt(ss / (num_tasks - 1)) / std::sqrt(static_cast<double>(num_tasks));
}

void to_json(json& j, const EvalReport& r) {
  j = {{"method", r.method},
       {"ways", r.ways},
       {"shots", r.shots},
       {"queries", r.queries},
       {"num_tasks", r.num_tasks},
       {"seed", r.seed},
       {"checkpoint_step", r.checkpoint_step ? json(*r.checkpoint_step) : json(nullptr)},
       {"mean", r.mean},
       {"stderr", r.std_error},
       {"notes", r.notes},
       {"per_task", r.per_task}};
}

void from_json(const json& j, EvalReport& r) {
  r.method = j.at("method").get<std::string>();
  r.ways = j.at("ways").get<int>();
  r.shots = j.at("shots").get<int>();
  r.queries = j.value("queries", 0);
  r.num_tasks = j.at("num_tasks").get<int>();
  r.seed = j.value("seed", std::uint64_t{0});
  r.checkpoint_step = j.contains("checkpoint_step") && !j.at("checkpoint_step").is_null()
                          ? std::optional<std::int64_t>(j.at("checkpoint_step").get<std::int64_t>())
                          : std::nullopt;
  r.mean = j.at("mean").get<double>();
  r.std_error = j.at("stderr").get<double>();
  r.notes = j.value("notes", json::object());
  r.per_task = j.value("per_task", std::vector<double>{});
}

void write_report(const EvalReport& r, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << json(r).dump(2) << "\n";
}

EvalReport read_report(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw LoadError("cannot open report " + path.string());
  try {
    return json::parse(is).get<EvalReport>();
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": malformed report: " + e.what());
  }
}

void write_per_task_csv(const EvalReport& r, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << "task,accuracy\n";
  char buf[64];
  for (std::size_t t = 0; t < r.per_task.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", t, r.per_task[t]);
    os << buf;
  }
}

EvalReport evaluate_tasks(std::span<const FewShotPrompt> tasks, const Predictor& predict, const EvalOptions& opt,
                          std::string method) {
  if (tasks.empty()) throw UsageError("evaluation needs at least one task");
  for (const auto& t : tasks)
    if (t.query_labels.size() != t.queries.size() || t.queries.empty())
      throw ValidationError("evaluation tasks need at least one labeled query");

  std::vector<double> acc(tasks.size(), 0.0);
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto run = [&](std::size_t t) {
    const FewShotPrompt& task = tasks[t];
    Rng rng = derive_rng({opt.seed, 0xe7a1, static_cast<std::uint64_t>(t)});
    const std::vector<int> pred = predict(strip_query_labels(task), rng);
    if (pred.size() != task.query_labels.size()) throw ShapeError("predictor returned the wrong number of labels");
    int correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == task.query_labels[i];
    acc[t] = static_cast<double>(correct) / static_cast<double>(pred.size());
  };
  const int jobs = std::max(1, std::min<int>(opt.jobs, static_cast<int>(tasks.size())));
  if (jobs == 1) {
    for (std::size_t t = 0; t < tasks.size(); ++t) run(t);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t t = static_cast<std::size_t>(w); t < tasks.size(); t += static_cast<std::size_t>(jobs)) {
          try {
            run(t);
          } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
            return;
          }
        }
      });
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  EvalReport r;
  r.method = std::move(method);
  r.ways = tasks.front().ways;
  r.shots = tasks.front().shots;
  r.queries = tasks.front().num_queries();
  r.seed = opt.seed;
  r.per_task = std::move(acc);
  r.finalize();
  return r;
}

std::vector<int> predict_in_context(const ModelParams& params, const Graph& g, const FewShotPrompt& stripped,
                                    const ContextConfig& ctx, Rng& rng) {
  const PromptGraph pg = assemble_prompt_graph(g, stripped, ctx, AugmentConfig::off(), rng);
  return forward(params, pg, Mode::infer).logits.predicted;
}

EvalReport evaluate_in_context(const ModelParams& params, const Graph& g, std::span<const FewShotPrompt> tasks,
                               const EvalOptions& opt) {
  if (g.feature_dim() != params.config.d_in)
    throw ConfigError("graph feature width " + std::to_string(g.feature_dim()) + " does not match model d_in " +
                      std::to_string(params.config.d_in));
  return evaluate_tasks(
      tasks, [&](const FewShotPrompt& p, Rng& rng) { return predict_in_context(params, g, p, opt.context, rng); }, opt,
      "prodigy");
}

}  // namespace prodigy
