#include "prodigy/cli.hpp"

#include <glob.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "prodigy/baselines.hpp"
#include "prodigy/checkpoint.hpp"
#include "prodigy/config.hpp"
#include "prodigy/error.hpp"
#include "prodigy/eval.hpp"
#include "prodigy/train.hpp"

namespace prodigy {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kEvalMethods = {"prodigy", "nopretrain", "contrastive", "finetune"};

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run configuration");
  cmd->add_option("--set", c.overrides, "Dotted override, e.g. model.d=64 (repeatable)");
  cmd->add_option("--seed", c.seed, "Seed (falls back to the config, then PRODIGY_SEED)");
  cmd->add_option("--output-dir", c.output_dir, "Output directory");
}

std::uint64_t env_seed() {
  const char* raw = std::getenv("PRODIGY_SEED");
  if (!raw || !*raw) return 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(raw, &end, 10);
  if (*end != '\0' || raw[0] == '-') throw ConfigError(std::string("PRODIGY_SEED is not an unsigned integer: ") + raw);
  return v;
}

/// Loads the document, applies overrides and flag values, and resolves the seed.
RunConfig resolve(const Common& c, json doc) {
  if (c.seed)
    doc["seed"] = *c.seed;
  else if (!doc.contains("seed"))
    doc["seed"] = env_seed();
  if (!c.output_dir.empty()) doc["output_dir"] = c.output_dir;
  return run_config_from_json(doc);
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("no ") + what + " file configured (graph." + what + ")");
  if (!fs::is_regular_file(path)) throw ConfigError(std::string(what) + " file not found: " + path);
}

struct Inputs {
  std::optional<Graph> graph;
  std::optional<Labeling> labels;
};

Inputs load_inputs(const RunConfig& cfg, bool need_labels) {
  require_file(cfg.graph.edges, "edges");
  require_file(cfg.graph.features, "features");
  Inputs in;
  in.graph.emplace(load_graph(cfg.graph.edges, cfg.graph.features, cfg.graph.directed));
  if (cfg.task.level == Level::edge) {
    if (need_labels) in.labels.emplace(relation_labeling(*in.graph));
    return in;
  }
  if (!cfg.graph.labels.empty()) {
    require_file(cfg.graph.labels, "labels");
    in.labels.emplace(load_labeling(cfg.graph.labels, *in.graph));
  } else if (need_labels) {
    throw ConfigError("node labels are required (graph.labels)");
  }
  return in;
}

/// Fills graph-dependent model fields.
void bind_model_to_graph(RunConfig& cfg, const Graph& g) {
  if (cfg.model.d_in == 0) cfg.model.d_in = g.feature_dim();
  if (cfg.model.d_in != g.feature_dim())
    throw ConfigError("model.d_in " + std::to_string(cfg.model.d_in) + " does not match graph feature width " +
                      std::to_string(g.feature_dim()));
  cfg.model.num_relations = std::max(cfg.model.num_relations, g.num_relations());
  cfg.model.validate();
}

void write_config(const RunConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  std::ofstream os(fs::path(cfg.output_dir) / "config.json");
  if (!os) throw Error("cannot write config.json in " + cfg.output_dir);
  os << run_config_to_json(cfg).dump(2) << "\n";
}

// ---- pretrain -------------------------------------------------------------------

int cmd_pretrain(const Common& c, std::optional<std::int64_t> steps, const std::string& resume_from, std::ostream& out) {
  json doc = load_config_document(c.config, c.overrides);
  if (steps) doc["train"]["steps"] = *steps;
  RunConfig cfg = resolve(c, doc);
  Inputs in = load_inputs(cfg, false);
  bind_model_to_graph(cfg, *in.graph);
  write_config(cfg);
  const fs::path dir = cfg.output_dir;

  if (cfg.train_method == "contrastive") {
    if (!resume_from.empty()) throw UsageError("--resume applies to prodigy pretraining only");
    ContrastiveResult res = baseline_contrastive_pretrain(*in.graph, cfg.model, cfg.train, cfg.task, cfg.contrastive);
    CheckpointData ck;
    ck.params = res.params;
    ck.meta = {{"method", "contrastive"}, {"seed", cfg.seed}, {"step", cfg.train.steps}, {"train_config", cfg.train}};
    const fs::path path = dir / checkpoint_name(cfg.train.steps);
    save_checkpoint(ck, path);
    std::ofstream log(dir / "contrastive_loss.csv");
    log << "step,loss\n";
    char buf[64];
    for (std::size_t s = 0; s < res.losses.size(); ++s) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g\n", s, res.losses[s]);
      log << buf;
    }
    out << "contrastive encoder trained for " << cfg.train.steps << " steps; checkpoint " << path.string() << "\n";
    return 0;
  }

  const Labeling* lab = in.labels ? &*in.labels : nullptr;
  PretrainIO io{dir, nullptr};
  PretrainResult res = resume_from.empty()
                           ? pretrain(*in.graph, lab, cfg.model, cfg.train, cfg.task, io)
                           : resume(resume_from, *in.graph, lab, cfg.train, cfg.task, io);
  out << "trained to step " << res.state.step;
  if (!res.log.empty()) out << "; last query accuracy " << res.log.back().query_acc;
  if (!res.checkpoints.empty()) out << "; final checkpoint " << res.checkpoints.back().string();
  out << "\n";
  return 0;
}

// ---- eval -------------------------------------------------------------------------

struct EvalFlags {
  std::string checkpoint;
  std::string method;
  std::optional<int> ways, shots, queries, num_tasks, jobs;
  std::string report;
  bool per_task = false;
};

int cmd_eval(const Common& c, const EvalFlags& f, std::ostream& out) {
  json doc = load_config_document(c.config, c.overrides);
  if (!f.method.empty()) doc["eval"]["method"] = f.method;
  if (f.ways) doc["eval"]["ways"] = *f.ways;
  if (f.shots) doc["eval"]["shots"] = *f.shots;
  if (f.queries) doc["eval"]["queries"] = *f.queries;
  if (f.num_tasks) doc["eval"]["num_tasks"] = *f.num_tasks;
  if (f.jobs) doc["eval"]["jobs"] = *f.jobs;
  const std::string method = doc.contains("eval") ? doc["eval"].value("method", std::string("prodigy")) : "prodigy";
  if (std::find(kEvalMethods.begin(), kEvalMethods.end(), method) == kEvalMethods.end()) {
    std::string names;
    for (const auto& n : kEvalMethods) names += (names.empty() ? "" : ", ") + n;
    throw UsageError("unknown method '" + method + "'; valid methods: " + names);
  }
  RunConfig cfg = resolve(c, doc);
  Inputs in = load_inputs(cfg, true);
  const Graph& g = *in.graph;

  ModelParams params;
  std::optional<std::int64_t> step;
  json notes = json::object();
  if (method == "nopretrain") {
    bind_model_to_graph(cfg, g);
    params = baseline_nopretrain(cfg.model, derive_seed({cfg.seed, 0x9a7a}));
  } else {
    if (f.checkpoint.empty()) throw UsageError("method '" + method + "' needs --checkpoint");
    if (!fs::is_regular_file(f.checkpoint)) throw ConfigError("checkpoint not found: " + f.checkpoint);
    CheckpointData ck = load_checkpoint(f.checkpoint);
    params = std::move(ck.params);
    if (ck.meta.contains("step")) step = ck.meta.at("step").get<std::int64_t>();
    notes["checkpoint"] = f.checkpoint;
    if (ck.meta.contains("train_config")) notes["train_config"] = ck.meta.at("train_config");
    if (params.config.d_in != g.feature_dim())
      throw ConfigError("checkpoint d_in " + std::to_string(params.config.d_in) + " does not match graph feature width " +
                        std::to_string(g.feature_dim()));
    cfg.model = params.config;
  }
  write_config(cfg);

  Rng split_rng = derive_rng({cfg.seed, 0x5b11});
  const Split split = random_split(*in.labels, cfg.eval.train_fraction, split_rng);
  DownstreamSpec spec{cfg.eval.ways, cfg.eval.shots, cfg.eval.queries, cfg.eval.pool_size, cfg.eval.num_tasks};
  Rng task_rng = derive_rng({cfg.seed, 0x7a5c});
  const auto tasks = sample_downstream_eval(g, *in.labels, split, spec, task_rng);

  EvalOptions opt{cfg.task.context, cfg.seed, cfg.eval.jobs};
  EvalReport rep;
  if (method == "prodigy" || method == "nopretrain") {
    rep = evaluate_in_context(params, g, tasks, opt);
  } else if (method == "contrastive") {
    rep = evaluate_tasks(
        tasks,
        [&](const FewShotPrompt& p, Rng& rng) { return baseline_contrastive_classify(params, p, g, opt.context, rng); },
        opt, method);
  } else {
    rep = evaluate_tasks(
        tasks,
        [&](const FewShotPrompt& p, Rng& rng) {
          return baseline_finetune(params, p, g, opt.context, cfg.eval.head, rng);
        },
        opt, method);
  }
  rep.method = method;
  rep.ways = cfg.eval.ways;
  rep.shots = cfg.eval.shots;
  rep.queries = cfg.eval.queries;
  rep.checkpoint_step = step;
  rep.notes = notes;

  const fs::path report = f.report.empty() ? fs::path(cfg.output_dir) / "eval_report.json" : fs::path(f.report);
  if (report.has_parent_path()) fs::create_directories(report.parent_path());
  write_report(rep, report);
  if (f.per_task) {
    fs::path csv = report;
    csv.replace_extension();
    csv += "_per_task.csv";
    write_per_task_csv(rep, csv);
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s %d-way %d-shot over %d tasks: %.4f +/- %.4f\n", method.c_str(), rep.ways,
                rep.shots, rep.num_tasks, rep.mean, rep.std_error);
  out << buf << "report " << report.string() << "\n";
  return 0;
}

// ---- gen-tasks ---------------------------------------------------------------------

int cmd_gen_tasks(const Common& c, const std::string& family, int count, const std::string& output,
                  const std::string& dump_dir, std::ostream& out) {
  if (count < 0) throw UsageError("--count must be >= 0");
  if (family != "nm" && family != "mt" && family != "downstream")
    throw UsageError("unknown family '" + family + "'; valid families: nm, mt, downstream");
  RunConfig cfg = resolve(c, load_config_document(c.config, c.overrides));
  Inputs in = load_inputs(cfg, family != "nm");
  const Graph& g = *in.graph;

  std::vector<FewShotPrompt> prompts;
  if (family == "downstream") {
    Rng split_rng = derive_rng({cfg.seed, 0x5b11});
    const Split split = random_split(*in.labels, cfg.eval.train_fraction, split_rng);
    Rng task_rng = derive_rng({cfg.seed, 0x7a5c});
    DownstreamSpec spec{cfg.eval.ways, cfg.eval.shots, cfg.eval.queries, cfg.eval.pool_size, count};
    if (count > 0) prompts = sample_downstream_eval(g, *in.labels, split, spec, task_rng);
  } else {
    const Family fam = family == "nm" ? Family::neighbor_matching : Family::multi_task;
    for (int i = 0; i < count; ++i) {
      Rng rng = derive_rng({cfg.seed, 0x6e7, static_cast<std::uint64_t>(i)});
      const Labeling* lab = in.labels ? &*in.labels : nullptr;
      prompts.push_back(sample_prompt(g, lab, fam, cfg.task, rng));
    }
  }

  std::ofstream file;
  std::ostream* sink = &out;
  if (!output.empty()) {
    fs::path p(output);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    file.open(p);
    if (!file) throw Error("cannot write " + output);
    sink = &file;
  }
  if (!dump_dir.empty()) fs::create_directories(dump_dir);
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    *sink << prompt_record(prompts[i]).dump() << "\n";
    if (!dump_dir.empty()) {
      Rng rng = derive_rng({cfg.seed, 0xd0a9, static_cast<std::uint64_t>(i)});
      const AugmentConfig aug = cfg.task.augment.enabled ? cfg.task.augment : AugmentConfig::off();
      const PromptGraph pg = assemble_prompt_graph(g, prompts[i], cfg.task.context, aug, rng);
      save_prompt_graph(pg, fs::path(dump_dir) / ("prompt_" + std::to_string(i) + ".bin"));
    }
  }
  return 0;
}

// ---- inspect ----------------------------------------------------------------------

int cmd_inspect(const std::string& path, std::ostream& out, std::ostream& err) {
  PromptGraph pg;
  try {
    pg = load_prompt_graph(path);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  const TaskGraph& tg = pg.task_graph;
  if (auto bad = check_task_graph(tg)) {
    err << "INVALID: " << *bad << "\n";
    return 1;
  }
  if (pg.data_graphs.size() != tg.data_nodes.size()) {
    err << "INVALID: one data graph per data node\n";
    return 1;
  }
  for (std::size_t i = 0; i < pg.data_graphs.size(); ++i) {
    try {
      pg.data_graphs[i].validate();
    } catch (const Error& e) {
      err << "INVALID: data graph " << i << ": " << e.what() << "\n";
      return 1;
    }
  }
  std::size_t nodes = 0;
  for (const auto& dg : pg.data_graphs) nodes += dg.local_nodes.size();
  out << "OK level=" << (pg.level == Level::node ? "node" : "edge") << " ways=" << tg.ways << " shots=" << tg.shots
      << " queries=" << tg.num_queries() << " data_nodes=" << tg.data_nodes.size()
      << " label_nodes=" << tg.label_nodes.size() << " task_edges=" << tg.edges.size()
      << " data_graph_nodes=" << nodes << "\n";
  return 0;
}

// ---- plot ---------------------------------------------------------------------------

struct CurvePoint {
  double x = 0.0;
  double mean = 0.0;
  double se = 0.0;
  int reports = 0;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_svg(const std::vector<CurvePoint>& pts, const std::string& xlabel, int ways, const fs::path& path) {
  const double W = 640, H = 420, L = 70, R = 20, T = 30, B = 60;
  double x0 = pts.front().x, x1 = pts.back().x;
  if (x1 == x0) x1 = x0 + 1;
  double y0 = 1.0, y1 = 0.0;
  for (const auto& p : pts) {
    y0 = std::min(y0, p.mean - p.se);
    y1 = std::max(y1, p.mean + p.se);
  }
  y0 = std::max(0.0, y0 - 0.05);
  y1 = std::min(1.0, y1 + 0.05);
  if (y1 <= y0) y1 = y0 + 0.1;
  auto sx = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto sy = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  std::string band;
  for (const auto& p : pts) band += fmt(sx(p.x)) + "," + fmt(sy(p.mean + p.se)) + " ";
  for (auto it = pts.rbegin(); it != pts.rend(); ++it) band += fmt(sx(it->x)) + "," + fmt(sy(it->mean - it->se)) + " ";
  os << "<polygon points=\"" << band << "\" fill=\"#4c72b0\" fill-opacity=\"0.25\" stroke=\"none\"/>\n";
  std::string line;
  for (const auto& p : pts) line += fmt(sx(p.x)) + "," + fmt(sy(p.mean)) + " ";
  os << "<polyline points=\"" << line << "\" fill=\"none\" stroke=\"#4c72b0\" stroke-width=\"2\"/>\n";
  for (const auto& p : pts) {
    os << "<circle cx=\"" << fmt(sx(p.x)) << "\" cy=\"" << fmt(sy(p.mean)) << "\" r=\"3\" fill=\"#4c72b0\"/>\n";
    os << "<text x=\"" << fmt(sx(p.x)) << "\" y=\"" << H - B + 18 << "\" font-size=\"11\" text-anchor=\"middle\">"
       << fmt(p.x) << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double y = y0 + (y1 - y0) * i / 4.0;
    os << "<text x=\"" << L - 8 << "\" y=\"" << fmt(sy(y) + 4) << "\" font-size=\"11\" text-anchor=\"end\">"
       << fmt(y) << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15 << "\" font-size=\"13\" text-anchor=\"middle\">"
     << xlabel << "</text>\n";
  os << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << (T + H - B) / 2 << ")\">accuracy (" << ways << "-way)</text>\n";
  os << "</svg>\n";
}

int cmd_plot(const std::string& kind, const std::string& pattern, const std::string& output, std::ostream& out) {
  if (kind != "shots_curve" && kind != "steps_curve")
    throw UsageError("unknown plot kind '" + kind + "'; valid kinds: shots_curve, steps_curve");
  glob_t gl{};
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &gl);
  std::vector<std::string> files;
  if (rc == 0)
    for (std::size_t i = 0; i < gl.gl_pathc; ++i) files.emplace_back(gl.gl_pathv[i]);
  globfree(&gl);
  if (files.size() < 2)
    throw UsageError("a curve needs at least 2 reports; '" + pattern + "' matched " + std::to_string(files.size()));

  std::map<double, std::vector<EvalReport>> by_x;
  std::optional<int> ways;
  for (const auto& f : files) {
    EvalReport r = read_report(f);
    if (ways && *ways != r.ways) throw UsageError("reports mix different ways; curves must hold ways fixed");
    ways = r.ways;
    double x = 0.0;
    if (kind == "shots_curve") {
      x = r.shots;
    } else {
      if (!r.checkpoint_step) throw UsageError(f + " has no checkpoint step for a steps curve");
      x = static_cast<double>(*r.checkpoint_step);
    }
    by_x[x].push_back(std::move(r));
  }
  if (by_x.size() < 2) throw UsageError("a curve needs at least 2 distinct x values");

  std::vector<CurvePoint> pts;
  for (const auto& [x, reps] : by_x) {
    CurvePoint p{x, 0.0, 0.0, static_cast<int>(reps.size())};
    double var = 0.0;
    for (const auto& r : reps) {
      p.mean += r.mean;
      var += r.std_error * r.std_error;
    }
    p.mean /= reps.size();
    p.se = std::sqrt(var) / reps.size();
    pts.push_back(p);
  }

  fs::path svg(output);
  if (svg.has_parent_path()) fs::create_directories(svg.parent_path());
  fs::path csv = svg;
  csv.replace_extension(".csv");
  {
    std::ofstream os(csv);
    if (!os) throw Error("cannot write " + csv.string());
    os << (kind == "shots_curve" ? "shots" : "steps") << ",mean,stderr,reports\n";
    for (const auto& p : pts) os << fmt(p.x) << "," << fmt(p.mean) << "," << fmt(p.se) << "," << p.reports << "\n";
  }
  write_svg(pts, kind == "shots_curve" ? "shots per class" : "pretraining steps", *ways, svg);
  out << "wrote " << svg.string() << " and " << csv.string() << " (" << pts.size() << " points)\n";
  return 0;
}

// ---- synth ----------------------------------------------------------------------------

struct SynthFlags {
  int blocks = 2;
  int per_block = 100;
  double p_in = 0.2;
  double p_out = 0.02;
  double noise = 1.0;
  std::optional<std::uint64_t> seed;
  std::string output_dir = "planted";
};

int cmd_synth(const SynthFlags& f, std::ostream& out) {
  const std::uint64_t seed = f.seed ? *f.seed : env_seed();
  PlantedGraph pg = synth_planted_graph(f.blocks, f.per_block, f.p_in, f.p_out, f.noise, seed);
  const fs::path dir = f.output_dir;
  fs::create_directories(dir);
  save_graph(pg.graph, dir / "edges.tsv", dir / "features.tsv");
  save_labeling(pg.labels, dir / "labels.tsv");
  out << "wrote " << pg.graph.num_nodes() << " nodes, " << pg.graph.num_edges() << " edges to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"In-context learning over graphs: pretraining, evaluation and episode tooling", "prodigy"};
  app.require_subcommand(1);

  Common pre_c;
  std::optional<std::int64_t> steps;
  std::string resume_from;
  auto* pre = app.add_subcommand("pretrain", "Pretrain on neighbor-matching and multi-task episodes");
  add_common(pre, pre_c);
  pre->add_option("--steps", steps, "Override train.steps");
  pre->add_option("--resume", resume_from, "Continue from a checkpoint");

  Common ev_c;
  EvalFlags ev_f;
  auto* ev = app.add_subcommand("eval", "Evaluate on downstream few-shot tasks");
  add_common(ev, ev_c);
  ev->add_option("--checkpoint", ev_f.checkpoint, "Checkpoint to evaluate");
  ev->add_option("--method", ev_f.method, "prodigy, nopretrain, contrastive or finetune");
  ev->add_option("--ways", ev_f.ways, "Classes per task");
  ev->add_option("--shots", ev_f.shots, "Examples per class");
  ev->add_option("--queries", ev_f.queries, "Queries per task");
  ev->add_option("--num-tasks", ev_f.num_tasks, "Number of tasks");
  ev->add_option("--jobs", ev_f.jobs, "Worker threads");
  ev->add_option("--report", ev_f.report, "Report path (default <output_dir>/eval_report.json)");
  ev->add_flag("--per-task", ev_f.per_task, "Also write per-task accuracies as CSV");

  Common gen_c;
  std::string family = "nm", gen_out, dump_dir;
  int count = 10;
  auto* gen = app.add_subcommand("gen-tasks", "Stream sampled episodes as JSON lines");
  add_common(gen, gen_c);
  gen->add_option("--family", family, "nm, mt or downstream");
  gen->add_option("--count", count, "Number of episodes");
  gen->add_option("--output", gen_out, "Write records here instead of stdout");
  gen->add_option("--dump-dir", dump_dir, "Also write each assembled prompt graph here");

  std::string dump_path;
  auto* ins = app.add_subcommand("inspect", "Check a prompt-graph dump");
  ins->add_option("dump", dump_path, "Prompt-graph dump")->required();

  std::string kind, pattern, plot_out;
  auto* plot = app.add_subcommand("plot", "Plot accuracy curves from eval reports");
  plot->add_option("--kind", kind, "shots_curve or steps_curve")->required();
  plot->add_option("--reports", pattern, "Glob matching report files")->required();
  plot->add_option("--output", plot_out, "SVG path; the CSV goes next to it")->required();

  SynthFlags sf;
  auto* syn = app.add_subcommand("synth", "Write a planted-partition graph with labels");
  syn->add_option("--blocks", sf.blocks);
  syn->add_option("--per-block", sf.per_block);
  syn->add_option("--p-in", sf.p_in);
  syn->add_option("--p-out", sf.p_out);
  syn->add_option("--noise", sf.noise);
  syn->add_option("--seed", sf.seed);
  syn->add_option("--output-dir", sf.output_dir);

  std::vector<std::string> storage{"prodigy"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*pre) return cmd_pretrain(pre_c, steps, resume_from, out);
    if (*ev) return cmd_eval(ev_c, ev_f, out);
    if (*gen) return cmd_gen_tasks(gen_c, family, count, gen_out, dump_dir, out);
    if (*ins) return cmd_inspect(dump_path, out, err);
    if (*plot) return cmd_plot(kind, pattern, plot_out, out);
    if (*syn) return cmd_synth(sf, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace prodigy
