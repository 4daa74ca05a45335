// relprop: build, train and evaluate relational propagation models from the
// command line. Exit codes: 0 ok, 2 input error, 3 degenerate graph,
// 4 divergence.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "relprop/relprop.hpp"

namespace fs = std::filesystem;
using namespace relprop;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitGraph = 3;
constexpr int kExitDiverged = 4;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NoObservables:
    case ErrorCode::DegenerateGraph:
    case ErrorCode::EmptyOverlap:
      return kExitGraph;
    case ErrorCode::Diverged:
      return kExitDiverged;
    default:
      return kExitInput;
  }
}

NetworkSkeleton load_graph(const std::string& path) {
  auto in = text::open_input(path);
  return read_skeleton(in, path);
}

CellLinePanel load_panel(const std::string& path) {
  auto in = text::open_input(path);
  return read_panel(in, path);
}

template <class Fn>
void write_file(const fs::path& path, Fn&& fn) {
  auto os = text::open_output(path.string());
  fn(os);
  if (!os) throw Error(ErrorCode::Io, "write failed", path.string());
}

// Shared flags of train / predict / eval. Values given on the command line
// override the config file, which overrides built-in defaults.
struct RunFlags {
  std::string graph, panel, config, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads, epochs, inner_iters, k;
  std::optional<double> test_fraction;

  void add(CLI::App* cmd, bool needs_panel = true) {
    cmd->add_option("--graph", graph, "graph file from build or subgraph")->required();
    auto* p = cmd->add_option("--panel", panel, "panel file from build");
    if (needs_panel) p->required();
    cmd->add_option("--config", config, "key = value config file");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--out", out, "output directory")->required();
    cmd->add_option("--threads", threads, "episode parallelism cap");
    cmd->add_option("--epochs", epochs, "outer epochs N");
    cmd->add_option("--inner-iters", inner_iters, "inner steps T");
    cmd->add_option("-k,--dim", k, "embedding dimension");
    cmd->add_option("--test-fraction", test_fraction, "held-out cell-line fraction");
  }

  RunConfig resolve() const {
    RunConfig c;
    if (!config.empty()) {
      auto in = text::open_input(config);
      read_config(in, c, config);
    }
    if (seed) c.train.seed = *seed;
    if (threads) c.train.threads = *threads;
    if (epochs) c.train.epochs = *epochs;
    if (inner_iters) c.train.inner_iters = *inner_iters;
    if (k) c.train.dim = *k;
    if (test_fraction) c.test_fraction = *test_fraction;
    c.graph_path = graph;
    c.panel_path = panel;
    c.out_dir = out;
    c.train.validate();
    return c;
  }
};

void echo_config(const RunConfig& c, const fs::path& dir) {
  write_file(dir / "config.txt", [&](std::ostream& os) { write_config(os, c); });
}

void write_train_outputs(const fs::path& dir, const NetworkSkeleton& g, const TrainReport& r) {
  write_file(dir / "params.tsv", [&](std::ostream& os) { write_params(os, r.params, g); });
  write_file(dir / "thresholds.tsv", [&](std::ostream& os) { write_thresholds(os, r.thresholds); });
  write_file(dir / "trajectory.tsv", [&](std::ostream& os) { write_trajectory(os, r); });
}

int cmd_build(const std::string& interactions, const std::string& metapatterns, const std::string& expr,
              const std::string& sens, const std::string& out) {
  auto patterns = parse_interactions(interactions);
  if (!metapatterns.empty()) {
    auto mp = parse_metapatterns(metapatterns);
    patterns.insert(patterns.end(), mp.begin(), mp.end());
  }
  const auto expression = parse_expression(expr);
  const auto records = parse_sensitivity(sens);
  const auto link = link_entities(patterns, expression, records);
  const auto built = build_skeleton(link.patterns, link.entities);
  const auto panel = build_panel(expression, records, link);
  const auto& g = built.skeleton;

  const fs::path dir(out);
  fs::create_directories(dir);
  write_file(dir / "graph.tsv", [&](std::ostream& os) { write_skeleton(os, g); });
  write_file(dir / "panel.tsv", [&](std::ostream& os) { write_panel(os, panel.panel); });
  write_file(dir / "link_report.txt", [&](std::ostream& os) {
    write_link_summary(os, link.report);
    os << "self_loops_dropped\t" << built.self_loops << '\n';
    os << "cell_lines_joined\t" << panel.report.joined << '\n';
    os << "cell_lines_expression_only\t" << panel.report.dropped_expression_only << '\n';
    os << "cell_lines_sensitivity_only\t" << panel.report.dropped_sensitivity_only << '\n';
    os << "cell_lines_duplicate\t" << panel.report.duplicate_cell_lines << '\n';
    os << "constant_features\t" << panel.report.constant_features.size() << '\n';
    os << "missing_fraction\t" << text::format_double(panel.report.missing_fraction) << '\n';
  });
  write_file(dir / "link_conflicts.tsv", [&](std::ostream& os) { write_link_conflicts(os, link.report); });

  if (panel.report.dropped_expression_only || panel.report.dropped_sensitivity_only)
    std::cerr << "warning: dropped " << panel.report.dropped_expression_only << " expression-only and "
              << panel.report.dropped_sensitivity_only << " sensitivity-only cell lines\n";
  if (!link.report.conflicts.empty())
    std::cerr << "warning: " << link.report.conflicts.size() << " alias conflicts quarantined\n";
  std::cout << "genes=" << g.count(EntityKind::Gene) << " drugs=" << g.count(EntityKind::Chemical)
            << " edges=" << g.edges.size() << " observable=" << g.observable_count() << '\n';
  return 0;
}

int cmd_subgraph(const std::string& in, std::size_t k, bool allow_any_k, bool do_prune, const std::string& out,
                 const std::string& dot) {
  if (!allow_any_k && k != 1 && k != 2)
    throw Error(ErrorCode::InvalidArgument, "k must be 1 or 2 (pass --allow-any-k to override)");
  const auto g = load_graph(in);
  auto sub = khop_subgraph(g, k).skeleton;
  std::cout << "before nodes=" << g.size() << " edges=" << g.edges.size() << '\n';
  std::cout << "khop k=" << k << " nodes=" << sub.size() << " edges=" << sub.edges.size() << '\n';
  if (do_prune) {
    sub = prune(sub).skeleton;
    std::cout << "pruned nodes=" << sub.size() << " edges=" << sub.edges.size() << '\n';
    if (sub.size() == 0) std::cerr << "warning: pruning left an empty graph\n";
  }
  write_file(out, [&](std::ostream& os) { write_skeleton(os, sub); });
  if (!dot.empty()) export_dot(sub, dot);
  return 0;
}

int cmd_train(const RunFlags& flags) {
  const auto cfg = flags.resolve();
  const auto g = load_graph(cfg.graph_path);
  const auto panel = load_panel(cfg.panel_path);
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  echo_config(cfg, dir);
  const auto report = train(g, panel, cfg.train);
  write_train_outputs(dir, g, report);
  const auto& first = report.trajectory.front();
  const auto& last = report.trajectory.back();
  std::cout << "episodes=" << report.episodes << " epochs=" << report.trajectory.size()
            << " loss_first=" << text::format_double(first.total) << " loss_last=" << text::format_double(last.total)
            << '\n';
  std::cerr << "wall_seconds=" << report.wall_seconds << '\n';
  return 0;
}

int cmd_predict(const RunFlags& flags, const std::string& params_path, const std::string& thresholds_path) {
  const auto cfg = flags.resolve();
  const auto g = load_graph(cfg.graph_path);
  const auto panel = load_panel(cfg.panel_path);
  ModelParams params;
  {
    auto in = text::open_input(params_path);
    params = read_params(in, g, params_path);
  }
  DrugThresholds thresholds;
  if (!thresholds_path.empty()) {
    auto in = text::open_input(thresholds_path);
    thresholds = read_thresholds(in, thresholds_path);
  }
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  echo_config(cfg, dir);
  const auto preds = predict_panel(g, params, panel, cfg.train, thresholds);
  write_file(dir / "predictions.tsv", [&](std::ostream& os) { write_predictions(os, g, preds); });
  std::cout << "predictions=" << preds.items.size() << '\n';
  return 0;
}

int cmd_eval(const RunFlags& flags, double l1_strength) {
  auto cfg = flags.resolve();
  if (l1_strength >= 0) cfg.l1_strength = l1_strength;
  const auto g = load_graph(cfg.graph_path);
  const auto panel = load_panel(cfg.panel_path);
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  echo_config(cfg, dir);

  const auto split = split_cell_lines(panel, cfg.test_fraction, cfg.train.seed);
  write_file(dir / "split.tsv", [&](std::ostream& os) {
    os << "cell_line\tside\n";
    for (std::size_t c = 0; c < panel.size(); ++c) {
      const bool test = std::binary_search(split.test_cells.begin(), split.test_cells.end(), c);
      os << panel.cell_lines[c] << '\t' << (test ? "test" : "train") << '\n';
    }
  });

  LogRegOptions opt;
  opt.l1_strength = cfg.l1_strength;
  opt.max_iters = cfg.logreg_max_iters;
  const auto baseline = evaluate(baseline_predictions(split.train, split.test, opt), split.test, cfg.train.seed);

  const auto report = train(g, split.train, cfg.train);
  write_train_outputs(dir, g, report);
  const auto preds = predict_panel(g, report.params, split.test, cfg.train, report.thresholds);
  write_file(dir / "predictions.tsv", [&](std::ostream& os) { write_predictions(os, g, preds); });
  const auto model = evaluate(preds, split.test, cfg.train.seed);

  write_file(dir / "eval.tsv", [&](std::ostream& os) {
    write_eval_header(os);
    write_eval_row(os, baseline);
    write_eval_row(os, model);
  });
  std::printf("%-12s %9s %5s %5s %5s %5s %5s\n", "method", "accuracy", "tp", "fp", "fn", "tn", "n");
  for (const auto* r : {&baseline, &model})
    std::printf("%-12s %8.2f%% %5zu %5zu %5zu %5zu %5zu\n", r->method.c_str(), 100.0 * r->accuracy, r->tp, r->fp,
                r->fn, r->tn, r->n_test);
  return 0;
}

int cmd_explain(const RunFlags& flags, const std::string& params_path, const std::string& cell_line,
                const std::string& drug) {
  const auto cfg = flags.resolve();
  const auto g = load_graph(cfg.graph_path);
  const auto panel = load_panel(cfg.panel_path);
  ModelParams params;
  {
    auto in = text::open_input(params_path);
    params = read_params(in, g, params_path);
  }
  std::optional<EntityId> node;
  const auto wanted = text::normalize_name(drug);
  for (EntityId i = 0; i < g.size(); ++i)
    if (g.entities[i].kind == EntityKind::Chemical && text::normalize_name(g.entities[i].canonical_name) == wanted)
      node = i;
  if (!node) throw Error(ErrorCode::UnknownDrug, "no drug named '" + drug + "' in the graph");
  std::optional<CellObservations> obs;
  for (auto& o : panel_observations(panel, g))
    if (o.cell_line == cell_line) obs = o;
  if (!obs) throw Error(ErrorCode::InvalidArgument, "cell line '" + cell_line + "' not in the panel");
  const auto fitted = fit_states(params, g, gene_only(*obs), cfg.train, node_learning_rates(g, cfg.train));
  const auto ex = explain(g, fitted, *node);
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  write_file(dir / "explanation.tsv", [&](std::ostream& os) { write_explanation(os, g, ex); });
  write_explanation(std::cout, g, ex);
  return 0;
}

int cmd_stats(const std::string& graph, const std::string& out) {
  const auto g = load_graph(graph);
  const auto labels = relation_histogram(g);
  const auto pairs = relation_pair_counts(g);
  std::ostringstream body;
  body << "# nodes=" << g.size() << " edges=" << g.edges.size() << " genes=" << g.count(EntityKind::Gene)
       << " drugs=" << g.count(EntityKind::Chemical) << " diseases=" << g.count(EntityKind::Disease)
       << " observable=" << g.observable_count() << '\n';
  body << "# relation labels (weighted)\n";
  write_histogram(body, labels);
  body << "# entity pairs per relation\n";
  write_histogram(body, pairs);
  std::cout << body.str();
  if (!out.empty()) write_file(out, [&](std::ostream& os) { os << body.str(); });
  return 0;
}

int cmd_synth(const SynthConfig& cfg, const std::string& out) {
  const auto ds = generate(cfg);
  write_synth_files(ds, out);
  std::cout << "genes=" << cfg.n_genes << " drugs=" << cfg.n_drugs << " edges=" << ds.graph.edges.size()
            << " cell_lines=" << cfg.n_cell_lines << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relprop: relational propagation for drug sensitivity prediction"};
  app.require_subcommand(1);

  auto* build = app.add_subcommand("build", "parse inputs, link entities, write graph and panel");
  std::string b_inter, b_meta, b_expr, b_sens, b_out;
  build->add_option("--interactions", b_inter, "drug-gene interactions TSV")->required();
  build->add_option("--metapatterns", b_meta, "meta-pattern TSV");
  build->add_option("--expr", b_expr, "expression TSV")->required();
  build->add_option("--sens", b_sens, "drug sensitivity TSV")->required();
  build->add_option("--out", b_out, "output directory")->required();

  auto* sub = app.add_subcommand("subgraph", "k-hop extraction around observables, optional pruning");
  std::string s_in, s_out, s_dot;
  std::size_t s_k = 2;
  bool s_prune = false, s_any_k = false;
  sub->add_option("--in", s_in, "graph file")->required();
  sub->add_option("--k", s_k, "hop distance");
  sub->add_flag("--prune", s_prune, "prune dangling unobserved nodes");
  sub->add_option("--out", s_out, "output graph file")->required();
  sub->add_option("--dot", s_dot, "Graphviz output");
  sub->add_flag("--allow-any-k", s_any_k, "accept k outside {1, 2}");

  RunFlags train_flags, predict_flags, eval_flags, explain_flags;
  auto* tr = app.add_subcommand("train", "fit R and readout on a panel");
  train_flags.add(tr);

  auto* pr = app.add_subcommand("predict", "score every panel drug for every panel cell line");
  predict_flags.add(pr);
  std::string p_params, p_thresholds;
  pr->add_option("--params", p_params, "params.tsv from train")->required();
  pr->add_option("--thresholds", p_thresholds, "thresholds.tsv from train");

  auto* ev = app.add_subcommand("eval", "split by cell line, compare baseline and model");
  eval_flags.add(ev);
  double e_l1 = -1.0;
  ev->add_option("--l1", e_l1, "baseline L1 strength");

  auto* ex = app.add_subcommand("explain", "rank neighbor contributions to a drug's estimate");
  explain_flags.add(ex);
  std::string x_params, x_cell, x_drug;
  ex->add_option("--params", x_params, "params.tsv from train")->required();
  ex->add_option("--cell-line", x_cell, "cell line whose genes fit the states")->required();
  ex->add_option("--drug", x_drug, "drug name")->required();

  auto* st = app.add_subcommand("stats", "relation histograms");
  std::string st_graph, st_out;
  st->add_option("--graph", st_graph, "graph file")->required();
  st->add_option("--out", st_out, "report file");

  auto* sy = app.add_subcommand("synth", "write a planted-model dataset in the input formats");
  SynthConfig sc;
  std::string sy_out;
  sy->add_option("--out", sy_out, "output directory")->required();
  sy->add_option("--genes", sc.n_genes, "gene count");
  sy->add_option("--drugs", sc.n_drugs, "drug count");
  sy->add_option("--cell-lines", sc.n_cell_lines, "cell-line count");
  sy->add_option("--edge-prob", sc.edge_prob, "gene-drug edge probability");
  sy->add_option("--gene-edge-prob", sc.gene_edge_prob, "gene-gene edge probability");
  sy->add_option("-k,--dim", sc.k, "planted embedding dimension");
  sy->add_option("--sigma", sc.noise_sigma, "observation noise standard deviation");
  sy->add_option("--seed", sc.seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*build) return cmd_build(b_inter, b_meta, b_expr, b_sens, b_out);
    if (*sub) return cmd_subgraph(s_in, s_k, s_any_k, s_prune, s_out, s_dot);
    if (*tr) return cmd_train(train_flags);
    if (*pr) return cmd_predict(predict_flags, p_params, p_thresholds);
    if (*ev) return cmd_eval(eval_flags, e_l1);
    if (*ex) return cmd_explain(explain_flags, x_params, x_cell, x_drug);
    if (*st) return cmd_stats(st_graph, st_out);
    if (*sy) return cmd_synth(sc, sy_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return 0;
}
