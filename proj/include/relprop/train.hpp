#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "relprop/error.hpp"
#include "relprop/ingest.hpp"
#include "relprop/model.hpp"
#include "relprop/network.hpp"
#include "relprop/rng.hpp"
#include "relprop/text.hpp"

namespace relprop {

struct TrainingConfig {
  std::size_t dim = 4;
  double lr_gene = 0.1;
  double lr_chem = 0.001;
  double lr_edge = 0.01;
  double beta = 1.0;
  std::size_t epochs = 100;
  std::size_t inner_iters = 20;
  std::uint64_t seed = 42;
  double predict_threshold = 0.5;
  bool calibrate_thresholds = true;
  bool shuffle_cell_lines = false;
  ChemNormalizer chem_normalizer = ChemNormalizer::ObservedChemicals;
  std::size_t threads = 1;

  bool operator==(const TrainingConfig&) const = default;

  void validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
    if (dim < 1) fail("k must be >= 1");
    if (!(lr_gene > 0) || !(lr_chem > 0) || !(lr_edge > 0)) fail("learning rates must be > 0");
    if (!(beta >= 0)) fail("beta must be >= 0");
    if (epochs < 1) fail("epochs must be >= 1");
    if (!(predict_threshold > 0 && predict_threshold < 1)) fail("predict_threshold must lie in (0, 1)");
    if (threads < 1) fail("threads must be >= 1");
  }
};

/// Per-drug decision thresholds keyed by entity-table id.
using DrugThresholds = std::map<EntityId, double>;

struct TrainReport {
  std::vector<LossBreakdown> trajectory;   // epoch means, one per epoch
  ModelParams params;
  DrugThresholds thresholds;
  double wall_seconds = 0.0;
  TrainingConfig config;
  std::size_t episodes = 0;   // cell lines that overlapped the graph
};

// ---------------------------------------------------------------------------
// Observations

/// Observations of every panel cell line restricted to nodes of `g`, in
/// panel order. Panel entity ids are matched through the graph's origin ids.
inline std::vector<CellObservations> panel_observations(const CellLinePanel& panel, const NetworkSkeleton& g) {
  std::map<EntityId, EntityId> local;
  for (EntityId i = 0; i < g.size(); ++i) local.emplace(g.origin[i], i);
  std::vector<CellObservations> out(panel.size());
  for (std::size_t c = 0; c < panel.size(); ++c) {
    out[c].cell_line = panel.cell_lines[c];
    for (std::size_t j = 0; j < panel.genes.width(); ++j) {
      auto it = local.find(panel.genes.entities[j]);
      if (it != local.end() && panel.genes.has(c, j)) out[c].genes.push_back({it->second, panel.genes.at(c, j)});
    }
    for (std::size_t j = 0; j < panel.drugs.width(); ++j) {
      auto it = local.find(panel.drugs.entities[j]);
      if (it != local.end() && panel.drugs.has(c, j)) out[c].drugs.push_back({it->second, panel.drugs.at(c, j)});
    }
  }
  return out;
}

/// Chemical nodes use the chemical rate; genes and everything else the gene rate.
inline std::vector<double> node_learning_rates(const NetworkSkeleton& g, const TrainingConfig& cfg) {
  std::vector<double> lr(g.size());
  for (EntityId i = 0; i < g.size(); ++i)
    lr[i] = g.entities[i].kind == EntityKind::Chemical ? cfg.lr_chem : cfg.lr_gene;
  return lr;
}

/// v_i, b_i, lambda_i <- x - lr_i * dL/dx for every node.
inline void step_states(ModelParams& p, const Gradients& gr, const std::vector<double>& lr) {
  const std::size_t k = p.dim;
  for (std::size_t i = 0; i < p.nodes(); ++i) {
    for (std::size_t d = 0; d < k; ++d) {
      p.states.v[i * k + d] -= lr[i] * gr.states.v[i * k + d];
      p.states.b[i * k + d] -= lr[i] * gr.states.b[i * k + d];
    }
    p.states.lambda[i] -= lr[i] * gr.states.lambda[i];
  }
}

/// Runs `iters` gradient steps on node states with R and readout frozen.
/// Throws Diverged on a non-finite loss or state.
inline ModelParams fit_states(ModelParams p, const NetworkSkeleton& g, const CellObservations& obs,
                              const TrainingConfig& cfg, const std::vector<double>& lr, std::size_t epoch = 0) {
  for (std::size_t t = 0; t < cfg.inner_iters; ++t) {
    auto lg = loss_and_grad(p, g, obs, cfg.beta, cfg.chem_normalizer);
    if (!std::isfinite(lg.loss.total))
      throw Error(ErrorCode::Diverged, "non-finite loss at epoch " + std::to_string(epoch) + ", iteration " +
                                           std::to_string(t + 1) + ", cell line " + obs.cell_line);
    step_states(p, lg.grad, lr);
    for (double x : p.states.v)
      if (!std::isfinite(x))
        throw Error(ErrorCode::Diverged, "non-finite node state at epoch " + std::to_string(epoch) +
                                             ", iteration " + std::to_string(t + 1) + ", cell line " + obs.cell_line);
  }
  return p;
}

namespace detail {

struct EpisodeResult {
  LossBreakdown loss;
  Gradients grad;
};

inline EpisodeResult run_episode(const ModelParams& shared, const NetworkSkeleton& g, const CellObservations& obs,
                                 const TrainingConfig& cfg, const std::vector<double>& lr, std::size_t epoch) {
  ModelParams fitted = fit_states(shared, g, obs, cfg, lr, epoch);
  // Shared gradients accumulate at the end of the inner loop; with no inner
  // loop there is nothing to accumulate.
  if (cfg.inner_iters == 0) return {loss(fitted, g, obs, cfg.beta, cfg.chem_normalizer), zeros_like(shared)};
  auto lg = loss_and_grad(fitted, g, obs, cfg.beta, cfg.chem_normalizer);
  return {lg.loss, std::move(lg.grad)};
}

}  // namespace detail

inline DrugThresholds calibrate_thresholds(const NetworkSkeleton& g, const ModelParams& params,
                                           const CellLinePanel& panel, const TrainingConfig& cfg);

/// Alternating optimization over cell-line episodes. Each epoch, every
/// episode starts from the shared node states, fits them for
/// `inner_iters` steps against its own observations, and contributes the
/// R/readout gradient at the fitted point. One averaged step on R and the
/// readout closes the epoch. The shared node states never change. With
/// `calibrate_thresholds`, per-drug thresholds are fitted on the same panel.
inline TrainReport train(const NetworkSkeleton& g, const CellLinePanel& panel, const TrainingConfig& cfg) {
  cfg.validate();
  if (g.size() == 0) throw Error(ErrorCode::EmptyOverlap, "graph is empty");
  const auto started = std::chrono::steady_clock::now();

  auto all_obs = panel_observations(panel, g);
  std::vector<CellObservations> episodes;
  for (auto& o : all_obs)
    if (!o.empty()) episodes.push_back(std::move(o));
  if (episodes.empty()) throw Error(ErrorCode::EmptyOverlap, "no cell line observes a node of the graph");
  std::sort(episodes.begin(), episodes.end(),
            [](const CellObservations& a, const CellObservations& b) { return a.cell_line < b.cell_line; });

  TrainReport report;
  report.config = cfg;
  report.episodes = episodes.size();
  report.params = init_params(g, cfg.dim, cfg.seed);
  ModelParams& params = report.params;
  const auto lr = node_learning_rates(g, cfg);
  Rng order_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<std::size_t> order(episodes.size());
  std::vector<detail::EpisodeResult> results(episodes.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    if (cfg.shuffle_cell_lines) order_rng.shuffle(order);

    const std::size_t workers = std::min(cfg.threads, episodes.size());
    if (workers <= 1) {
      for (std::size_t e = 0; e < episodes.size(); ++e)
        results[e] = detail::run_episode(params, g, episodes[order[e]], cfg, lr, epoch);
    } else {
      std::vector<std::thread> pool;
      std::vector<std::exception_ptr> errors(workers);
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t e = w; e < episodes.size(); e += workers)
              results[e] = detail::run_episode(params, g, episodes[order[e]], cfg, lr, epoch);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
      for (auto& t : pool) t.join();
      for (auto& err : errors)
        if (err) std::rethrow_exception(err);
    }

    // Reduce in episode order so serial and threaded runs agree bit for bit.
    Gradients sum = zeros_like(params);
    LossBreakdown mean;
    mean.beta = cfg.beta;
    for (const auto& r : results) {
      for (std::size_t j = 0; j < sum.R.size(); ++j) sum.R[j] += r.grad.R[j];
      for (std::size_t j = 0; j < sum.readout.W1.size(); ++j) sum.readout.W1[j] += r.grad.readout.W1[j];
      for (std::size_t h = 0; h < 2; ++h) {
        sum.readout.c1[h] += r.grad.readout.c1[h];
        sum.readout.w2[h] += r.grad.readout.w2[h];
      }
      sum.readout.c2 += r.grad.readout.c2;
      mean.l_gene += r.loss.l_gene;
      mean.l_chem += r.loss.l_chem;
    }
    const double n = static_cast<double>(results.size());
    mean.l_gene /= n;
    mean.l_chem /= n;
    mean.total = mean.l_gene + cfg.beta * mean.l_chem;
    if (!std::isfinite(mean.total))
      throw Error(ErrorCode::Diverged, "non-finite epoch loss at epoch " + std::to_string(epoch));
    report.trajectory.push_back(mean);

    const double step = cfg.lr_edge / n;
    for (std::size_t j = 0; j < params.R.size(); ++j) params.R[j] -= step * sum.R[j];
    for (std::size_t j = 0; j < params.readout.W1.size(); ++j) params.readout.W1[j] -= step * sum.readout.W1[j];
    for (std::size_t h = 0; h < 2; ++h) {
      params.readout.c1[h] -= step * sum.readout.c1[h];
      params.readout.w2[h] -= step * sum.readout.w2[h];
    }
    params.readout.c2 -= step * sum.readout.c2;
    if (!all_finite(params))
      throw Error(ErrorCode::Diverged, "non-finite parameter after structural step at epoch " + std::to_string(epoch));
  }

  if (cfg.calibrate_thresholds) report.thresholds = calibrate_thresholds(g, params, panel, cfg);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

// ---------------------------------------------------------------------------
// Prediction

struct Prediction {
  std::string cell_line;
  EntityId drug = 0;    // entity-table id
  EntityId node = 0;    // graph-local id
  double score = 0.0;
  double threshold = 0.5;
  bool call = false;
};

struct PredictionSet {
  std::vector<Prediction> items;
  std::size_t graph_nodes = 0;   // graph the scores were computed on
  std::size_t graph_edges = 0;
  std::string method = "relprop";
};

inline CellObservations gene_only(CellObservations obs) {
  obs.drugs.clear();
  return obs;
}

/// Fits node states to the cell line's gene observations with R and readout
/// frozen, then scores each requested drug node. A drug is called
/// sensitive when its score reaches its threshold: the calibrated per-drug
/// value when present, else `predict_threshold`.
inline PredictionSet predict(const NetworkSkeleton& g, const ModelParams& params, const CellObservations& genes,
                             const std::vector<EntityId>& drug_nodes, const TrainingConfig& cfg,
                             const DrugThresholds& thresholds = {}) {
  check_shape(params, g);
  for (EntityId d : drug_nodes)
    if (d >= g.size() || g.entities[d].kind != EntityKind::Chemical)
      throw Error(ErrorCode::UnknownDrug, "node " + std::to_string(d) + " is not a drug in the graph");
  const auto fitted = fit_states(params, g, gene_only(genes), cfg, node_learning_rates(g, cfg));
  PredictionSet out;
  out.graph_nodes = g.size();
  out.graph_edges = g.edges.size();
  for (EntityId d : drug_nodes) {
    Prediction p;
    p.cell_line = genes.cell_line;
    p.node = d;
    p.drug = g.origin[d];
    p.score = predict_node(fitted, g, d);
    auto it = thresholds.find(p.drug);
    p.threshold = it != thresholds.end() ? it->second : cfg.predict_threshold;
    p.call = p.score >= p.threshold;
    out.items.push_back(std::move(p));
  }
  return out;
}

/// Drug nodes of `g` that the panel measures, in panel column order.
inline std::vector<EntityId> panel_drug_nodes(const CellLinePanel& panel, const NetworkSkeleton& g) {
  std::map<EntityId, EntityId> local;
  for (EntityId i = 0; i < g.size(); ++i) local.emplace(g.origin[i], i);
  std::vector<EntityId> out;
  for (EntityId e : panel.drugs.entities) {
    auto it = local.find(e);
    if (it != local.end() && g.entities[it->second].kind == EntityKind::Chemical) out.push_back(it->second);
  }
  return out;
}

/// Predicts every panel drug present in the graph for every panel cell line.
inline PredictionSet predict_panel(const NetworkSkeleton& g, const ModelParams& params, const CellLinePanel& panel,
                                   const TrainingConfig& cfg, const DrugThresholds& thresholds = {}) {
  const auto drugs = panel_drug_nodes(panel, g);
  PredictionSet out;
  out.graph_nodes = g.size();
  out.graph_edges = g.edges.size();
  for (const auto& obs : panel_observations(panel, g)) {
    auto one = predict(g, params, obs, drugs, cfg, thresholds);
    for (auto& p : one.items) out.items.push_back(std::move(p));
  }
  return out;
}

/// Per-drug thresholds: the median score over the given cell lines where the
/// drug was measured, mirroring the median rule that defines the labels.
inline DrugThresholds calibrate_thresholds(const NetworkSkeleton& g, const ModelParams& params,
                                           const CellLinePanel& panel, const TrainingConfig& cfg) {
  const auto scores = predict_panel(g, params, panel, cfg);
  std::map<EntityId, std::vector<double>> by_drug;
  std::map<std::string, std::size_t> cell_index;
  for (std::size_t c = 0; c < panel.size(); ++c) cell_index.emplace(panel.cell_lines[c], c);
  for (const auto& p : scores.items) {
    auto col = panel.drugs.column(p.drug);
    if (col && panel.drugs.has(cell_index.at(p.cell_line), *col)) by_drug[p.drug].push_back(p.score);
  }
  DrugThresholds out;
  for (auto& [drug, xs] : by_drug) out[drug] = median(std::move(xs));
  return out;
}

// ---------------------------------------------------------------------------
// Explanation

struct Contribution {
  EntityId neighbor = 0;   // graph-local id
  std::vector<std::string> labels;
  std::vector<double> vector;   // (lambda / |N|) R v_j
  double norm = 0.0;
  double fraction = 0.0;        // norm over the sum of neighbor norms
};

struct Explanation {
  EntityId drug = 0;
  std::vector<Contribution> ranked;   // descending by norm, ties by neighbor id
  std::vector<double> bias;           // lambda b
  std::vector<double> estimate;       // propagate() output
};

/// Splits the drug's propagated embedding into per-neighbor terms plus the
/// bias term. `params` holds the node states fitted for one cell line.
inline Explanation explain(const NetworkSkeleton& g, const ModelParams& params, EntityId drug) {
  check_shape(params, g);
  if (drug >= g.size() || g.entities[drug].kind != EntityKind::Chemical)
    throw Error(ErrorCode::UnknownDrug, "node " + std::to_string(drug) + " is not a drug in the graph");
  const std::size_t k = params.dim;
  const double lam = params.states.lambda[drug];
  Explanation out;
  out.drug = drug;
  out.estimate = propagate(params, g, drug);
  out.bias.resize(k);
  for (std::size_t d = 0; d < k; ++d) out.bias[d] = lam * params.b(drug)[d];
  const auto& nbrs = g.adjacency[drug];
  double total = 0.0;
  for (const auto& nb : nbrs) {
    Contribution c;
    c.neighbor = nb.node;
    for (const auto& l : g.edges[nb.edge].labels) c.labels.push_back(l.relation);
    c.vector.assign(k, 0.0);
    detail::add_matvec(params.matrix(directed_index(g, nb.edge, drug)), params.v(nb.node),
                       lam / static_cast<double>(nbrs.size()), c.vector);
    double sq = 0.0;
    for (double x : c.vector) sq += x * x;
    c.norm = std::sqrt(sq);
    total += c.norm;
    out.ranked.push_back(std::move(c));
  }
  for (auto& c : out.ranked) c.fraction = total > 0 ? c.norm / total : 0.0;
  std::stable_sort(out.ranked.begin(), out.ranked.end(), [](const Contribution& a, const Contribution& b) {
    return a.norm != b.norm ? a.norm > b.norm : a.neighbor < b.neighbor;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Reports

inline void write_trajectory(std::ostream& os, const TrainReport& r) {
  os << "epoch\tl_gene\tl_chem\ttotal\n";
  for (std::size_t e = 0; e < r.trajectory.size(); ++e) {
    const auto& l = r.trajectory[e];
    os << e + 1 << '\t' << text::format_double(l.l_gene) << '\t' << text::format_double(l.l_chem) << '\t'
       << text::format_double(l.total) << '\n';
  }
}

inline void write_explanation(std::ostream& os, const NetworkSkeleton& g, const Explanation& ex) {
  os << "rank\tentity\tlabels\tcontribution\n";
  for (std::size_t r = 0; r < ex.ranked.size(); ++r) {
    const auto& c = ex.ranked[r];
    os << r + 1 << '\t' << g.entities[c.neighbor].canonical_name << '\t' << text::join(c.labels, ";") << '\t'
       << text::format_double(c.norm) << '\n';
  }
}

inline void write_predictions(std::ostream& os, const NetworkSkeleton& g, const PredictionSet& ps) {
  os << "# method=" << ps.method << " graph_nodes=" << ps.graph_nodes << " graph_edges=" << ps.graph_edges << '\n';
  os << "cell_line\tdrug_entity\tdrug\tscore\tthreshold\tcall\n";
  for (const auto& p : ps.items)
    os << p.cell_line << '\t' << p.drug << '\t' << g.entities[p.node].canonical_name << '\t'
       << text::format_double(p.score) << '\t' << text::format_double(p.threshold) << '\t' << (p.call ? 1 : 0)
       << '\n';
}

inline void write_thresholds(std::ostream& os, const DrugThresholds& t) {
  os << "drug_entity\tthreshold\n";
  for (const auto& [d, x] : t) os << d << '\t' << text::format_double(x) << '\n';
}

inline DrugThresholds read_thresholds(std::istream& in, const std::string& source = "<thresholds>") {
  DrugThresholds out;
  bool header = false;
  text::for_each_record(in, [&](std::size_t line, const auto& f) {
    if (!header) {
      header = true;
      return;
    }
    auto d = f.size() == 2 ? text::parse_int<EntityId>(f[0]) : std::nullopt;
    auto x = f.size() == 2 ? text::parse_double(f[1]) : std::nullopt;
    if (!d || !x) throw Error(ErrorCode::MalformedRow, "expected drug_entity\\tthreshold", source, line);
    out[*d] = *x;
  });
  return out;
}

}  // namespace relprop
