#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "relprop/entity.hpp"
#include "relprop/error.hpp"
#include "relprop/ingest.hpp"
#include "relprop/model.hpp"
#include "relprop/network.hpp"
#include "relprop/rng.hpp"
#include "relprop/text.hpp"

namespace relprop {

struct SynthConfig {
  std::size_t n_genes = 21;
  std::size_t n_drugs = 7;
  double edge_prob = 0.3;        // gene-drug
  double gene_edge_prob = 0.15;  // gene-gene
  std::size_t k = 4;
  std::size_t n_cell_lines = 40;
  double noise_sigma = 0.02;
  std::uint64_t seed = 42;
  double readout_scale = 3.0;    // planted W1, w2 ~ U(-s, s)
  double latent_jitter = 0.1;    // per-node spread around the cell-line factor
  double min_output_range = 0.3;  // planted readout must span this along s * a, s in [-1, 1]

  void validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
    if (n_genes < 1 || n_drugs < 1 || n_cell_lines < 1) fail("synth counts must be >= 1");
    if (!(edge_prob > 0 && edge_prob <= 1)) fail("edge_prob must lie in (0, 1]");
    if (!(gene_edge_prob >= 0 && gene_edge_prob <= 1)) fail("gene_edge_prob must lie in [0, 1]");
    if (k < 1) fail("k must be >= 1");
    if (!(noise_sigma >= 0)) fail("noise_sigma must be >= 0");
    if (!(readout_scale > 0)) fail("readout_scale must be > 0");
    if (!(latent_jitter >= 0)) fail("latent_jitter must be >= 0");
    if (!(min_output_range >= 0 && min_output_range < 1)) fail("min_output_range must lie in [0, 1)");
  }
};

struct SynthDataset {
  NetworkSkeleton graph;            // genes are nodes [0, n_genes), drugs follow
  CellLinePanel panel;
  ModelParams planted;              // shared R and readout; states from cell line 0
  std::vector<NodeStates> cell_states;
  std::vector<LinkedPattern> patterns;
};

namespace detail {

inline const std::vector<std::string>& synth_labels() {
  static const std::vector<std::string> labels = {"inhibitor", "agonist", "antagonist", "binder", "modulator"};
  return labels;
}

inline std::string synth_gene_name(std::size_t i) { return "SG" + std::to_string(i + 1); }
inline std::string synth_gene_id(std::size_t i) { return std::to_string(90001 + i); }
inline std::string synth_drug_name(std::size_t i) { return "Synthdrug" + std::to_string(i + 1); }
inline std::string synth_drug_id(std::size_t i) { return std::to_string(7000001 + i); }
// max - min of the readout over x = s * a on an even grid of s in [-1, 1].
inline double readout_range(const Readout& r, const std::vector<double>& a) {
  double lo = 1.0, hi = 0.0;
  std::vector<double> x(a.size());
  for (int step = 0; step <= 40; ++step) {
    const double s = -1.0 + step / 20.0;
    for (std::size_t t = 0; t < a.size(); ++t) x[t] = s * a[t];
    const double u = readout(r, x);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  return hi - lo;
}

inline std::string synth_cell_name(std::size_t c) {
  std::string n = std::to_string(c + 1);
  return "SYN" + std::string(n.size() < 3 ? 3 - n.size() : 0, '0') + n;
}

}  // namespace detail

/// Planted-model dataset. Every cell line shares R and the readout; node
/// states are v = s_c * a + U(-jitter, jitter) for a cell-line factor
/// s_c ~ U(-1, 1) and a shared direction a ~ U(-1, 1)^k, with b = 0 and
/// lambda = 1. The readout and a are redrawn until the noiseless readout
/// spans min_output_range along s * a. Gene and drug observations are the
/// planted prediction at that node plus N(0, sigma) noise, clipped to [0, 1].
inline SynthDataset generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  // Noise has its own stream so datasets that differ only in sigma share
  // graph, planted parameters and latent states.
  Rng noise_rng(rng.next());
  const std::size_t ng = cfg.n_genes, nd = cfg.n_drugs, n = ng + nd;

  std::vector<Entity> entities(n);
  for (std::size_t i = 0; i < n; ++i) {
    Entity& e = entities[i];
    e.id = static_cast<EntityId>(i);
    e.observable = true;
    if (i < ng) {
      e.kind = EntityKind::Gene;
      e.canonical_name = detail::synth_gene_name(i);
      e.aliases = {{AliasScheme::Entrez, detail::synth_gene_id(i)}, {AliasScheme::Name, e.canonical_name}};
    } else {
      e.kind = EntityKind::Chemical;
      e.canonical_name = detail::synth_drug_name(i - ng);
      e.aliases = {{AliasScheme::CID, detail::synth_drug_id(i - ng)}, {AliasScheme::Name, e.canonical_name}};
    }
  }

  std::set<std::pair<EntityId, EntityId>> pairs;
  for (std::size_t gi = 0; gi < ng; ++gi)
    for (std::size_t d = 0; d < nd; ++d)
      if (rng.uniform01() < cfg.edge_prob) pairs.emplace(gi, ng + d);
  for (std::size_t a = 0; a < ng; ++a)
    for (std::size_t b = a + 1; b < ng; ++b)
      if (rng.uniform01() < cfg.gene_edge_prob) pairs.emplace(a, b);
  for (std::size_t i = 1; i < n; ++i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    pairs.emplace(std::min(i, j), std::max(i, j));
  }

  SynthDataset out;
  const auto& labels = detail::synth_labels();
  for (auto [a, b] : pairs) {
    LinkedPattern p;
    p.src = a;
    p.dst = b;
    if (a < ng && b >= ng) {
      p.relation_label = labels[rng.below(labels.size())];
      p.provenance = Provenance::Categorical;
    } else {
      p.relation_label = b < ng ? "$GENE co-expressed with $GENE" : "$CHEM combined with $CHEM";
      p.provenance = Provenance::MetaPattern;
      p.weight = 1 + rng.below(5);
    }
    out.patterns.push_back(std::move(p));
  }
  out.graph = build_skeleton(out.patterns, entities).skeleton;
  const auto& g = out.graph;
  bool any_drug_edge = false;
  for (std::size_t d = ng; d < n; ++d) any_drug_edge = any_drug_edge || g.degree(static_cast<EntityId>(d)) > 0;
  if (!any_drug_edge) throw Error(ErrorCode::DegenerateGraph, "every drug is isolated");

  out.planted = init_params(g, cfg.k, rng.next());
  std::vector<double> direction(cfg.k);
  for (int attempt = 0;; ++attempt) {
    if (attempt == 10000)
      throw Error(ErrorCode::InvalidArgument, "no planted readout reaches min_output_range");
    for (double& x : out.planted.readout.W1) x = rng.uniform(-cfg.readout_scale, cfg.readout_scale);
    for (double& x : out.planted.readout.w2) x = rng.uniform(-cfg.readout_scale, cfg.readout_scale);
    for (double& x : direction) x = rng.uniform(-1.0, 1.0);
    if (detail::readout_range(out.planted.readout, direction) >= cfg.min_output_range) break;
  }

  auto& panel = out.panel;
  for (std::size_t i = 0; i < ng; ++i) panel.genes.entities.push_back(static_cast<EntityId>(i));
  for (std::size_t i = ng; i < n; ++i) panel.drugs.entities.push_back(static_cast<EntityId>(i));
  ModelParams cell = out.planted;
  for (std::size_t c = 0; c < cfg.n_cell_lines; ++c) {
    panel.cell_lines.push_back(detail::synth_cell_name(c));
    const double s = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < cfg.k; ++t)
        cell.states.v[i * cfg.k + t] = s * direction[t] + rng.uniform(-cfg.latent_jitter, cfg.latent_jitter);
    out.cell_states.push_back(cell.states);
    for (std::size_t i = 0; i < n; ++i) {
      double y = predict_node(cell, g, static_cast<EntityId>(i));
      if (cfg.noise_sigma > 0) y += noise_rng.normal(0.0, cfg.noise_sigma);
      y = std::clamp(y, 0.0, 1.0);
      auto& block = i < ng ? panel.genes : panel.drugs;
      block.values.push_back(y);
      block.present.push_back(1);
    }
  }
  assign_median_labels(panel);
  out.planted.states = out.cell_states.front();
  return out;
}

/// Planted params with the states of cell line c.
inline ModelParams planted_for_cell(const SynthDataset& ds, std::size_t c) {
  ModelParams p = ds.planted;
  p.states = ds.cell_states.at(c);
  return p;
}

// ---------------------------------------------------------------------------
// Ingest-format output

struct SynthFiles {
  std::filesystem::path interactions, metapatterns, expression, sensitivity;
};

/// Gene-drug categorical edges go to interactions.tsv; every other edge
/// is a meta-pattern row. Expression is written as TPM = expm1(value), so
/// log1p recovers the planted observation before min-max scaling.
inline void write_synth_interactions(std::ostream& os, const SynthDataset& ds) {
  os << "gene_name\tgene_entrez\tinteraction\tdrug_name\tdrug_cid\tsource\n";
  const auto& e = ds.graph.entities;
  for (const auto& p : ds.patterns) {
    if (p.provenance != Provenance::Categorical) continue;
    os << e[p.src].canonical_name << '\t' << *e[p.src].alias(AliasScheme::Entrez) << '\t' << p.relation_label << '\t'
       << e[p.dst].canonical_name << '\t' << *e[p.dst].alias(AliasScheme::CID) << "\tsynth\n";
  }
}

inline void write_synth_metapatterns(std::ostream& os, const SynthDataset& ds) {
  os << "pattern\te1_kind\te1_id\te1_name\te2_kind\te2_id\te2_name\tcount\n";
  const auto& e = ds.graph.entities;
  auto id = [](const Entity& x) {
    return *x.alias(x.kind == EntityKind::Gene ? AliasScheme::Entrez : AliasScheme::CID);
  };
  for (const auto& p : ds.patterns) {
    if (p.provenance != Provenance::MetaPattern) continue;
    const Entity& a = e[p.src];
    const Entity& b = e[p.dst];
    os << p.relation_label << '\t' << to_string(a.kind) << '\t' << id(a) << '\t' << a.canonical_name << '\t'
       << to_string(b.kind) << '\t' << id(b) << '\t' << b.canonical_name << '\t' << p.weight << '\n';
  }
}

inline void write_synth_expression(std::ostream& os, const SynthDataset& ds) {
  const auto& panel = ds.panel;
  os << "entrez\tgene_name";
  for (const auto& c : panel.cell_lines) os << '\t' << c;
  os << '\n';
  for (std::size_t j = 0; j < panel.genes.width(); ++j) {
    const Entity& e = ds.graph.entities[panel.genes.entities[j]];
    os << *e.alias(AliasScheme::Entrez) << '\t' << e.canonical_name;
    for (std::size_t c = 0; c < panel.size(); ++c) os << '\t' << text::format_double(std::expm1(panel.genes.at(c, j)));
    os << '\n';
  }
}

inline void write_synth_sensitivity(std::ostream& os, const SynthDataset& ds) {
  const auto& panel = ds.panel;
  os << "cell_line\tdrug_name\tdrug_cid\tintensity\n";
  for (std::size_t c = 0; c < panel.size(); ++c)
    for (std::size_t j = 0; j < panel.drugs.width(); ++j) {
      const Entity& e = ds.graph.entities[panel.drugs.entities[j]];
      os << panel.cell_lines[c] << '\t' << e.canonical_name << '\t' << *e.alias(AliasScheme::CID) << '\t'
         << text::format_double(panel.drugs.at(c, j)) << '\n';
    }
}

inline SynthFiles write_synth_files(const SynthDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  SynthFiles f{dir / "interactions.tsv", dir / "metapatterns.tsv", dir / "expression.tsv", dir / "sensitivity.tsv"};
  {
    auto os = text::open_output(f.interactions);
    write_synth_interactions(os, ds);
  }
  {
    auto os = text::open_output(f.metapatterns);
    write_synth_metapatterns(os, ds);
  }
  {
    auto os = text::open_output(f.expression);
    write_synth_expression(os, ds);
  }
  {
    auto os = text::open_output(f.sensitivity);
    write_synth_sensitivity(os, ds);
  }
  return f;
}

}  // namespace relprop
