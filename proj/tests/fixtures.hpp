#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "relprop/relprop.hpp"

namespace fixture {

using namespace relprop;
namespace fs = std::filesystem;

inline fs::path temp_dir(const std::string& name) {
  fs::path dir = fs::path(RELPROP_TEST_TMP) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  out << body;
}

/// Graph from explicit node kinds, observable flags and undirected edges.
inline NetworkSkeleton make_graph(const std::vector<EntityKind>& kinds, const std::vector<bool>& observable,
                                  const std::vector<std::pair<EntityId, EntityId>>& edges,
                                  const std::string& label = "rel") {
  std::vector<Entity> entities(kinds.size());
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    entities[i].id = static_cast<EntityId>(i);
    entities[i].kind = kinds[i];
    entities[i].canonical_name = "n" + std::to_string(i);
    entities[i].aliases = {{AliasScheme::Name, entities[i].canonical_name}};
    if (kinds[i] == EntityKind::Gene) entities[i].aliases.insert({AliasScheme::Entrez, std::to_string(100 + i)});
    entities[i].observable = observable[i];
  }
  std::vector<LinkedPattern> patterns;
  for (auto [a, b] : edges) patterns.push_back({label, a, b, Provenance::Categorical, 1});
  return build_skeleton(patterns, entities).skeleton;
}

/// n nodes, up to m distinct random edges, the first n_obs nodes observable.
/// Kinds alternate gene / chemical with every fifth node a disease.
inline NetworkSkeleton random_graph(Rng& rng, std::size_t n, std::size_t m, std::size_t n_obs) {
  std::vector<EntityKind> kinds(n);
  std::vector<bool> obs(n);
  for (std::size_t i = 0; i < n; ++i) {
    kinds[i] = i % 5 == 4 ? EntityKind::Disease : (i % 2 ? EntityKind::Chemical : EntityKind::Gene);
    obs[i] = i < n_obs;
  }
  std::set<std::pair<EntityId, EntityId>> seen;
  const std::size_t max_edges = n * (n - 1) / 2;
  while (seen.size() < std::min(m, max_edges)) {
    auto a = static_cast<EntityId>(rng.below(n));
    auto b = static_cast<EntityId>(rng.below(n));
    if (a == b) continue;
    seen.emplace(std::min(a, b), std::max(a, b));
  }
  // Shuffle observability so observables are not clustered by id.
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  rng.shuffle(perm);
  std::vector<bool> shuffled(n);
  for (std::size_t i = 0; i < n; ++i) shuffled[perm[i]] = obs[i];
  return make_graph(kinds, shuffled, {seen.begin(), seen.end()});
}

/// Random observations on a subset of gene and chemical nodes.
inline CellObservations random_observations(Rng& rng, const NetworkSkeleton& g, double keep = 0.6) {
  CellObservations obs;
  obs.cell_line = "cl";
  for (EntityId i = 0; i < g.size(); ++i) {
    if (rng.uniform01() >= keep) continue;
    if (g.entities[i].kind == EntityKind::Gene) obs.genes.push_back({i, rng.uniform01()});
    else if (g.entities[i].kind == EntityKind::Chemical) obs.drugs.push_back({i, rng.uniform01()});
  }
  if (obs.genes.empty()) {
    for (EntityId i = 0; i < g.size(); ++i)
      if (g.entities[i].kind == EntityKind::Gene) {
        obs.genes.push_back({i, 0.25});
        break;
      }
  }
  return obs;
}

/// Params with every coordinate random, so no gradient vanishes by symmetry.
inline ModelParams random_params(Rng& rng, const NetworkSkeleton& g, std::size_t k) {
  ModelParams p = zero_params(g, k);
  for (double& x : p.states.v) x = rng.uniform(-1, 1);
  for (double& x : p.states.b) x = rng.uniform(-0.5, 0.5);
  for (double& x : p.states.lambda) x = rng.uniform(0.5, 1.5);
  for (double& x : p.R) x = rng.uniform(-1, 1);
  for (double& x : p.readout.W1) x = rng.uniform(-1, 1);
  for (double& x : p.readout.c1) x = rng.uniform(-0.5, 0.5);
  for (double& x : p.readout.w2) x = rng.uniform(-1, 1);
  p.readout.c2 = rng.uniform(-0.5, 0.5);
  return p;
}

// ---------------------------------------------------------------------------
// Skeleton-scale fixture: 335 genes, 587 drugs, 3321 gene-drug pairs and
// 24472 categorical interaction rows over 30 labels, with inhibitor on 9982
// rows and agonist on 5333.

constexpr std::size_t kScaleGenes = 335;
constexpr std::size_t kScaleDrugs = 587;
constexpr std::size_t kScalePairs = 3321;
constexpr std::size_t kScaleRows = 24472;
constexpr std::size_t kScaleInhibitor = 9982;
constexpr std::size_t kScaleAgonist = 5333;

inline std::string scale_label(std::size_t row) {
  if (row < kScaleInhibitor) return "inhibitor";
  if (row < kScaleInhibitor + kScaleAgonist) return "agonist";
  return "label" + std::to_string((row - kScaleInhibitor - kScaleAgonist) % 28 + 3);
}

struct InputFiles {
  fs::path interactions, metapatterns, expression, sensitivity;
};

inline InputFiles write_scale_fixture(const fs::path& dir) {
  InputFiles f{dir / "interactions.tsv", dir / "metapatterns.tsv", dir / "expression.tsv", dir / "sensitivity.tsv"};
  {
    std::ofstream os(f.interactions, std::ios::binary);
    os << "gene_name\tgene_entrez\tinteraction\tdrug_name\tdrug_cid\tsource\n";
    for (std::size_t r = 0; r < kScaleRows; ++r) {
      // Pair p uses gene p mod 335 and drug p mod 587; 335 and 587 are
      // coprime and 3321 < 335 * 587, so the pairs are distinct.
      const std::size_t p = r % kScalePairs;
      const std::size_t gene = p % kScaleGenes, drug = p % kScaleDrugs;
      os << "GENE" << gene << '\t' << 10000 + gene << '\t' << scale_label(r) << "\tDrug-" << drug << '\t'
         << 500000 + drug << "\tfixture\n";
    }
  }
  spit(f.metapatterns, "pattern\te1_kind\te1_id\te1_name\te2_kind\te2_id\te2_name\tcount\n");
  {
    std::ofstream os(f.expression, std::ios::binary);
    os << "entrez\tgene_name";
    for (int c = 0; c < 6; ++c) os << "\tCL-" << c;
    os << '\n';
    for (std::size_t gene = 0; gene < 21; ++gene) {
      os << 10000 + gene << "\tgene" << gene;
      for (int c = 0; c < 6; ++c) {
        if ((gene + c) % 7 == 0) os << '\t';
        else os << '\t' << (gene * 3 + c * 5) % 17 + 0.5;
      }
      os << '\n';
    }
  }
  {
    std::ofstream os(f.sensitivity, std::ios::binary);
    os << "cell_line\tdrug_name\tdrug_cid\tintensity\n";
    for (int c = 0; c < 6; ++c)
      for (std::size_t drug = 0; drug < 7; ++drug)
        os << "cl_" << c << "\tdrug " << drug << '\t' << 500000 + drug << '\t' << (drug * 7 + c * 3) % 11 + 0.25
           << '\n';
  }
  return f;
}

}  // namespace fixture
