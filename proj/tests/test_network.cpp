#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace relprop;
using fixture::make_graph;

namespace {

constexpr auto G = EntityKind::Gene;
constexpr auto C = EntityKind::Chemical;

std::vector<Entity> entities(std::size_t n) {
  std::vector<Entity> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].id = static_cast<EntityId>(i);
    out[i].kind = i % 2 ? C : G;
    out[i].canonical_name = "e" + std::to_string(i);
    out[i].aliases = {{AliasScheme::Name, out[i].canonical_name}};
  }
  return out;
}

std::set<EntityId> ids(const Subgraph& s) { return {s.parent_ids.begin(), s.parent_ids.end()}; }

}  // namespace

TEST(BuildSkeleton, MergesLabelsOnOnePair) {
  auto b = build_skeleton({{"inhibitor", 0, 1, Provenance::Categorical, 1}, {"agonist", 1, 0, Provenance::Categorical, 1}},
                          entities(2));
  ASSERT_EQ(b.skeleton.edges.size(), 1u);
  EXPECT_EQ(b.skeleton.edges[0].labels.size(), 2u);
  EXPECT_EQ(b.self_loops, 0u);
}

TEST(BuildSkeleton, DropsSelfLoops) {
  auto b = build_skeleton({{"x", 0, 0, Provenance::Categorical, 1}}, entities(1));
  EXPECT_TRUE(b.skeleton.edges.empty());
  EXPECT_EQ(b.self_loops, 1u);
}

TEST(BuildSkeleton, RepeatedLabelsAccumulateWeight) {
  auto b = build_skeleton({{"x", 0, 1, Provenance::MetaPattern, 3}, {"x", 0, 1, Provenance::MetaPattern, 4},
                           {"x", 0, 1, Provenance::Categorical, 1}},
                          entities(2));
  ASSERT_EQ(b.skeleton.edges.size(), 1u);
  const auto& labels = b.skeleton.edges[0].labels;
  ASSERT_EQ(labels.size(), 2u);
  std::uint64_t meta = 0;
  for (const auto& l : labels)
    if (l.provenance == Provenance::MetaPattern) meta = l.weight;
  EXPECT_EQ(meta, 7u);
}

TEST(BuildSkeleton, InvariantsOnRandomPatterns) {
  Rng rng(11);
  std::vector<LinkedPattern> pats;
  for (int i = 0; i < 500; ++i)
    pats.push_back({"r" + std::to_string(rng.below(4)), static_cast<EntityId>(rng.below(40)),
                    static_cast<EntityId>(rng.below(40)), Provenance::Categorical, 1});
  auto g = build_skeleton(pats, entities(40)).skeleton;
  std::set<std::pair<EntityId, EntityId>> pairs;
  for (std::uint32_t e = 0; e < g.edges.size(); ++e) {
    const auto& edge = g.edges[e];
    EXPECT_LT(edge.a, edge.b);
    EXPECT_FALSE(edge.labels.empty());
    EXPECT_TRUE(pairs.emplace(edge.a, edge.b).second);
    auto has = [&](EntityId at, EntityId other) {
      for (const auto& nb : g.adjacency[at])
        if (nb.node == other && nb.edge == e) return true;
      return false;
    };
    EXPECT_TRUE(has(edge.a, edge.b));
    EXPECT_TRUE(has(edge.b, edge.a));
  }
  std::size_t adj = 0;
  for (const auto& a : g.adjacency) adj += a.size();
  EXPECT_EQ(adj, 2 * g.edges.size());
}

TEST(BuildSkeleton, PermutationInvariant) {
  Rng rng(5);
  std::vector<LinkedPattern> pats;
  for (int i = 0; i < 200; ++i)
    pats.push_back({"r" + std::to_string(rng.below(6)), static_cast<EntityId>(rng.below(30)),
                    static_cast<EntityId>(rng.below(30)), i % 3 ? Provenance::Categorical : Provenance::MetaPattern,
                    1 + rng.below(3)});
  auto a = build_skeleton(pats, entities(30)).skeleton;
  rng.shuffle(pats);
  auto b = build_skeleton(pats, entities(30)).skeleton;
  EXPECT_EQ(a, b);
  std::ostringstream ha, hb;
  write_histogram(ha, relation_histogram(a));
  write_histogram(hb, relation_histogram(b));
  EXPECT_EQ(ha.str(), hb.str());
}

TEST(SkeletonScale, CountsAndHistogram) {
  auto files = fixture::write_scale_fixture(fixture::temp_dir("network_scale"));
  auto link = link_entities(parse_interactions(files.interactions.string()),
                            parse_expression(files.expression.string()),
                            parse_sensitivity(files.sensitivity.string()));
  auto g = build_skeleton(link.patterns, link.entities).skeleton;
  EXPECT_EQ(g.count(EntityKind::Gene), 335u);
  EXPECT_EQ(g.count(EntityKind::Chemical), 587u);
  EXPECT_EQ(g.edges.size(), 3321u);

  auto h = relation_histogram(g, Provenance::Categorical);
  ASSERT_EQ(h.size(), 30u);
  EXPECT_EQ(h[0].label, "inhibitor");
  EXPECT_EQ(h[0].count, 9982u);
  EXPECT_NEAR(h[0].fraction, 0.4079, 1e-4);
  EXPECT_EQ(h[1].label, "agonist");
  EXPECT_EQ(h[1].count, 5333u);
  EXPECT_NEAR(h[1].fraction, 0.2179, 1e-4);
  double sum = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    sum += h[i].fraction;
    if (i) {
      EXPECT_GE(h[i - 1].count, h[i].count);
    }
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(RelationHistogram, EmptySkeleton) { EXPECT_TRUE(relation_histogram(NetworkSkeleton{}).empty()); }

TEST(Khop, PathExamples) {
  // O - a - b - c
  auto g = make_graph({G, C, G, C}, {true, false, false, false}, {{0, 1}, {1, 2}, {2, 3}});
  auto k1 = khop_subgraph(g, 1);
  EXPECT_EQ(ids(k1), (std::set<EntityId>{0, 1}));
  ASSERT_EQ(k1.skeleton.edges.size(), 1u);
  EXPECT_TRUE(k1.skeleton.entities[0].observable);
  auto k2 = khop_subgraph(g, 2);
  EXPECT_EQ(ids(k2), (std::set<EntityId>{0, 1, 2}));
  EXPECT_EQ(k2.skeleton.edges.size(), 2u);
}

TEST(Khop, RequiresObservables) {
  auto g = make_graph({G, C}, {false, false}, {{0, 1}});
  try {
    khop_subgraph(g, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoObservables);
  }
}

TEST(Khop, MatchesOracleOnRandomGraph) {
  Rng rng(2024);
  auto g = fixture::random_graph(rng, 200, 600, 20);
  ASSERT_EQ(g.edges.size(), 600u);
  ASSERT_EQ(g.observable_count(), 20u);
  for (std::size_t k = 1; k <= 3; ++k) EXPECT_EQ(ids(khop_subgraph(g, k)), oracle::khop(g, k)) << "k=" << k;
}

TEST(Khop, IdsAreDenseAndMapped) {
  Rng rng(8);
  auto g = fixture::random_graph(rng, 60, 90, 6);
  auto s = khop_subgraph(g, 1);
  for (EntityId i = 0; i < s.skeleton.size(); ++i) {
    EXPECT_EQ(s.skeleton.entities[i].id, i);
    EXPECT_EQ(s.skeleton.entities[i].canonical_name, g.entities[s.parent_ids[i]].canonical_name);
    EXPECT_EQ(s.skeleton.origin[i], g.origin[s.parent_ids[i]]);
  }
}

TEST(Prune, StarBecomesEmpty) {
  auto g = make_graph({C, G, G, G}, {true, false, false, false}, {{0, 1}, {0, 2}, {0, 3}});
  EXPECT_EQ(prune(g).skeleton.size(), 0u);
}

TEST(Prune, ChainUnchanged) {
  auto g = make_graph({G, C, G}, {true, false, true}, {{0, 1}, {1, 2}});
  auto p = prune(g);
  EXPECT_EQ(p.skeleton, g);
}

TEST(Prune, MatchesFixpointOracle) {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = fixture::random_graph(rng, 80, 70 + rng.below(60), 2 + rng.below(12));
    EXPECT_EQ(ids(prune(g)), oracle::prune(g)) << "trial " << trial;
  }
}

TEST(Prune, IdempotentAndDegreeAtLeastTwo) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = fixture::random_graph(rng, 60, 50 + rng.below(50), 1 + rng.below(10));
    auto once = prune(g).skeleton;
    EXPECT_EQ(prune(once).skeleton, once);
    for (EntityId i = 0; i < once.size(); ++i)
      if (!once.entities[i].observable) {
        EXPECT_GE(once.degree(i), 2u);
      }
  }
}

TEST(Dot, TwoNodesOneEdge) {
  auto g = make_graph({G, C}, {true, false}, {{0, 1}}, "inhibitor");
  std::ostringstream os;
  export_dot(os, g);
  const auto s = os.str();
  EXPECT_EQ(s.rfind("graph relprop {\n", 0), 0u);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 5);
  EXPECT_NE(s.find("n0 [label=\"100\", kind=\"Gene\", observable=true];"), std::string::npos);
  EXPECT_NE(s.find("n1 [label=\"n1\", kind=\"Chemical\", observable=false];"), std::string::npos);
  EXPECT_NE(s.find("n0 -- n1 [relations=\"inhibitor\"];"), std::string::npos);
  EXPECT_EQ(s.find("->"), std::string::npos);
}

TEST(Dot, EmptyGraph) {
  std::ostringstream os;
  export_dot(os, NetworkSkeleton{});
  EXPECT_EQ(os.str(), "graph relprop {\n}\n");
}

TEST(Dot, GeneLabeledByEntrez) {
  std::vector<Entity> es(2);
  es[0] = {0, G, "EGFR", {{AliasScheme::Entrez, "1956"}, {AliasScheme::Name, "EGFR"}}, true};
  es[1] = {1, C, "Gefitinib", {{AliasScheme::CID, "123631"}, {AliasScheme::Name, "Gefitinib"}}, true};
  auto g = build_skeleton({{"inhibitor", 0, 1, Provenance::Categorical, 1}}, es).skeleton;
  std::ostringstream os;
  export_dot(os, g);
  EXPECT_NE(os.str().find("label=\"1956\""), std::string::npos);
  EXPECT_NE(os.str().find("label=\"Gefitinib\""), std::string::npos);
}

TEST(GraphFile, RoundTrip) {
  Rng rng(12);
  auto g = prune(fixture::random_graph(rng, 50, 80, 10)).skeleton;
  std::ostringstream a;
  write_skeleton(a, g);
  std::istringstream in(a.str());
  auto back = read_skeleton(in);
  EXPECT_EQ(back, g);
  std::ostringstream b;
  write_skeleton(b, back);
  EXPECT_EQ(a.str(), b.str());
}
