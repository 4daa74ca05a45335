#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "relprop/entity.hpp"
#include "relprop/error.hpp"
#include "relprop/ingest.hpp"
#include "relprop/text.hpp"

namespace relprop {

struct EdgeLabel {
  std::string relation;
  Provenance provenance = Provenance::Categorical;
  std::uint64_t weight = 1;

  bool operator==(const EdgeLabel&) const = default;
};

/// Undirected edge, endpoints stored with a < b.
struct Edge {
  EntityId a = 0;
  EntityId b = 0;
  std::vector<EdgeLabel> labels;   // sorted by (relation, provenance)

  EntityId other(EntityId x) const { return x == a ? b : a; }
  bool operator==(const Edge&) const = default;
};

struct Neighbor {
  EntityId node = 0;
  std::uint32_t edge = 0;

  bool operator==(const Neighbor&) const = default;
};

struct NetworkSkeleton {
  std::vector<Entity> entities;                 // entities[i].id == i
  std::vector<EntityId> origin;                 // id in the entity table the skeleton was built from
  std::vector<Edge> edges;
  std::vector<std::vector<Neighbor>> adjacency;

  std::size_t size() const { return entities.size(); }
  std::size_t degree(EntityId i) const { return adjacency[i].size(); }

  std::size_t count(EntityKind kind) const {
    return static_cast<std::size_t>(std::count_if(entities.begin(), entities.end(),
                                                  [&](const Entity& e) { return e.kind == kind; }));
  }
  std::size_t observable_count() const {
    return static_cast<std::size_t>(std::count_if(entities.begin(), entities.end(),
                                                  [](const Entity& e) { return e.observable; }));
  }
  /// Local id of the node built from entity-table id `id`.
  std::optional<EntityId> local_id(EntityId id) const {
    for (EntityId i = 0; i < origin.size(); ++i)
      if (origin[i] == id) return i;
    return std::nullopt;
  }

  bool operator==(const NetworkSkeleton&) const = default;
};

/// Recomputes adjacency from the edge list; neighbor order follows edge order.
inline void rebuild_adjacency(NetworkSkeleton& g) {
  g.adjacency.assign(g.size(), {});
  for (std::uint32_t e = 0; e < g.edges.size(); ++e) {
    g.adjacency[g.edges[e].a].push_back({g.edges[e].b, e});
    g.adjacency[g.edges[e].b].push_back({g.edges[e].a, e});
  }
}

struct SkeletonBuild {
  NetworkSkeleton skeleton;
  std::size_t self_loops = 0;
};

/// One edge per unordered entity pair carrying every label seen for it.
/// Repeated (relation, provenance) labels on a pair accumulate weight.
inline SkeletonBuild build_skeleton(const std::vector<LinkedPattern>& patterns,
                                    const std::vector<Entity>& entities) {
  SkeletonBuild out;
  auto& g = out.skeleton;
  g.entities = entities;
  g.origin.resize(entities.size());
  for (EntityId i = 0; i < entities.size(); ++i) {
    g.entities[i].id = i;
    g.origin[i] = entities[i].id;
  }
  std::map<std::pair<EntityId, EntityId>, std::map<std::pair<std::string, Provenance>, std::uint64_t>> pairs;
  for (const auto& p : patterns) {
    if (p.src >= entities.size() || p.dst >= entities.size())
      throw Error(ErrorCode::InvalidArgument, "pattern references unknown entity");
    if (p.src == p.dst) {
      ++out.self_loops;
      continue;
    }
    auto key = std::minmax(p.src, p.dst);
    pairs[{key.first, key.second}][{p.relation_label, p.provenance}] += p.weight;
  }
  for (const auto& [ends, labels] : pairs) {
    Edge e{ends.first, ends.second, {}};
    for (const auto& [lp, w] : labels) e.labels.push_back({lp.first, lp.second, w});
    g.edges.push_back(std::move(e));
  }
  rebuild_adjacency(g);
  return out;
}

struct RelationCount {
  std::string label;
  std::uint64_t count = 0;
  double fraction = 0.0;
};

/// Label occurrences (summed weights) over all edges, descending by count,
/// ties by label. Restrict to one provenance with `only`.
inline std::vector<RelationCount> relation_histogram(const NetworkSkeleton& g,
                                                     std::optional<Provenance> only = std::nullopt) {
  std::map<std::string, std::uint64_t> counts;
  std::uint64_t total = 0;
  for (const auto& e : g.edges)
    for (const auto& l : e.labels) {
      if (only && l.provenance != *only) continue;
      counts[l.relation] += l.weight;
      total += l.weight;
    }
  std::vector<RelationCount> out;
  for (const auto& [label, c] : counts)
    out.push_back({label, c, static_cast<double>(c) / static_cast<double>(total)});
  std::stable_sort(out.begin(), out.end(),
                   [](const RelationCount& x, const RelationCount& y) { return x.count > y.count; });
  return out;
}

/// Number of distinct entity pairs carrying each label.
inline std::vector<RelationCount> relation_pair_counts(const NetworkSkeleton& g,
                                                       std::optional<Provenance> only = std::nullopt) {
  std::map<std::string, std::uint64_t> counts;
  std::uint64_t total = 0;
  for (const auto& e : g.edges) {
    std::set<std::string> seen;
    for (const auto& l : e.labels) {
      if (only && l.provenance != *only) continue;
      if (seen.insert(l.relation).second) {
        ++counts[l.relation];
        ++total;
      }
    }
  }
  std::vector<RelationCount> out;
  for (const auto& [label, c] : counts)
    out.push_back({label, c, static_cast<double>(c) / static_cast<double>(total)});
  std::stable_sort(out.begin(), out.end(),
                   [](const RelationCount& x, const RelationCount& y) { return x.count > y.count; });
  return out;
}

inline void write_histogram(std::ostream& os, const std::vector<RelationCount>& h) {
  os << "label\tcount\tfraction\n";
  for (const auto& r : h) os << r.label << '\t' << r.count << '\t' << text::format_double(r.fraction) << '\n';
}

/// A derived graph together with the id each node had in its parent graph.
struct Subgraph {
  NetworkSkeleton skeleton;
  std::vector<EntityId> parent_ids;
};

inline Subgraph induced_subgraph(const NetworkSkeleton& g, const std::vector<std::uint8_t>& keep) {
  Subgraph out;
  std::vector<std::optional<EntityId>> remap(g.size());
  for (EntityId i = 0; i < g.size(); ++i) {
    if (!keep[i]) continue;
    remap[i] = static_cast<EntityId>(out.parent_ids.size());
    out.parent_ids.push_back(i);
    Entity e = g.entities[i];
    e.id = *remap[i];
    out.skeleton.entities.push_back(std::move(e));
    out.skeleton.origin.push_back(g.origin[i]);
  }
  for (const auto& e : g.edges) {
    if (!remap[e.a] || !remap[e.b]) continue;
    out.skeleton.edges.push_back({*remap[e.a], *remap[e.b], e.labels});
  }
  rebuild_adjacency(out.skeleton);
  return out;
}

/// Multi-source BFS distances from every observable node.
inline std::vector<std::size_t> distance_to_observables(const NetworkSkeleton& g) {
  constexpr auto unreached = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> dist(g.size(), unreached);
  std::deque<EntityId> queue;
  for (EntityId i = 0; i < g.size(); ++i)
    if (g.entities[i].observable) {
      dist[i] = 0;
      queue.push_back(i);
    }
  while (!queue.empty()) {
    EntityId u = queue.front();
    queue.pop_front();
    for (const auto& nb : g.adjacency[u])
      if (dist[nb.node] == unreached) {
        dist[nb.node] = dist[u] + 1;
        queue.push_back(nb.node);
      }
  }
  return dist;
}

/// Induced subgraph on nodes within `k` hops of an observable node.
inline Subgraph khop_subgraph(const NetworkSkeleton& g, std::size_t k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (g.observable_count() == 0) throw Error(ErrorCode::NoObservables, "graph has no observable entity");
  auto dist = distance_to_observables(g);
  std::vector<std::uint8_t> keep(g.size());
  for (EntityId i = 0; i < g.size(); ++i) keep[i] = dist[i] <= k ? 1 : 0;
  return induced_subgraph(g, keep);
}

/// Peels unobserved nodes of degree <= 1 to a fixpoint, then drops every
/// connected component holding fewer than two observable nodes.
inline Subgraph prune(const NetworkSkeleton& g) {
  const std::size_t n = g.size();
  std::vector<std::uint8_t> alive(n, 1);
  std::vector<std::size_t> degree(n);
  std::deque<EntityId> queue;
  for (EntityId i = 0; i < n; ++i) {
    degree[i] = g.degree(i);
    if (!g.entities[i].observable && degree[i] <= 1) queue.push_back(i);
  }
  while (!queue.empty()) {
    EntityId u = queue.front();
    queue.pop_front();
    if (!alive[u]) continue;
    alive[u] = 0;
    for (const auto& nb : g.adjacency[u]) {
      if (!alive[nb.node]) continue;
      if (--degree[nb.node] <= 1 && !g.entities[nb.node].observable) queue.push_back(nb.node);
    }
  }

  std::vector<std::uint8_t> seen(n, 0);
  for (EntityId s = 0; s < n; ++s) {
    if (!alive[s] || seen[s]) continue;
    std::vector<EntityId> component{s};
    seen[s] = 1;
    std::size_t observed = 0;
    for (std::size_t h = 0; h < component.size(); ++h) {
      EntityId u = component[h];
      if (g.entities[u].observable) ++observed;
      for (const auto& nb : g.adjacency[u])
        if (alive[nb.node] && !seen[nb.node]) {
          seen[nb.node] = 1;
          component.push_back(nb.node);
        }
    }
    if (observed < 2)
      for (EntityId u : component) alive[u] = 0;
  }
  return induced_subgraph(g, alive);
}

namespace detail {

inline std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

}  // namespace detail

/// Undirected DOT. Genes are labeled by Entrez id when they have one,
/// everything else by canonical name.
inline void export_dot(std::ostream& os, const NetworkSkeleton& g) {
  os << "graph relprop {\n";
  for (const auto& e : g.entities) {
    std::string label = e.canonical_name;
    if (e.kind == EntityKind::Gene)
      if (auto entrez = e.alias(AliasScheme::Entrez)) label = *entrez;
    os << "  n" << e.id << " [label=\"" << detail::dot_escape(label) << "\", kind=\"" << to_string(e.kind)
       << "\", observable=" << (e.observable ? "true" : "false") << "];\n";
  }
  for (const auto& e : g.edges) {
    std::vector<std::string> labels;
    for (const auto& l : e.labels) labels.push_back(l.relation);
    os << "  n" << e.a << " -- n" << e.b << " [relations=\"" << detail::dot_escape(text::join(labels, ";"))
       << "\"];\n";
  }
  os << "}\n";
}

inline void export_dot(const NetworkSkeleton& g, const std::string& path) {
  auto out = text::open_output(path);
  export_dot(out, g);
  if (!out) throw Error(ErrorCode::Io, "write failed", path);
}

// ---------------------------------------------------------------------------
// Graph file
//
//   relprop-graph v1 nodes=<n> edges=<m>
//   N <id> <origin> <kind> <observable 0|1> <canonical name>
//   A <id> <scheme> <value>
//   E <edge> <a> <b>
//   L <edge> <relation> <provenance> <weight>

inline void write_skeleton(std::ostream& os, const NetworkSkeleton& g) {
  os << "relprop-graph v1 nodes=" << g.size() << " edges=" << g.edges.size() << '\n';
  for (const auto& e : g.entities) {
    os << "N\t" << e.id << '\t' << g.origin[e.id] << '\t' << to_string(e.kind) << '\t' << (e.observable ? 1 : 0)
       << '\t' << e.canonical_name << '\n';
    for (const auto& a : e.aliases) os << "A\t" << e.id << '\t' << to_string(a.scheme) << '\t' << a.value << '\n';
  }
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    const auto& e = g.edges[i];
    os << "E\t" << i << '\t' << e.a << '\t' << e.b << '\n';
    for (const auto& l : e.labels)
      os << "L\t" << i << '\t' << l.relation << '\t' << to_string(l.provenance) << '\t' << l.weight << '\n';
  }
}

inline NetworkSkeleton read_skeleton(std::istream& in, const std::string& source = "<graph>") {
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("relprop-graph v1"))
    throw Error(ErrorCode::MalformedRow, "expected relprop-graph v1 header", source, 1);
  NetworkSkeleton g;
  std::size_t line_no = 1;
  auto bad = [&](const std::string& what) { return Error(ErrorCode::MalformedRow, what, source, line_no); };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    auto f = text::split_tabs(line);
    if (f[0] == "N" && f.size() == 6) {
      auto id = text::parse_int<EntityId>(f[1]);
      auto origin = text::parse_int<EntityId>(f[2]);
      auto kind = parse_kind(f[3]);
      if (!id || !origin || !kind || *id != g.size() || (f[4] != "0" && f[4] != "1")) throw bad("bad node record");
      Entity e;
      e.id = *id;
      e.kind = *kind;
      e.observable = f[4] == "1";
      e.canonical_name = std::string(f[5]);
      g.entities.push_back(std::move(e));
      g.origin.push_back(*origin);
    } else if (f[0] == "A" && f.size() == 4) {
      auto id = text::parse_int<EntityId>(f[1]);
      auto scheme = parse_scheme(f[2]);
      if (!id || !scheme || *id >= g.size()) throw bad("bad alias record");
      g.entities[*id].aliases.insert({*scheme, std::string(f[3])});
    } else if (f[0] == "E" && f.size() == 4) {
      auto idx = text::parse_int<std::size_t>(f[1]);
      auto a = text::parse_int<EntityId>(f[2]);
      auto b = text::parse_int<EntityId>(f[3]);
      if (!idx || !a || !b || *idx != g.edges.size() || *a >= *b || *b >= g.size()) throw bad("bad edge record");
      g.edges.push_back({*a, *b, {}});
    } else if (f[0] == "L" && f.size() == 5) {
      auto idx = text::parse_int<std::size_t>(f[1]);
      auto prov = parse_provenance(f[3]);
      auto w = text::parse_int<std::uint64_t>(f[4]);
      if (!idx || !prov || !w || *idx >= g.edges.size()) throw bad("bad label record");
      g.edges[*idx].labels.push_back({std::string(f[2]), *prov, *w});
    } else {
      throw bad("unknown record");
    }
  }
  for (const auto& e : g.edges)
    if (e.labels.empty()) throw Error(ErrorCode::MalformedRow, "edge without labels", source);
  rebuild_adjacency(g);
  return g;
}

}  // namespace relprop
