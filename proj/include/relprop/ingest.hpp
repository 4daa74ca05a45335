#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "relprop/entity.hpp"
#include "relprop/error.hpp"
#include "relprop/text.hpp"

namespace relprop {

// ---------------------------------------------------------------------------
// Raw records

/// One (relation, entity, entity) tuple as read from a source file.
struct RawPattern {
  std::string relation_label;
  std::string src_name;
  std::optional<std::string> src_id;
  std::string dst_name;
  std::optional<std::string> dst_id;
  EntityKind src_kind = EntityKind::Gene;
  EntityKind dst_kind = EntityKind::Chemical;
  Provenance provenance = Provenance::Categorical;
  std::uint64_t weight = 1;
  std::size_t line = 0;

  bool operator==(const RawPattern&) const = default;
};

struct GeneRow {
  std::optional<std::string> entrez;
  std::string name;
  std::size_t line = 0;
};

/// Gene rows by cell-line columns, TPM values, missing cells masked.
struct ExpressionMatrix {
  std::vector<std::string> cell_lines;
  std::vector<GeneRow> genes;
  std::vector<double> values;          // row-major, genes x cell_lines
  std::vector<std::uint8_t> present;   // same shape

  std::size_t rows() const { return genes.size(); }
  std::size_t cols() const { return cell_lines.size(); }
  std::size_t index(std::size_t r, std::size_t c) const { return r * cols() + c; }
  bool has(std::size_t r, std::size_t c) const { return present[index(r, c)] != 0; }
  double at(std::size_t r, std::size_t c) const { return values[index(r, c)]; }
  std::size_t missing() const {
    return static_cast<std::size_t>(std::count(present.begin(), present.end(), 0));
  }
};

struct SensitivityRecord {
  std::string cell_line;
  std::string drug_name;
  std::optional<std::string> drug_cid;
  double intensity = 0.0;
  std::size_t merged = 1;   // raw rows averaged into this record
  std::size_t line = 0;     // first raw row
};

namespace detail {

inline std::optional<std::string> optional_field(std::string_view f) {
  f = text::trim(f);
  if (f.empty()) return std::nullopt;
  return std::string(f);
}

inline void expect_header(const std::vector<std::string_view>& fields,
                          const std::vector<std::string_view>& expected,
                          const std::string& source, std::size_t line) {
  bool ok = fields.size() == expected.size();
  for (std::size_t i = 0; ok && i < expected.size(); ++i)
    ok = text::trim(fields[i]) == expected[i];
  if (!ok) {
    std::string want;
    for (auto e : expected) want += std::string(want.empty() ? "" : "\\t") + std::string(e);
    throw Error(ErrorCode::MalformedRow, "expected header " + want, source, line);
  }
}

inline std::string required_field(std::string_view f, const char* what,
                                  const std::string& source, std::size_t line) {
  auto t = text::trim(f);
  if (t.empty()) throw Error(ErrorCode::MalformedRow, std::string("empty ") + what, source, line);
  return std::string(t);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Parsers

/// Categorical gene-drug interactions:
/// `gene_name  gene_entrez  interaction  drug_name  drug_cid  source`.
inline std::vector<RawPattern> parse_interactions(std::istream& in,
                                                  const std::string& source = "<interactions>") {
  static const std::vector<std::string_view> header = {
      "gene_name", "gene_entrez", "interaction", "drug_name", "drug_cid", "source"};
  std::vector<RawPattern> out;
  bool seen_header = false;
  text::for_each_record(in, [&](std::size_t line, const auto& f) {
    if (!seen_header) {
      detail::expect_header(f, header, source, line);
      seen_header = true;
      return;
    }
    if (f.size() != header.size())
      throw Error(ErrorCode::MalformedRow,
                  "expected 6 columns, got " + std::to_string(f.size()), source, line);
    RawPattern p;
    p.src_name = detail::required_field(f[0], "gene_name", source, line);
    p.src_id = detail::optional_field(f[1]);
    p.relation_label = detail::required_field(f[2], "interaction", source, line);
    p.dst_name = detail::required_field(f[3], "drug_name", source, line);
    p.dst_id = detail::optional_field(f[4]);
    p.src_kind = EntityKind::Gene;
    p.dst_kind = EntityKind::Chemical;
    p.provenance = Provenance::Categorical;
    p.weight = 1;
    p.line = line;
    out.push_back(std::move(p));
  });
  if (out.empty()) throw Error(ErrorCode::EmptyFile, "no interaction rows", source);
  return out;
}

inline std::vector<RawPattern> parse_interactions(const std::string& path) {
  auto in = text::open_input(path);
  return parse_interactions(in, path);
}

/// Precomputed meta-pattern edges:
/// `pattern  e1_kind  e1_id  e1_name  e2_kind  e2_id  e2_name  count`.
inline std::vector<RawPattern> parse_metapatterns(std::istream& in,
                                                  const std::string& source = "<metapatterns>") {
  static const std::vector<std::string_view> header = {
      "pattern", "e1_kind", "e1_id", "e1_name", "e2_kind", "e2_id", "e2_name", "count"};
  std::vector<RawPattern> out;
  bool seen_header = false;
  text::for_each_record(in, [&](std::size_t line, const auto& f) {
    if (!seen_header) {
      detail::expect_header(f, header, source, line);
      seen_header = true;
      return;
    }
    if (f.size() != header.size())
      throw Error(ErrorCode::MalformedRow,
                  "expected 8 columns, got " + std::to_string(f.size()), source, line);
    RawPattern p;
    p.relation_label = detail::required_field(f[0], "pattern", source, line);
    auto k1 = parse_kind(f[1]);
    auto k2 = parse_kind(f[4]);
    if (!k1 || !k2) throw Error(ErrorCode::MalformedRow, "unknown entity kind", source, line);
    p.src_kind = *k1;
    p.src_id = detail::optional_field(f[2]);
    p.src_name = detail::required_field(f[3], "e1_name", source, line);
    p.dst_kind = *k2;
    p.dst_id = detail::optional_field(f[5]);
    p.dst_name = detail::required_field(f[6], "e2_name", source, line);
    auto count = text::parse_int<std::int64_t>(f[7]);
    if (!count) throw Error(ErrorCode::MalformedRow, "count is not an integer", source, line, 8);
    if (*count < 1) throw Error(ErrorCode::NonPositiveCount, "count must be >= 1", source, line, 8);
    p.weight = static_cast<std::uint64_t>(*count);
    p.provenance = Provenance::MetaPattern;
    p.line = line;
    out.push_back(std::move(p));
  });
  if (!seen_header) throw Error(ErrorCode::EmptyFile, "missing header", source);
  return out;
}

inline std::vector<RawPattern> parse_metapatterns(const std::string& path) {
  auto in = text::open_input(path);
  return parse_metapatterns(in, path);
}

/// `entrez  gene_name  <cell line>...`; empty cells are missing.
inline ExpressionMatrix parse_expression(std::istream& in,
                                         const std::string& source = "<expression>") {
  ExpressionMatrix m;
  bool seen_header = false;
  std::size_t width = 0;
  text::for_each_record(in, [&](std::size_t line, const auto& f) {
    if (!seen_header) {
      if (f.size() < 3 || text::trim(f[0]) != "entrez" || text::trim(f[1]) != "gene_name")
        throw Error(ErrorCode::MalformedRow,
                    "expected header entrez\\tgene_name\\t<cell lines...>", source, line);
      for (std::size_t c = 2; c < f.size(); ++c) {
        auto name = text::trim(f[c]);
        if (name.empty()) throw Error(ErrorCode::MalformedRow, "empty cell-line name", source, line, c + 1);
        m.cell_lines.emplace_back(name);
      }
      width = f.size();
      seen_header = true;
      return;
    }
    if (f.size() != width)
      throw Error(ErrorCode::MalformedRow,
                  "expected " + std::to_string(width) + " columns, got " + std::to_string(f.size()),
                  source, line);
    GeneRow row;
    row.entrez = detail::optional_field(f[0]);
    row.name = detail::required_field(f[1], "gene_name", source, line);
    row.line = line;
    for (std::size_t c = 2; c < f.size(); ++c) {
      if (text::trim(f[c]).empty()) {
        m.values.push_back(0.0);
        m.present.push_back(0);
        continue;
      }
      auto v = text::parse_double(f[c]);
      if (!v || !std::isfinite(*v))
        throw Error(ErrorCode::MalformedRow, "not a number", source, line, c + 1);
      if (*v < 0.0) throw Error(ErrorCode::NegativeValue, "TPM must be >= 0", source, line, c + 1);
      m.values.push_back(*v);
      m.present.push_back(1);
    }
    m.genes.push_back(std::move(row));
  });
  if (!seen_header) throw Error(ErrorCode::EmptyFile, "missing header", source);
  return m;
}

inline ExpressionMatrix parse_expression(const std::string& path) {
  auto in = text::open_input(path);
  return parse_expression(in, path);
}

/// `cell_line  drug_name  drug_cid  intensity`. Repeated (cell line, drug)
/// rows collapse to one record holding the mean intensity.
inline std::vector<SensitivityRecord> parse_sensitivity(std::istream& in,
                                                        const std::string& source = "<sensitivity>") {
  static const std::vector<std::string_view> header = {"cell_line", "drug_name", "drug_cid", "intensity"};
  std::vector<SensitivityRecord> out;
  std::vector<double> sums;
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> index;
  bool seen_header = false;
  text::for_each_record(in, [&](std::size_t line, const auto& f) {
    if (!seen_header) {
      detail::expect_header(f, header, source, line);
      seen_header = true;
      return;
    }
    if (f.size() != header.size())
      throw Error(ErrorCode::MalformedRow,
                  "expected 4 columns, got " + std::to_string(f.size()), source, line);
    SensitivityRecord r;
    r.cell_line = detail::required_field(f[0], "cell_line", source, line);
    r.drug_name = detail::required_field(f[1], "drug_name", source, line);
    r.drug_cid = detail::optional_field(f[2]);
    auto v = text::parse_double(f[3]);
    if (!v || !std::isfinite(*v)) throw Error(ErrorCode::MalformedRow, "intensity is not a number", source, line, 4);
    if (*v < 0.0) throw Error(ErrorCode::NegativeValue, "intensity must be >= 0", source, line, 4);
    r.intensity = *v;
    r.line = line;
    auto key = std::make_tuple(text::normalize_name(r.cell_line), text::normalize_name(r.drug_name),
                               r.drug_cid.value_or(""));
    auto [it, inserted] = index.emplace(key, out.size());
    if (inserted) {
      sums.push_back(r.intensity);
      out.push_back(std::move(r));
    } else {
      sums[it->second] += r.intensity;
      ++out[it->second].merged;
    }
  });
  if (!seen_header) throw Error(ErrorCode::EmptyFile, "missing header", source);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i].intensity = sums[i] / static_cast<double>(out[i].merged);
  return out;
}

inline std::vector<SensitivityRecord> parse_sensitivity(const std::string& path) {
  auto in = text::open_input(path);
  return parse_sensitivity(in, path);
}

// ---------------------------------------------------------------------------
// Entity linking

struct Mention {
  EntityKind kind = EntityKind::Gene;
  std::string name;
  std::optional<Alias> id;   // structured alias, if the source carried one
  bool observable = false;
};

inline std::vector<Mention> expression_mentions(const ExpressionMatrix& m) {
  std::vector<Mention> out;
  for (const auto& g : m.genes) {
    Mention x{EntityKind::Gene, g.name, std::nullopt, true};
    if (g.entrez) x.id = structured_alias(EntityKind::Gene, *g.entrez);
    out.push_back(std::move(x));
  }
  return out;
}

inline std::vector<Mention> sensitivity_mentions(const std::vector<SensitivityRecord>& records) {
  std::vector<Mention> out;
  for (const auto& r : records) {
    Mention x{EntityKind::Chemical, r.drug_name, std::nullopt, true};
    if (r.drug_cid) x.id = structured_alias(EntityKind::Chemical, *r.drug_cid);
    out.push_back(std::move(x));
  }
  return out;
}

struct AliasConflict {
  EntityKind kind = EntityKind::Gene;
  std::string normalized_name;
  std::vector<Alias> kept;       // structured aliases of the component that won
  std::vector<Alias> rejected;   // structured aliases of the quarantined component
  std::vector<std::size_t> mentions;   // quarantined mention indices
};

struct MentionLink {
  std::vector<Entity> entities;
  std::vector<std::optional<EntityId>> assignment;   // per mention; nullopt = quarantined
  std::vector<AliasConflict> conflicts;
  std::size_t merges = 0;
  std::vector<EntityId> name_conflicts;   // entities whose mentions disagree on normalized name
};

namespace detail {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  // Lower index becomes the root so roots track first appearance.
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace detail

/// Links mentions into entities. Mentions of one kind merge when they share
/// a structured alias; name-equal components then merge unless they hold
/// two different values of the same structured scheme, in which case the
/// later component is quarantined and reported.
inline MentionLink link_mentions(const std::vector<Mention>& mentions) {
  const std::size_t n = mentions.size();
  MentionLink out;
  detail::DisjointSets sets(n);

  std::map<std::tuple<EntityKind, AliasScheme, std::string>, std::size_t> by_alias;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = mentions[i];
    if (!m.id) continue;
    auto [it, inserted] = by_alias.emplace(std::make_tuple(m.kind, m.id->scheme, m.id->value), i);
    if (!inserted && sets.unite(it->second, i)) ++out.merges;
  }

  // Structured aliases per component root.
  std::vector<std::map<AliasScheme, std::set<std::string>>> ids(n);
  for (std::size_t i = 0; i < n; ++i)
    if (mentions[i].id) ids[sets.find(i)][mentions[i].id->scheme].insert(mentions[i].id->value);

  auto clashes = [&](std::size_t a, std::size_t b) {
    for (const auto& [scheme, values] : ids[a]) {
      auto it = ids[b].find(scheme);
      if (it != ids[b].end() && it->second != values) return true;
    }
    return false;
  };
  auto aliases_of = [&](std::size_t root) {
    std::vector<Alias> v;
    for (const auto& [scheme, values] : ids[root])
      for (const auto& val : values) v.push_back({scheme, val});
    return v;
  };

  std::vector<std::uint8_t> quarantined(n, 0);   // indexed by root
  std::vector<std::string> norm(n);
  std::vector<std::pair<EntityKind, std::string>> group_order;
  std::map<std::pair<EntityKind, std::string>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) {
    norm[i] = text::normalize_name(mentions[i].name);
    auto key = std::make_pair(mentions[i].kind, norm[i]);
    auto& g = groups[key];
    if (g.empty()) group_order.push_back(key);
    g.push_back(i);
  }

  for (const auto& key : group_order) {
    std::optional<std::size_t> anchor;
    for (std::size_t i : groups[key]) {
      std::size_t r = sets.find(i);
      if (quarantined[r]) continue;
      if (!anchor) {
        anchor = r;
        continue;
      }
      std::size_t a = sets.find(*anchor);
      if (r == a) continue;
      if (clashes(a, r)) {
        AliasConflict c;
        c.kind = key.first;
        c.normalized_name = key.second;
        c.kept = aliases_of(a);
        c.rejected = aliases_of(r);
        quarantined[r] = 1;
        for (std::size_t j = 0; j < n; ++j)
          if (sets.find(j) == r) c.mentions.push_back(j);
        out.conflicts.push_back(std::move(c));
        continue;
      }
      std::map<AliasScheme, std::set<std::string>> merged = ids[a];
      for (const auto& [scheme, values] : ids[r]) merged[scheme].insert(values.begin(), values.end());
      sets.unite(a, r);
      ++out.merges;
      ids[sets.find(a)] = std::move(merged);
    }
  }

  out.assignment.assign(n, std::nullopt);
  std::vector<std::optional<EntityId>> entity_of_root(n);
  std::vector<std::set<std::string>> names_seen;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = sets.find(i);
    if (quarantined[r]) continue;
    if (!entity_of_root[r]) {
      Entity e;
      e.id = static_cast<EntityId>(out.entities.size());
      e.kind = mentions[i].kind;
      e.canonical_name = std::string(text::trim(mentions[i].name));
      entity_of_root[r] = e.id;
      out.entities.push_back(std::move(e));
      names_seen.emplace_back();
    }
    EntityId id = *entity_of_root[r];
    out.assignment[i] = id;
    auto& e = out.entities[id];
    e.aliases.insert({AliasScheme::Name, std::string(text::trim(mentions[i].name))});
    if (mentions[i].id) e.aliases.insert(*mentions[i].id);
    e.observable = e.observable || mentions[i].observable;
    names_seen[id].insert(norm[i]);
  }
  for (EntityId id = 0; id < out.entities.size(); ++id)
    if (names_seen[id].size() > 1) out.name_conflicts.push_back(id);
  return out;
}

/// A pattern whose endpoints resolved to entity ids.
struct LinkedPattern {
  std::string relation_label;
  EntityId src = 0;
  EntityId dst = 0;
  Provenance provenance = Provenance::Categorical;
  std::uint64_t weight = 1;

  bool operator==(const LinkedPattern&) const = default;
};

struct QuarantinedRow {
  std::string source;   // "pattern", "expression" or "sensitivity"
  std::size_t line = 0;
};

struct LinkReport {
  std::size_t mentions = 0;
  std::size_t entities = 0;
  std::size_t merges = 0;
  std::size_t name_conflicts = 0;
  std::vector<AliasConflict> conflicts;
  std::vector<std::vector<QuarantinedRow>> conflict_rows;   // parallel to conflicts
  std::size_t quarantined_patterns = 0;
  std::size_t quarantined_expression = 0;
  std::size_t quarantined_sensitivity = 0;
};

struct LinkResult {
  std::vector<Entity> entities;
  std::vector<LinkedPattern> patterns;
  std::vector<std::optional<EntityId>> expression_entities;    // per expression gene row
  std::vector<std::optional<EntityId>> sensitivity_entities;   // per sensitivity record
  LinkReport report;
};

/// Links pattern endpoints with the expression and sensitivity panels.
/// Mention order: pattern endpoints (src, dst per row), then expression rows,
/// then sensitivity records.
inline LinkResult link_entities(const std::vector<RawPattern>& patterns,
                                const std::vector<Mention>& expression,
                                const std::vector<Mention>& sensitivity,
                                const std::vector<std::size_t>& expression_lines = {},
                                const std::vector<std::size_t>& sensitivity_lines = {}) {
  std::vector<Mention> all;
  all.reserve(2 * patterns.size() + expression.size() + sensitivity.size());
  for (const auto& p : patterns) {
    Mention s{p.src_kind, p.src_name, std::nullopt, false};
    if (p.src_id) s.id = structured_alias(p.src_kind, *p.src_id);
    Mention d{p.dst_kind, p.dst_name, std::nullopt, false};
    if (p.dst_id) d.id = structured_alias(p.dst_kind, *p.dst_id);
    all.push_back(std::move(s));
    all.push_back(std::move(d));
  }
  const std::size_t expr_base = all.size();
  all.insert(all.end(), expression.begin(), expression.end());
  const std::size_t sens_base = all.size();
  all.insert(all.end(), sensitivity.begin(), sensitivity.end());

  MentionLink link = link_mentions(all);

  LinkResult out;
  out.entities = std::move(link.entities);
  for (std::size_t r = 0; r < patterns.size(); ++r) {
    auto s = link.assignment[2 * r];
    auto d = link.assignment[2 * r + 1];
    if (!s || !d) {
      ++out.report.quarantined_patterns;
      continue;
    }
    const auto& p = patterns[r];
    out.patterns.push_back({p.relation_label, *s, *d, p.provenance, p.weight});
  }
  for (std::size_t i = 0; i < expression.size(); ++i) {
    out.expression_entities.push_back(link.assignment[expr_base + i]);
    if (!link.assignment[expr_base + i]) ++out.report.quarantined_expression;
  }
  for (std::size_t i = 0; i < sensitivity.size(); ++i) {
    out.sensitivity_entities.push_back(link.assignment[sens_base + i]);
    if (!link.assignment[sens_base + i]) ++out.report.quarantined_sensitivity;
  }

  out.report.mentions = all.size();
  out.report.entities = out.entities.size();
  out.report.merges = link.merges;
  out.report.name_conflicts = link.name_conflicts.size();
  for (auto& c : link.conflicts) {
    std::vector<QuarantinedRow> rows;
    std::set<std::pair<std::string, std::size_t>> seen;
    for (std::size_t m : c.mentions) {
      QuarantinedRow row;
      if (m < expr_base) {
        row = {"pattern", patterns[m / 2].line};
      } else if (m < sens_base) {
        std::size_t i = m - expr_base;
        row = {"expression", i < expression_lines.size() ? expression_lines[i] : i};
      } else {
        std::size_t i = m - sens_base;
        row = {"sensitivity", i < sensitivity_lines.size() ? sensitivity_lines[i] : i};
      }
      if (seen.insert({row.source, row.line}).second) rows.push_back(row);
    }
    out.report.conflict_rows.push_back(std::move(rows));
    out.report.conflicts.push_back(std::move(c));
  }
  return out;
}

inline LinkResult link_entities(const std::vector<RawPattern>& patterns, const ExpressionMatrix& expression,
                                const std::vector<SensitivityRecord>& sensitivity) {
  std::vector<std::size_t> expr_lines, sens_lines;
  for (const auto& g : expression.genes) expr_lines.push_back(g.line);
  for (const auto& r : sensitivity) sens_lines.push_back(r.line);
  return link_entities(patterns, expression_mentions(expression), sensitivity_mentions(sensitivity),
                       expr_lines, sens_lines);
}

/// Mentions that reproduce an entity table: one per structured alias
/// (under the canonical name) and one per other recorded name, the latter
/// carrying the entity's first structured alias so it links back by id.
inline std::vector<Mention> entity_mentions(const std::vector<Entity>& entities) {
  std::vector<Mention> out;
  for (const auto& e : entities) {
    std::optional<Alias> anchor;
    for (const auto& a : e.aliases)
      if (a.structured() && !anchor) anchor = a;
    out.push_back({e.kind, e.canonical_name, std::nullopt, e.observable});
    for (const auto& a : e.aliases) {
      if (a.structured())
        out.push_back({e.kind, e.canonical_name, a, e.observable});
      else if (a.value != e.canonical_name)
        out.push_back({e.kind, a.value, anchor, e.observable});
    }
  }
  return out;
}

inline void write_link_summary(std::ostream& os, const LinkReport& r) {
  os << "mentions\t" << r.mentions << '\n'
     << "entities\t" << r.entities << '\n'
     << "merges\t" << r.merges << '\n'
     << "name_conflicts\t" << r.name_conflicts << '\n'
     << "alias_conflicts\t" << r.conflicts.size() << '\n'
     << "quarantined_patterns\t" << r.quarantined_patterns << '\n'
     << "quarantined_expression_rows\t" << r.quarantined_expression << '\n'
     << "quarantined_sensitivity_records\t" << r.quarantined_sensitivity << '\n';
}

inline void write_link_conflicts(std::ostream& os, const LinkReport& r) {
  os << "kind\tname\tkept\trejected\tquarantined\n";
  auto aliases = [](const std::vector<Alias>& v) {
    std::vector<std::string> s;
    for (const auto& a : v) s.push_back(to_string(a));
    return text::join(s, ",");
  };
  for (std::size_t i = 0; i < r.conflicts.size(); ++i) {
    const auto& c = r.conflicts[i];
    std::vector<std::string> rows;
    for (const auto& q : r.conflict_rows[i]) rows.push_back(q.source + ":" + std::to_string(q.line));
    os << to_string(c.kind) << '\t' << c.normalized_name << '\t' << aliases(c.kept) << '\t'
       << aliases(c.rejected) << '\t' << text::join(rows, ",") << '\n';
  }
}

// ---------------------------------------------------------------------------
// Cell-line panel

/// Observed values for one entity kind, cell-major.
struct ObservationBlock {
  std::vector<EntityId> entities;
  std::vector<double> values;
  std::vector<std::uint8_t> present;

  std::size_t width() const { return entities.size(); }
  std::size_t index(std::size_t cell, std::size_t col) const { return cell * width() + col; }
  bool has(std::size_t cell, std::size_t col) const { return present[index(cell, col)] != 0; }
  double at(std::size_t cell, std::size_t col) const { return values[index(cell, col)]; }
  std::optional<std::size_t> column(EntityId id) const {
    auto it = std::lower_bound(entities.begin(), entities.end(), id);
    if (it == entities.end() || *it != id) return std::nullopt;
    return static_cast<std::size_t>(it - entities.begin());
  }

  bool operator==(const ObservationBlock&) const = default;
};

struct CellLinePanel {
  std::vector<std::string> cell_lines;
  ObservationBlock genes;
  ObservationBlock drugs;
  std::vector<std::uint8_t> drug_labels;   // same shape as drugs; meaningful where present

  std::size_t size() const { return cell_lines.size(); }
  bool operator==(const CellLinePanel&) const = default;

  double missing_fraction() const {
    std::size_t total = genes.present.size() + drugs.present.size();
    if (total == 0) return 0.0;
    std::size_t missing = std::count(genes.present.begin(), genes.present.end(), 0) +
                          std::count(drugs.present.begin(), drugs.present.end(), 0);
    return static_cast<double>(missing) / static_cast<double>(total);
  }
};

struct PanelReport {
  std::size_t joined = 0;
  std::size_t dropped_expression_only = 0;
  std::size_t dropped_sensitivity_only = 0;
  std::size_t duplicate_cell_lines = 0;
  std::vector<EntityId> constant_features;
  double missing_fraction = 0.0;
};

struct PanelBuild {
  CellLinePanel panel;
  PanelReport report;
};

/// Median with the midpoint convention for even counts.
inline double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

namespace detail {

// Min-max scale one column in place over present cells; constant columns
// become 0.5. Returns true when the column was constant.
inline bool minmax_column(ObservationBlock& block, std::size_t cells, std::size_t col) {
  double lo = INFINITY, hi = -INFINITY;
  bool any = false;
  for (std::size_t c = 0; c < cells; ++c) {
    if (!block.has(c, col)) continue;
    lo = std::min(lo, block.at(c, col));
    hi = std::max(hi, block.at(c, col));
    any = true;
  }
  if (!any) return false;
  for (std::size_t c = 0; c < cells; ++c) {
    if (!block.has(c, col)) continue;
    double& v = block.values[block.index(c, col)];
    v = hi > lo ? (v - lo) / (hi - lo) : 0.5;
  }
  return !(hi > lo);
}

}  // namespace detail

/// Per-drug labels: 1 iff the value is at or above the drug's median over
/// the cell lines where it was measured.
inline void assign_median_labels(CellLinePanel& panel) {
  auto& d = panel.drugs;
  panel.drug_labels.assign(d.values.size(), 0);
  for (std::size_t col = 0; col < d.width(); ++col) {
    std::vector<double> xs;
    for (std::size_t c = 0; c < panel.size(); ++c)
      if (d.has(c, col)) xs.push_back(d.at(c, col));
    const double m = median(xs);
    for (std::size_t c = 0; c < panel.size(); ++c)
      if (d.has(c, col)) panel.drug_labels[d.index(c, col)] = d.at(c, col) >= m ? 1 : 0;
  }
}

/// Joins expression and sensitivity on normalized cell-line names and
/// normalizes: genes log1p then min-max per gene, drugs min-max per drug.
inline PanelBuild build_panel(const ExpressionMatrix& expression,
                              const std::vector<SensitivityRecord>& sensitivity,
                              const LinkResult& link) {
  PanelBuild out;
  auto& panel = out.panel;
  auto& report = out.report;

  std::map<std::string, std::size_t> expr_cols;   // normalized name -> expression column
  for (std::size_t c = 0; c < expression.cols(); ++c) {
    if (!expr_cols.emplace(text::normalize_name(expression.cell_lines[c]), c).second)
      ++report.duplicate_cell_lines;
  }
  std::set<std::string> sens_lines;
  for (const auto& r : sensitivity) sens_lines.insert(text::normalize_name(r.cell_line));

  std::vector<std::size_t> joined_cols;
  std::map<std::string, std::size_t> cell_index;
  for (std::size_t c = 0; c < expression.cols(); ++c) {
    auto key = text::normalize_name(expression.cell_lines[c]);
    if (expr_cols[key] != c) continue;
    if (!sens_lines.count(key)) {
      ++report.dropped_expression_only;
      continue;
    }
    cell_index[key] = panel.cell_lines.size();
    panel.cell_lines.push_back(expression.cell_lines[c]);
    joined_cols.push_back(c);
  }
  for (const auto& key : sens_lines)
    if (!expr_cols.count(key)) ++report.dropped_sensitivity_only;
  if (panel.cell_lines.empty())
    throw Error(ErrorCode::NoOverlap, "no cell line appears in both expression and sensitivity data");
  report.joined = panel.cell_lines.size();
  const std::size_t cells = panel.cell_lines.size();

  // Genes: average raw TPM over rows linked to the same entity.
  std::set<EntityId> gene_ids;
  for (const auto& e : link.expression_entities)
    if (e) gene_ids.insert(*e);
  panel.genes.entities.assign(gene_ids.begin(), gene_ids.end());
  {
    auto& g = panel.genes;
    std::vector<double> sum(cells * g.width(), 0.0);
    std::vector<std::size_t> cnt(cells * g.width(), 0);
    for (std::size_t r = 0; r < expression.rows(); ++r) {
      auto e = link.expression_entities[r];
      if (!e) continue;
      std::size_t col = *g.column(*e);
      for (std::size_t c = 0; c < cells; ++c) {
        if (!expression.has(r, joined_cols[c])) continue;
        sum[c * g.width() + col] += expression.at(r, joined_cols[c]);
        ++cnt[c * g.width() + col];
      }
    }
    g.values.assign(sum.size(), 0.0);
    g.present.assign(sum.size(), 0);
    for (std::size_t i = 0; i < sum.size(); ++i) {
      if (!cnt[i]) continue;
      g.values[i] = std::log1p(sum[i] / static_cast<double>(cnt[i]));
      g.present[i] = 1;
    }
    for (std::size_t col = 0; col < g.width(); ++col)
      if (detail::minmax_column(g, cells, col)) report.constant_features.push_back(g.entities[col]);
  }

  // Drugs: average over records linked to the same (cell line, entity).
  std::set<EntityId> drug_ids;
  for (const auto& e : link.sensitivity_entities)
    if (e) drug_ids.insert(*e);
  panel.drugs.entities.assign(drug_ids.begin(), drug_ids.end());
  {
    auto& d = panel.drugs;
    std::vector<double> sum(cells * d.width(), 0.0);
    std::vector<std::size_t> cnt(cells * d.width(), 0);
    for (std::size_t i = 0; i < sensitivity.size(); ++i) {
      auto e = link.sensitivity_entities[i];
      if (!e) continue;
      auto it = cell_index.find(text::normalize_name(sensitivity[i].cell_line));
      if (it == cell_index.end()) continue;
      std::size_t idx = it->second * d.width() + *d.column(*e);
      sum[idx] += sensitivity[i].intensity;
      ++cnt[idx];
    }
    d.values.assign(sum.size(), 0.0);
    d.present.assign(sum.size(), 0);
    for (std::size_t i = 0; i < sum.size(); ++i) {
      if (!cnt[i]) continue;
      d.values[i] = sum[i] / static_cast<double>(cnt[i]);
      d.present[i] = 1;
    }
    for (std::size_t col = 0; col < d.width(); ++col)
      if (detail::minmax_column(d, cells, col)) report.constant_features.push_back(d.entities[col]);
  }
  assign_median_labels(panel);
  report.missing_fraction = panel.missing_fraction();
  return out;
}

/// Keeps the listed cell lines (in the given order); labels are carried over
/// unchanged.
inline CellLinePanel subset_panel(const CellLinePanel& panel, const std::vector<std::size_t>& cells) {
  CellLinePanel out;
  out.genes.entities = panel.genes.entities;
  out.drugs.entities = panel.drugs.entities;
  for (std::size_t c : cells) {
    out.cell_lines.push_back(panel.cell_lines.at(c));
    for (std::size_t j = 0; j < panel.genes.width(); ++j) {
      out.genes.values.push_back(panel.genes.at(c, j));
      out.genes.present.push_back(panel.genes.present[panel.genes.index(c, j)]);
    }
    for (std::size_t j = 0; j < panel.drugs.width(); ++j) {
      out.drugs.values.push_back(panel.drugs.at(c, j));
      out.drugs.present.push_back(panel.drugs.present[panel.drugs.index(c, j)]);
      out.drug_labels.push_back(panel.drug_labels[panel.drugs.index(c, j)]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Panel file
//
//   relprop-panel v1 cell_lines=<c> genes=<g> drugs=<d>
//   C <name>                        one per cell line, in order
//   G <entity>                      gene columns
//   D <entity>                      drug columns
//   g <cell> <entity> <value>       present gene cells
//   d <cell> <entity> <value> <label>

inline void write_panel(std::ostream& os, const CellLinePanel& p) {
  os << "relprop-panel v1 cell_lines=" << p.size() << " genes=" << p.genes.width()
     << " drugs=" << p.drugs.width() << '\n';
  for (const auto& c : p.cell_lines) os << "C\t" << c << '\n';
  for (auto e : p.genes.entities) os << "G\t" << e << '\n';
  for (auto e : p.drugs.entities) os << "D\t" << e << '\n';
  for (std::size_t c = 0; c < p.size(); ++c)
    for (std::size_t j = 0; j < p.genes.width(); ++j)
      if (p.genes.has(c, j))
        os << "g\t" << c << '\t' << p.genes.entities[j] << '\t' << text::format_double(p.genes.at(c, j)) << '\n';
  for (std::size_t c = 0; c < p.size(); ++c)
    for (std::size_t j = 0; j < p.drugs.width(); ++j)
      if (p.drugs.has(c, j))
        os << "d\t" << c << '\t' << p.drugs.entities[j] << '\t' << text::format_double(p.drugs.at(c, j)) << '\t'
           << int(p.drug_labels[p.drugs.index(c, j)]) << '\n';
}

inline CellLinePanel read_panel(std::istream& in, const std::string& source = "<panel>") {
  CellLinePanel p;
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("relprop-panel v1"))
    throw Error(ErrorCode::MalformedRow, "expected relprop-panel v1 header", source, 1);
  std::size_t line_no = 1;
  bool sized = false;
  auto bad = [&](const char* what) { return Error(ErrorCode::MalformedRow, what, source, line_no); };
  auto size_blocks = [&] {
    if (sized) return;
    p.genes.values.assign(p.size() * p.genes.width(), 0.0);
    p.genes.present.assign(p.size() * p.genes.width(), 0);
    p.drugs.values.assign(p.size() * p.drugs.width(), 0.0);
    p.drugs.present.assign(p.size() * p.drugs.width(), 0);
    p.drug_labels.assign(p.size() * p.drugs.width(), 0);
    sized = true;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    auto f = text::split_tabs(line);
    const auto tag = f[0];
    if (tag == "C" || tag == "G" || tag == "D") {
      if (sized || f.size() != 2) throw bad("header record after data or wrong arity");
      if (tag == "C") {
        p.cell_lines.emplace_back(f[1]);
      } else {
        auto id = text::parse_int<EntityId>(f[1]);
        if (!id) throw bad("bad entity id");
        (tag == "G" ? p.genes : p.drugs).entities.push_back(*id);
      }
      continue;
    }
    size_blocks();
    if ((tag != "g" || f.size() != 4) && (tag != "d" || f.size() != 5)) throw bad("unknown record");
    auto cell = text::parse_int<std::size_t>(f[1]);
    auto id = text::parse_int<EntityId>(f[2]);
    auto v = text::parse_double(f[3]);
    if (!cell || !id || !v || *cell >= p.size()) throw bad("bad observation");
    auto& block = tag == "g" ? p.genes : p.drugs;
    auto col = block.column(*id);
    if (!col) throw bad("observation for undeclared entity");
    block.values[block.index(*cell, *col)] = *v;
    block.present[block.index(*cell, *col)] = 1;
    if (tag == "d") {
      auto label = text::parse_int<int>(f[4]);
      if (!label || (*label != 0 && *label != 1)) throw bad("label must be 0 or 1");
      p.drug_labels[block.index(*cell, *col)] = static_cast<std::uint8_t>(*label);
    }
  }
  size_blocks();
  return p;
}

}  // namespace relprop
