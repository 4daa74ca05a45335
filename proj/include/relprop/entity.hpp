#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "relprop/text.hpp"

namespace relprop {

using EntityId = std::uint32_t;

enum class EntityKind { Gene, Chemical, Disease };
enum class Provenance { Categorical, MetaPattern };
enum class AliasScheme { Entrez, MESH, CID, Name };

inline std::string_view to_string(EntityKind kind) {
  switch (kind) {
    case EntityKind::Gene: return "Gene";
    case EntityKind::Chemical: return "Chemical";
    case EntityKind::Disease: return "Disease";
  }
  return "?";
}

inline std::string_view to_string(Provenance p) {
  return p == Provenance::Categorical ? "Categorical" : "MetaPattern";
}

inline std::string_view to_string(AliasScheme s) {
  switch (s) {
    case AliasScheme::Entrez: return "Entrez";
    case AliasScheme::MESH: return "MESH";
    case AliasScheme::CID: return "CID";
    case AliasScheme::Name: return "Name";
  }
  return "?";
}

inline std::optional<EntityKind> parse_kind(std::string_view s) {
  s = text::trim(s);
  if (s == "Gene") return EntityKind::Gene;
  if (s == "Chemical") return EntityKind::Chemical;
  if (s == "Disease") return EntityKind::Disease;
  return std::nullopt;
}

inline std::optional<Provenance> parse_provenance(std::string_view s) {
  if (s == "Categorical") return Provenance::Categorical;
  if (s == "MetaPattern") return Provenance::MetaPattern;
  return std::nullopt;
}

inline std::optional<AliasScheme> parse_scheme(std::string_view s) {
  if (s == "Entrez") return AliasScheme::Entrez;
  if (s == "MESH") return AliasScheme::MESH;
  if (s == "CID") return AliasScheme::CID;
  if (s == "Name") return AliasScheme::Name;
  return std::nullopt;
}

struct Alias {
  AliasScheme scheme = AliasScheme::Name;
  std::string value;

  auto operator<=>(const Alias&) const = default;
  bool structured() const { return scheme != AliasScheme::Name; }
};

inline std::string to_string(const Alias& a) {
  return std::string(to_string(a.scheme)) + ":" + a.value;
}

/// Maps a source identifier to its alias scheme. An explicit `MESH:` prefix
/// wins; otherwise genes carry Entrez ids, chemicals PubChem CIDs and
/// diseases MeSH ids.
inline Alias structured_alias(EntityKind kind, std::string_view id) {
  id = text::trim(id);
  if (id.starts_with("MESH:")) return {AliasScheme::MESH, std::string(id.substr(5))};
  switch (kind) {
    case EntityKind::Gene: return {AliasScheme::Entrez, std::string(id)};
    case EntityKind::Chemical: return {AliasScheme::CID, std::string(id)};
    case EntityKind::Disease: return {AliasScheme::MESH, std::string(id)};
  }
  return {AliasScheme::Name, std::string(id)};
}

struct Entity {
  EntityId id = 0;
  EntityKind kind = EntityKind::Gene;
  std::string canonical_name;
  std::set<Alias> aliases;
  bool observable = false;

  bool operator==(const Entity&) const = default;

  std::optional<std::string> alias(AliasScheme scheme) const {
    for (const auto& a : aliases)
      if (a.scheme == scheme) return a.value;
    return std::nullopt;
  }
};

}  // namespace relprop
