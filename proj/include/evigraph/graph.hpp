#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "evigraph/error.hpp"
#include "evigraph/ids.hpp"
#include "evigraph/ingest.hpp"
#include "evigraph/types.hpp"

namespace evigraph {

struct EntityNode {
  std::string id;
  EntityKind entity_kind = EntityKind::generic;
  std::string record_id;
  std::string source_id;
  std::size_t line_number = 0;
  std::string raw_line;
  bool excluded = false;
  std::vector<std::string> annotations;
};

struct AttributeNode {
  std::string id;
  std::string owner;
  NormalizedValue value;
  std::string raw_text;
  std::string column;
  bool excluded = false;
  /// Attribute this one was derived from by enrichment; empty when ingested.
  std::string derived_from;
};

enum class EdgeStage { refine1_auto, refine2_manual };
enum class EdgeStatus { proposed, confirmed, rejected };

constexpr std::string_view to_string(EdgeStage s) {
  return s == EdgeStage::refine1_auto ? "refine1_auto" : "refine2_manual";
}
constexpr std::string_view to_string(EdgeStatus s) {
  switch (s) {
    case EdgeStatus::proposed: return "proposed";
    case EdgeStatus::confirmed: return "confirmed";
    case EdgeStatus::rejected: return "rejected";
  }
  return "?";
}

inline constexpr std::string_view kSystemActor = "system";

/// Undirected match between two attribute nodes; `a < b` always.
struct CrossMatchEdge {
  std::string id;
  std::string a;
  std::string b;
  std::optional<std::string> rule_id;
  EdgeStage stage = EdgeStage::refine1_auto;
  EdgeStatus status = EdgeStatus::proposed;
  std::string created_by{kSystemActor};
  std::string note;
};

/// Identity of an edge: its unordered endpoints plus the producing rule
/// ("manual" for investigator edges).
inline std::string edge_key(std::string_view x, std::string_view y,
                            const std::optional<std::string>& rule_id) {
  const auto [lo, hi] = std::minmax(x, y);
  std::string key(lo);
  key += '|';
  key += hi;
  key += '|';
  key += rule_id ? *rule_id : std::string("manual");
  return key;
}

inline std::string make_edge_id(std::string_view x, std::string_view y,
                                const std::optional<std::string>& rule_id) {
  return make_id("x-", edge_key(x, y, rule_id));
}

inline std::string make_entity_id(std::string_view record_id) {
  return make_id("n-", record_id);
}

inline std::string make_attribute_id(std::string_view record_id, std::size_t ordinal) {
  return make_id("a-", std::string(record_id) + "#" + std::to_string(ordinal));
}

/// Nodes produced from a batch of records, not yet part of a graph.
struct GraphDelta {
  std::vector<EntityNode> entities;
  std::vector<AttributeNode> attributes;

  bool empty() const { return entities.empty(); }
};

/// One EntityNode per record and one AttributeNode per record attribute.
/// Pure; ids depend only on record ids, so input order is irrelevant.
inline GraphDelta build_graph(const std::vector<EvidenceRecord>& records) {
  GraphDelta delta;
  std::set<std::string> seen;
  for (const auto& rec : records) {
    if (!seen.insert(rec.record_id).second)
      throw Error(ErrorCode::DuplicateRecord, "record " + rec.record_id + " appears twice");
    EntityNode e;
    e.id = make_entity_id(rec.record_id);
    e.entity_kind = rec.entity_kind;
    e.record_id = rec.record_id;
    e.source_id = rec.source_id;
    e.line_number = rec.line_number;
    e.raw_line = rec.raw_line;
    for (std::size_t i = 0; i < rec.attributes.size(); ++i) {
      const auto& ra = rec.attributes[i];
      AttributeNode a;
      a.id = make_attribute_id(rec.record_id, i);
      a.owner = e.id;
      a.value = ra.value;
      a.raw_text = ra.raw_text;
      a.column = ra.column;
      delta.attributes.push_back(std::move(a));
    }
    delta.entities.push_back(std::move(e));
  }
  return delta;
}

/// Short node label in the style of the figure keys (t, sip, dip, pn, ...).
inline std::string attribute_label(const NormalizedValue& v) {
  auto with_role = [&](std::string base) {
    switch (v.role) {
      case Role::source: return "s" + base;
      case Role::destination: return "d" + base;
      case Role::local: return "l" + base;
      case Role::foreign: return "f" + base;
      default: return base;
    }
  };
  switch (v.kind) {
    case AttributeKind::timestamp: return "t";
    case AttributeKind::ipv4: return with_role("ip");
    case AttributeKind::mac: return with_role("mac");
    case AttributeKind::port: return with_role("pn");
    case AttributeKind::protocol: return "pr";
    case AttributeKind::username:
      return v.role == Role::created_by ? "cn" : v.role == Role::accessed_by ? "an" : "un";
    case AttributeKind::application_name: return "app";
    case AttributeKind::process_name: return "proc";
    case AttributeKind::url: return "url";
    case AttributeKind::file_name: return "fn";
    case AttributeKind::file_size: return "s";
    case AttributeKind::email: return "email";
    case AttributeKind::event_type: return "ev";
    case AttributeKind::device_name: return "dev";
    case AttributeKind::host: return "host";
    case AttributeKind::geolocation: return "geo";
    case AttributeKind::connection_state: return "st";
    case AttributeKind::free_text: return "txt";
  }
  return "?";
}

/// The unified property graph of one case. A value type: copying yields an
/// independent snapshot, and every mutation bumps `version`.
class CaseGraph {
 public:
  std::uint64_t version() const { return version_; }
  const std::map<std::string, SourceDescriptor>& sources() const { return sources_; }
  const std::map<std::string, EntityNode>& entities() const { return entities_; }
  const std::map<std::string, AttributeNode>& attributes() const { return attributes_; }
  const std::map<std::string, CrossMatchEdge>& edges() const { return edges_; }

  const SourceDescriptor* find_source(const std::string& id) const { return find_in(sources_, id); }
  const EntityNode* find_entity(const std::string& id) const { return find_in(entities_, id); }
  const AttributeNode* find_attribute(const std::string& id) const { return find_in(attributes_, id); }
  const CrossMatchEdge* find_edge(const std::string& id) const { return find_in(edges_, id); }

  bool has_record(const std::string& record_id) const {
    return entities_.count(make_entity_id(record_id)) != 0;
  }

  /// Attribute ids of an entity in record order.
  const std::vector<std::string>& attributes_of(const std::string& entity_id) const {
    static const std::vector<std::string> kNone;
    auto it = owned_.find(entity_id);
    return it == owned_.end() ? kNone : it->second;
  }

  const std::set<std::string>& edges_of(const std::string& attribute_id) const {
    static const std::set<std::string> kNone;
    auto it = incident_.find(attribute_id);
    return it == incident_.end() ? kNone : it->second;
  }

  const EntityNode& owner_of(const AttributeNode& a) const { return entities_.at(a.owner); }

  /// Neither the attribute nor its owning entity is excluded.
  bool visible(const AttributeNode& a) const { return !a.excluded && !owner_of(a).excluded; }

  /// Whether analytics may traverse the edge.
  bool visible(const CrossMatchEdge& e, bool include_proposed = false) const {
    if (e.status == EdgeStatus::rejected) return false;
    if (e.status == EdgeStatus::proposed && !include_proposed) return false;
    return visible(attributes_.at(e.a)) && visible(attributes_.at(e.b));
  }

  // -- mutations -----------------------------------------------------------

  void bump() { ++version_; }

  void add_source(const SourceDescriptor& source) { sources_.emplace(source.source_id, source); }

  /// Adds a delta atomically; fails with DuplicateRecord if any record is
  /// already present. Does not bump the version (callers commit once).
  void insert(const GraphDelta& delta) {
    for (const auto& e : delta.entities)
      if (entities_.count(e.id))
        throw Error(ErrorCode::DuplicateRecord, "record " + e.record_id + " already ingested");
    for (const auto& e : delta.entities) {
      entities_.emplace(e.id, e);
      owned_[e.id];
    }
    for (const auto& a : delta.attributes) add_attribute_unchecked(a);
  }

  /// Adds one derived attribute to an existing entity. Returns false when
  /// an attribute with the same id is already present.
  bool add_derived_attribute(const AttributeNode& a) {
    if (attributes_.count(a.id)) return false;
    if (!entities_.count(a.owner)) throw Error(ErrorCode::UnknownNode, a.owner);
    add_attribute_unchecked(a);
    return true;
  }

  /// Sets the exclusion flag on an entity or attribute node.
  void set_excluded(const std::string& node_id, bool excluded) {
    if (auto it = entities_.find(node_id); it != entities_.end()) {
      it->second.excluded = excluded;
    } else if (auto at = attributes_.find(node_id); at != attributes_.end()) {
      at->second.excluded = excluded;
    } else {
      throw Error(ErrorCode::UnknownNode, "no node '" + node_id + "'");
    }
  }

  void annotate(const std::string& node_id, const std::string& note) {
    auto it = entities_.find(node_id);
    if (it == entities_.end()) {
      auto at = attributes_.find(node_id);
      if (at == attributes_.end()) throw Error(ErrorCode::UnknownNode, "no node '" + node_id + "'");
      it = entities_.find(at->second.owner);
    }
    it->second.annotations.push_back(note);
  }

  void insert_edge(const CrossMatchEdge& e) {
    edges_.emplace(e.id, e);
    incident_[e.a].insert(e.id);
    incident_[e.b].insert(e.id);
  }

  CrossMatchEdge& edge_ref(const std::string& id) {
    auto it = edges_.find(id);
    if (it == edges_.end()) throw Error(ErrorCode::UnknownEdge, "no edge '" + id + "'");
    return it->second;
  }

  // -- lookup --------------------------------------------------------------

  /// Attribute nodes of `kind` whose canonical text equals `value`,
  /// optionally restricted to one role. Excluded nodes are included.
  std::vector<std::string> lookup(AttributeKind kind, std::optional<Role> role,
                                  const std::string& value) const {
    std::vector<std::string> out;
    auto it = value_index_.find({kind, value});
    if (it == value_index_.end()) return out;
    for (const auto& id : it->second)
      if (!role || attributes_.at(id).value.role == *role) out.push_back(id);
    return out;
  }

  /// Numeric kinds only: attribute nodes with lo <= number <= hi.
  std::vector<std::string> lookup_range(AttributeKind kind, std::optional<Role> role,
                                        std::int64_t lo, std::int64_t hi) const {
    std::vector<std::string> out;
    auto it = numeric_index_.find(kind);
    if (it == numeric_index_.end() || lo > hi) return out;
    for (auto p = it->second.lower_bound({lo, std::string()});
         p != it->second.end() && p->first <= hi; ++p)
      if (!role || attributes_.at(p->second).value.role == *role) out.push_back(p->second);
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Ids of all attributes of `kind`, ordered by id.
  const std::set<std::string>& attributes_of_kind(AttributeKind kind) const {
    static const std::set<std::string> kNone;
    auto it = kind_index_.find(kind);
    return it == kind_index_.end() ? kNone : it->second;
  }

 private:
  template <typename Map>
  static const typename Map::mapped_type* find_in(const Map& m, const std::string& id) {
    auto it = m.find(id);
    return it == m.end() ? nullptr : &it->second;
  }

  void add_attribute_unchecked(const AttributeNode& a) {
    attributes_.emplace(a.id, a);
    owned_[a.owner].push_back(a.id);
    auto& bucket = value_index_[{a.value.kind, a.value.text}];
    bucket.insert(std::lower_bound(bucket.begin(), bucket.end(), a.id), a.id);
    kind_index_[a.value.kind].insert(a.id);
    if (is_numeric(a.value.kind)) numeric_index_[a.value.kind].insert({a.value.number, a.id});
  }

  std::uint64_t version_ = 0;
  std::map<std::string, SourceDescriptor> sources_;
  std::map<std::string, EntityNode> entities_;
  std::map<std::string, AttributeNode> attributes_;
  std::map<std::string, CrossMatchEdge> edges_;
  std::map<std::string, std::vector<std::string>> owned_;
  std::map<std::string, std::set<std::string>> incident_;
  std::map<std::pair<AttributeKind, std::string>, std::vector<std::string>> value_index_;
  std::map<AttributeKind, std::set<std::pair<std::int64_t, std::string>>> numeric_index_;
  std::map<AttributeKind, std::set<std::string>> kind_index_;
};

// ---------------------------------------------------------------------------
// export document

/// Serialises a document; bytes that are not UTF-8 become U+FFFD instead of
/// failing, since evidence text is arbitrary.
inline std::string dump_json(const nlohmann::json& j, int indent = -1) {
  return j.dump(indent, ' ', false, nlohmann::json::error_handler_t::replace);
}

inline nlohmann::json to_json(const SourceDescriptor& s) {
  return {{"source_id", s.source_id},
          {"source_kind", std::string(to_string(s.source_kind))},
          {"entity_kind", std::string(to_string(s.entity_kind))},
          {"display_name", s.display_name},
          {"ingested_at", s.ingested_at},
          {"original_uri", s.original_uri},
          {"utc_offset_seconds", s.options.utc_offset_seconds},
          {"size_units", s.options.size_units == SizeUnits::binary ? "binary" : "decimal"}};
}

inline SourceDescriptor source_from_json(const nlohmann::json& j) {
  SourceDescriptor s;
  s.source_id = j.at("source_id").get<std::string>();
  s.source_kind = parse_source_kind(j.at("source_kind").get<std::string>());
  s.entity_kind = parse_entity_kind(j.at("entity_kind").get<std::string>());
  s.display_name = j.value("display_name", "");
  s.ingested_at = j.value("ingested_at", std::int64_t{0});
  s.original_uri = j.value("original_uri", "");
  s.options.utc_offset_seconds = j.value("utc_offset_seconds", std::int64_t{0});
  s.options.size_units = j.value("size_units", "decimal") == "binary" ? SizeUnits::binary
                                                                       : SizeUnits::decimal;
  return s;
}

inline nlohmann::json to_json(const CrossMatchEdge& e) {
  return {{"id", e.id},
          {"endpoints", {e.a, e.b}},
          {"rule_id", e.rule_id ? nlohmann::json(*e.rule_id) : nlohmann::json(nullptr)},
          {"stage", std::string(to_string(e.stage))},
          {"status", std::string(to_string(e.status))},
          {"created_by", e.created_by},
          {"note", e.note}};
}

/// The graph export document: `nodes[]` and `edges[]` ordered by id.
inline nlohmann::json export_document(const CaseGraph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  nlohmann::json sources = nlohmann::json::array();
  for (const auto& [id, s] : g.sources()) sources.push_back(to_json(s));

  std::map<std::string, nlohmann::json> ordered;
  for (const auto& [id, e] : g.entities()) {
    ordered[id] = {{"id", id},
                   {"label", std::string(to_string(e.entity_kind))},
                   {"kind", "entity"},
                   {"role", "none"},
                   {"value", e.record_id},
                   {"source_id", e.source_id},
                   {"line", e.line_number},
                   {"raw_line", e.raw_line},
                   {"excluded", e.excluded},
                   {"annotations", e.annotations}};
  }
  for (const auto& [id, a] : g.attributes()) {
    nlohmann::json n = {{"id", id},
                        {"label", attribute_label(a.value)},
                        {"kind", std::string(to_string(a.value.kind))},
                        {"role", std::string(to_string(a.value.role))},
                        {"value", a.value.text},
                        {"raw_text", a.raw_text},
                        {"owner", a.owner},
                        {"excluded", a.excluded}};
    if (!a.derived_from.empty()) n["derived_from"] = a.derived_from;
    ordered[id] = std::move(n);
  }
  for (auto& [id, n] : ordered) nodes.push_back(std::move(n));

  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [id, e] : g.edges()) edges.push_back(to_json(e));
  return {{"version", g.version()}, {"sources", sources}, {"nodes", nodes}, {"edges", edges}};
}

/// Registers the source (if new) and adds the delta as one committed change.
inline void apply_delta(CaseGraph& g, const SourceDescriptor& source, const GraphDelta& delta) {
  g.insert(delta);
  g.add_source(source);
  g.bump();
}

inline void exclude_node(CaseGraph& g, const std::string& node_id) {
  g.set_excluded(node_id, true);
  g.bump();
}

inline void include_node(CaseGraph& g, const std::string& node_id) {
  g.set_excluded(node_id, false);
  g.bump();
}

}  // namespace evigraph
