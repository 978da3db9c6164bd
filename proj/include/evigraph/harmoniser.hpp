#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "evigraph/error.hpp"
#include "evigraph/graph.hpp"
#include "evigraph/ids.hpp"
#include "evigraph/normalize.hpp"
#include "evigraph/rules.hpp"

namespace evigraph {

// ---------------------------------------------------------------------------
// Refine 1: rule-driven proposals

namespace detail {

/// Attribute nodes a rule may pair: visible and accepted by either side.
inline std::vector<const AttributeNode*> rule_candidates(const CaseGraph& g, const MatchRule& rule) {
  std::vector<const AttributeNode*> out;
  std::set<AttributeKind> kinds{rule.left.kind, rule.right.kind};
  for (auto kind : kinds)
    for (const auto& id : g.attributes_of_kind(kind)) {
      const auto& a = g.attributes().at(id);
      if (!g.visible(a)) continue;
      if (rule.left.accepts(a.value) || rule.right.accepts(a.value)) out.push_back(&a);
    }
  return out;
}

inline std::string block_key(const MatchRule& rule, const NormalizedValue& v) {
  if (rule.comparator == Comparator::alias_equal) return rule.aliases->canonical(v.text);
  if (is_numeric(v.kind)) return std::to_string(v.number);
  return v.text;
}

}  // namespace detail

using PairFilter = std::function<bool(const AttributeNode&, const AttributeNode&)>;

/// Proposes one refine1_auto edge for every cross-source pair of visible
/// attribute nodes that satisfies an enabled rule and has no edge yet for
/// that rule. Exact and alias rules block on a hash of the canonical value;
/// tolerance rules scan a sorted window. Pure; output ordered by edge id.
inline std::vector<CrossMatchEdge> refine1(const CaseGraph& g, const RuleSet& rules,
                                           const PairFilter& filter = {}) {
  std::map<std::string, CrossMatchEdge> proposals;
  auto consider = [&](const MatchRule& rule, const AttributeNode& x, const AttributeNode& y) {
    const auto& ex = g.owner_of(x);
    const auto& ey = g.owner_of(y);
    if (ex.id == ey.id || ex.source_id == ey.source_id) return;
    if (!rule.matches(x.value, y.value)) return;
    if (filter && !filter(x, y)) return;
    const std::string id = make_edge_id(x.id, y.id, rule.rule_id);
    if (g.find_edge(id) || proposals.count(id)) return;
    CrossMatchEdge e;
    e.id = id;
    std::tie(e.a, e.b) = std::minmax(x.id, y.id);
    e.rule_id = rule.rule_id;
    e.stage = EdgeStage::refine1_auto;
    e.status = EdgeStatus::proposed;
    proposals.emplace(id, std::move(e));
  };

  for (const auto& rule : rules.rules) {
    if (!rule.enabled) continue;
    auto nodes = detail::rule_candidates(g, rule);
    if (rule.comparator == Comparator::within_tolerance) {
      std::sort(nodes.begin(), nodes.end(), [](const AttributeNode* p, const AttributeNode* q) {
        return std::tie(p->value.number, p->id) < std::tie(q->value.number, q->id);
      });
      const std::int64_t tol = rule.tolerance.value_or(0);
      for (std::size_t i = 0; i < nodes.size(); ++i)
        for (std::size_t j = i + 1;
             j < nodes.size() && static_cast<__int128>(nodes[j]->value.number) - nodes[i]->value.number <= tol;
             ++j)
          consider(rule, *nodes[i], *nodes[j]);
    } else {
      std::map<std::string, std::vector<const AttributeNode*>> blocks;
      for (const auto* n : nodes) blocks[detail::block_key(rule, n->value)].push_back(n);
      for (const auto& [key, block] : blocks)
        for (std::size_t i = 0; i < block.size(); ++i)
          for (std::size_t j = i + 1; j < block.size(); ++j) consider(rule, *block[i], *block[j]);
    }
  }
  std::vector<CrossMatchEdge> out;
  for (auto& [id, e] : proposals) out.push_back(std::move(e));
  return out;
}

struct Refine1Report {
  std::vector<CrossMatchEdge> proposed;
  std::map<std::string, std::size_t> per_rule;
};

/// Runs refine1 and inserts the proposals as one committed change.
inline Refine1Report apply_refine1(CaseGraph& g, const RuleSet& rules) {
  Refine1Report report;
  report.proposed = refine1(g, rules);
  for (const auto& r : rules.rules)
    if (r.enabled) report.per_rule[r.rule_id] = 0;
  for (const auto& e : report.proposed) {
    g.insert_edge(e);
    ++report.per_rule[*e.rule_id];
  }
  g.bump();
  return report;
}

// ---------------------------------------------------------------------------
// Refine 2: investigator actions

inline const CrossMatchEdge& confirm_edge(CaseGraph& g, const std::string& edge_id) {
  auto& e = g.edge_ref(edge_id);
  if (e.status != EdgeStatus::proposed)
    throw Error(ErrorCode::IllegalTransition,
                "edge " + edge_id + " is " + std::string(to_string(e.status)) + ", not proposed");
  e.status = EdgeStatus::confirmed;
  g.bump();
  return e;
}

inline const CrossMatchEdge& reject_edge(CaseGraph& g, const std::string& edge_id) {
  auto& e = g.edge_ref(edge_id);
  if (e.status != EdgeStatus::proposed)
    throw Error(ErrorCode::IllegalTransition,
                "edge " + edge_id + " is " + std::string(to_string(e.status)) + ", not proposed");
  e.status = EdgeStatus::rejected;
  g.bump();
  return e;
}

/// Investigator-authored match; any attribute kinds, born confirmed.
inline const CrossMatchEdge& add_manual_edge(CaseGraph& g, const std::string& attr_a,
                                             const std::string& attr_b, const std::string& note,
                                             const std::string& actor) {
  const auto* a = g.find_attribute(attr_a);
  const auto* b = g.find_attribute(attr_b);
  if (!a) throw Error(ErrorCode::UnknownNode, "no attribute '" + attr_a + "'");
  if (!b) throw Error(ErrorCode::UnknownNode, "no attribute '" + attr_b + "'");
  if (a->owner == b->owner)
    throw Error(ErrorCode::SelfMatch, "both attributes belong to entity " + a->owner);
  const std::string id = make_edge_id(attr_a, attr_b, std::nullopt);
  if (g.find_edge(id)) throw Error(ErrorCode::DuplicateEdge, "manual edge " + id + " exists");
  CrossMatchEdge e;
  e.id = id;
  std::tie(e.a, e.b) = std::minmax(attr_a, attr_b);
  e.stage = EdgeStage::refine2_manual;
  e.status = EdgeStatus::confirmed;
  e.created_by = actor;
  e.note = note;
  g.insert_edge(e);
  g.bump();
  return *g.find_edge(id);
}

// ---------------------------------------------------------------------------
// enrichment

enum class EnrichmentKind { identity_directory, ip_asset_inventory, protocol_alias };

constexpr std::string_view to_string(EnrichmentKind k) {
  switch (k) {
    case EnrichmentKind::identity_directory: return "identity_directory";
    case EnrichmentKind::ip_asset_inventory: return "ip_asset_inventory";
    case EnrichmentKind::protocol_alias: return "protocol_alias";
  }
  return "?";
}

/// Contextual knowledge: value -> value mappings of one kind.
struct EnrichmentRecord {
  EnrichmentKind kind = EnrichmentKind::identity_directory;
  std::vector<std::pair<std::string, std::string>> entries;
  std::string provenance;

  /// Canonicalised entries; throws BadEnrichment unless the mapping is a
  /// function with well-formed keys and values.
  std::map<std::string, std::string> validated() const {
    std::map<std::string, std::string> out;
    for (const auto& [from, to] : entries) {
      std::string key, value;
      try {
        switch (kind) {
          case EnrichmentKind::identity_directory:
            key = looks_like_email(from) ? normalize_email(from) : normalize_identity(from);
            value = normalize_identity(to);
            break;
          case EnrichmentKind::ip_asset_inventory:
            key = normalize_ipv4(from);
            value = to_lower(trim(to));
            break;
          case EnrichmentKind::protocol_alias:
            key = normalize_protocol(from);
            value = normalize_protocol(to);
            break;
        }
      } catch (const Error& e) {
        throw Error(ErrorCode::BadEnrichment, e.detail());
      }
      if (value.empty()) throw Error(ErrorCode::BadEnrichment, "empty target for '" + from + "'");
      auto [it, inserted] = out.emplace(key, value);
      if (!inserted && it->second != value)
        throw Error(ErrorCode::BadEnrichment, "'" + key + "' maps to both '" + it->second +
                                                  "' and '" + value + "'");
    }
    return out;
  }

  static EnrichmentRecord from_json(const nlohmann::json& j) {
    EnrichmentRecord r;
    try {
      const auto kind = j.at("kind").get<std::string>();
      if (kind == "identity_directory") r.kind = EnrichmentKind::identity_directory;
      else if (kind == "ip_asset_inventory") r.kind = EnrichmentKind::ip_asset_inventory;
      else if (kind == "protocol_alias") r.kind = EnrichmentKind::protocol_alias;
      else throw Error(ErrorCode::BadEnrichment, "unknown enrichment kind '" + kind + "'");
      const auto& entries = j.at("entries");
      if (entries.is_object()) {
        for (const auto& [k, v] : entries.items()) r.entries.emplace_back(k, v.get<std::string>());
      } else {
        r.entries = entries.get<std::vector<std::pair<std::string, std::string>>>();
      }
      r.provenance = j.value("provenance", "");
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::BadEnrichment, e.what());
    }
    return r;
  }

  nlohmann::json to_json() const {
    return {{"kind", std::string(to_string(kind))}, {"entries", entries}, {"provenance", provenance}};
  }
};

/// Adds derived attributes from `enrichment`, then proposes edges only for
/// pairs involving a new attribute. Existing edges keep their status.
/// One committed change.
inline std::vector<CrossMatchEdge> apply_enrichment(CaseGraph& g, const EnrichmentRecord& enrichment,
                                                    const RuleSet& rules) {
  const auto mapping = enrichment.validated();
  std::vector<AttributeNode> derived;
  auto derive = [&](const AttributeNode& base, AttributeKind kind, Role role, const std::string& value) {
    AttributeNode a;
    a.id = make_id("a-", base.id + "|" + std::string(to_string(kind)) + "|" + value);
    a.owner = base.owner;
    a.value = NormalizedValue{kind, role, value, 0};
    a.raw_text = base.raw_text;
    a.column = base.column;
    a.derived_from = base.id;
    derived.push_back(std::move(a));
  };
  for (const auto& [id, a] : g.attributes()) {
    if (!a.derived_from.empty()) continue;
    const auto& v = a.value;
    switch (enrichment.kind) {
      case EnrichmentKind::identity_directory:
        if (v.kind == AttributeKind::email || v.kind == AttributeKind::username)
          if (auto it = mapping.find(v.text); it != mapping.end() &&
                                               !(v.kind == AttributeKind::username && it->second == v.text))
            derive(a, AttributeKind::username, v.role, it->second);
        break;
      case EnrichmentKind::ip_asset_inventory:
        if (v.kind == AttributeKind::ipv4)
          if (auto it = mapping.find(v.text); it != mapping.end())
            derive(a, AttributeKind::host, Role::none, it->second);
        break;
      case EnrichmentKind::protocol_alias:
        if (v.kind == AttributeKind::protocol)
          if (auto it = mapping.find(v.text); it != mapping.end() && it->second != v.text)
            derive(a, AttributeKind::protocol, v.role, it->second);
        break;
    }
  }
  std::set<std::string> fresh;
  for (const auto& a : derived)
    if (g.add_derived_attribute(a)) fresh.insert(a.id);
  auto edges = refine1(g, rules, [&](const AttributeNode& x, const AttributeNode& y) {
    return fresh.count(x.id) || fresh.count(y.id);
  });
  for (const auto& e : edges) g.insert_edge(e);
  g.bump();
  return edges;
}

// ---------------------------------------------------------------------------
// validation

enum class FindingKind { contradiction, orphan, duplicate_row };

constexpr std::string_view to_string(FindingKind k) {
  switch (k) {
    case FindingKind::contradiction: return "contradiction";
    case FindingKind::orphan: return "orphan";
    case FindingKind::duplicate_row: return "duplicate_row";
  }
  return "?";
}

struct ValidationFinding {
  FindingKind kind = FindingKind::orphan;
  std::vector<std::string> subjects;
  std::string message;
};

/// Advisory consistency checks; never mutates the graph.
inline std::vector<ValidationFinding> validate_graph(const CaseGraph& g, const RuleSet& rules) {
  std::vector<ValidationFinding> findings;

  for (const auto& [id, e] : g.edges()) {
    if (e.status != EdgeStatus::confirmed || !e.rule_id) continue;
    const auto* rule = rules.find(*e.rule_id);
    if (!rule) continue;
    const auto& a = g.attributes().at(e.a);
    const auto& b = g.attributes().at(e.b);
    if (!rule->matches(a.value, b.value))
      findings.push_back({FindingKind::contradiction, {id, e.a, e.b},
                          "confirmed edge no longer satisfies rule " + *e.rule_id});
  }

  for (const auto& [id, ent] : g.entities()) {
    if (ent.excluded) continue;
    bool linked = false;
    for (const auto& aid : g.attributes_of(id)) {
      for (const auto& eid : g.edges_of(aid))
        if (g.edges().at(eid).status == EdgeStatus::confirmed) linked = true;
      if (linked) break;
    }
    if (!linked) findings.push_back({FindingKind::orphan, {id}, "entity has no confirmed edge"});
  }

  std::map<std::pair<SourceKind, std::string>, std::vector<const EntityNode*>> rows;
  for (const auto& [id, ent] : g.entities()) {
    const auto* src = g.find_source(ent.source_id);
    rows[{src ? src->source_kind : SourceKind::generic_tabular, std::string(trim(ent.raw_line))}]
        .push_back(&ent);
  }
  for (const auto& [key, group] : rows) {
    std::set<std::string> sources;
    for (const auto* e : group) sources.insert(e->source_id);
    if (sources.size() < 2) continue;
    ValidationFinding f{FindingKind::duplicate_row, {}, "identical row in " +
                                                            std::to_string(sources.size()) +
                                                            " sources"};
    for (const auto* e : group) f.subjects.push_back(e->id);
    findings.push_back(std::move(f));
  }
  return findings;
}

inline nlohmann::json to_json(const ValidationFinding& f) {
  return {{"kind", std::string(to_string(f.kind))}, {"subjects", f.subjects}, {"message", f.message}};
}

// ---------------------------------------------------------------------------
// refinement actions

enum class ActionVerb { confirm_edge, reject_edge, add_manual_edge, exclude_node, include_node, annotate };

constexpr std::string_view to_string(ActionVerb v) {
  switch (v) {
    case ActionVerb::confirm_edge: return "confirm_edge";
    case ActionVerb::reject_edge: return "reject_edge";
    case ActionVerb::add_manual_edge: return "add_manual_edge";
    case ActionVerb::exclude_node: return "exclude_node";
    case ActionVerb::include_node: return "include_node";
    case ActionVerb::annotate: return "annotate";
  }
  return "?";
}

inline ActionVerb parse_action_verb(std::string_view s) {
  for (auto v : {ActionVerb::confirm_edge, ActionVerb::reject_edge, ActionVerb::add_manual_edge,
                 ActionVerb::exclude_node, ActionVerb::include_node, ActionVerb::annotate})
    if (to_string(v) == s) return v;
  throw Error(ErrorCode::BadValue, "unknown action verb '" + std::string(s) + "'");
}

/// One Refine-2 step. `target` is the edge or node id; `other` is the second
/// endpoint of a manual edge; `text` carries a note or annotation.
struct RefinementAction {
  ActionVerb verb = ActionVerb::annotate;
  std::string target;
  std::string other;
  std::string text;
  std::string actor{"investigator"};

  nlohmann::json to_json() const {
    nlohmann::json j = {{"verb", std::string(to_string(verb))}, {"target", target}, {"actor", actor}};
    if (!other.empty()) j["other"] = other;
    if (!text.empty()) j["text"] = text;
    return j;
  }

  static RefinementAction from_json(const nlohmann::json& j) {
    RefinementAction a;
    a.verb = parse_action_verb(j.at("verb").get<std::string>());
    a.target = j.at("target").get<std::string>();
    a.other = j.value("other", "");
    a.text = j.value("text", "");
    a.actor = j.value("actor", "investigator");
    return a;
  }
};

/// Applies one action; each successful action bumps the version once.
inline void apply_action(CaseGraph& g, const RefinementAction& a) {
  switch (a.verb) {
    case ActionVerb::confirm_edge: confirm_edge(g, a.target); break;
    case ActionVerb::reject_edge: reject_edge(g, a.target); break;
    case ActionVerb::add_manual_edge: add_manual_edge(g, a.target, a.other, a.text, a.actor); break;
    case ActionVerb::exclude_node: exclude_node(g, a.target); break;
    case ActionVerb::include_node: include_node(g, a.target); break;
    case ActionVerb::annotate:
      g.annotate(a.target, a.text);
      g.bump();
      break;
  }
}

}  // namespace evigraph
