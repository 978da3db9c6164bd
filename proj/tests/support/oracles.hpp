#pragma once

// Straightforward reference implementations used to check the indexed
// engine. They share data types with the library but none of its lookup
// structures.

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "evigraph/analytics.hpp"
#include "evigraph/graph.hpp"
#include "evigraph/rules.hpp"

namespace evigraph::test {

class UnionFind {
 public:
  std::string find(const std::string& x) {
    auto it = parent_.find(x);
    if (it == parent_.end()) {
      parent_[x] = x;
      return x;
    }
    if (it->second == x) return x;
    const auto root = find(it->second);
    parent_[x] = root;
    return root;
  }
  void unite(const std::string& a, const std::string& b) {
    const auto ra = find(a), rb = find(b);
    if (ra != rb) parent_[std::max(ra, rb)] = std::min(ra, rb);
  }

 private:
  std::map<std::string, std::string> parent_;
};

inline bool oracle_side(const RuleSide& side, const NormalizedValue& v) {
  if (v.kind != side.kind) return false;
  return side.roles.empty() || std::find(side.roles.begin(), side.roles.end(), v.role) != side.roles.end();
}

inline bool oracle_rule_match(const MatchRule& rule, const NormalizedValue& x, const NormalizedValue& y,
                              UnionFind* aliases = nullptr) {
  const bool fits = (oracle_side(rule.left, x) && oracle_side(rule.right, y)) ||
                    (oracle_side(rule.left, y) && oracle_side(rule.right, x));
  if (!fits) return false;
  switch (rule.comparator) {
    case Comparator::exact_equal:
      if (is_numeric(x.kind) && is_numeric(y.kind)) return x.number == y.number;
      return x.text == y.text;
    case Comparator::within_tolerance: {
      const long double d = static_cast<long double>(x.number) - static_cast<long double>(y.number);
      return (d < 0 ? -d : d) <= static_cast<long double>(*rule.tolerance);
    }
    case Comparator::alias_equal: {
      UnionFind local;
      if (!aliases) {
        for (const auto& [a, b] : rule.aliases->pairs()) local.unite(a, b);
        aliases = &local;
      }
      return aliases->find(x.text) == aliases->find(y.text);
    }
  }
  return false;
}

/// All-pairs refine1: keys "a|b|rule" of new proposals.
inline std::set<std::string> brute_refine1(const CaseGraph& g, const RuleSet& rules) {
  std::vector<const AttributeNode*> nodes;
  for (const auto& [id, a] : g.attributes()) nodes.push_back(&a);
  std::set<std::string> existing;
  for (const auto& [id, e] : g.edges()) existing.insert(edge_key(e.a, e.b, e.rule_id));
  std::map<std::string, UnionFind> alias_sets;
  for (const auto& rule : rules.rules)
    if (rule.aliases)
      for (const auto& [a, b] : rule.aliases->pairs()) alias_sets[rule.rule_id].unite(a, b);
  std::set<std::string> out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& x = *nodes[i];
    const auto& ox = g.entities().at(x.owner);
    if (x.excluded || ox.excluded) continue;
    for (std::size_t j = i + 1; j < nodes.size(); ++j) {
      const auto& y = *nodes[j];
      const auto& oy = g.entities().at(y.owner);
      if (y.excluded || oy.excluded || ox.source_id == oy.source_id) continue;
      for (const auto& rule : rules.rules) {
        if (!rule.enabled) continue;
        auto it = alias_sets.find(rule.rule_id);
        if (!oracle_rule_match(rule, x.value, y.value, it == alias_sets.end() ? nullptr : &it->second)) continue;
        const auto key = edge_key(x.id, y.id, rule.rule_id);
        if (!existing.count(key)) out.insert(key);
      }
    }
  }
  return out;
}

inline std::set<std::string> keys_of(const std::vector<CrossMatchEdge>& edges) {
  std::set<std::string> out;
  for (const auto& e : edges) out.insert(edge_key(e.a, e.b, e.rule_id));
  return out;
}

/// Linear-scan query evaluation.
inline std::vector<QueryHit> scan_query(const CaseGraph& g, const Probe& probe) {
  if (probe.kind == ProbeKind::time_window ? probe.window.lo > probe.window.hi : probe.value.empty())
    throw Error(ErrorCode::BadProbe, "unsatisfiable probe");
  std::optional<AttributeKind> kind;
  switch (probe.kind) {
    case ProbeKind::username: kind = AttributeKind::username; break;
    case ProbeKind::ip: kind = AttributeKind::ipv4; break;
    case ProbeKind::email: kind = AttributeKind::email; break;
    case ProbeKind::geolocation: kind = AttributeKind::geolocation; break;
    default: break;
  }
  std::string want;
  try {
    if (kind) want = normalize_value(*kind, Role::none, probe.value).text;
  } catch (const Error& e) {
    throw Error(ErrorCode::BadProbe, e.detail());
  }
  std::string needle = probe.value;
  for (auto& c : needle) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  std::map<std::string, std::vector<std::string>> by_entity;
  for (const auto& [id, a] : g.attributes()) {
    if (a.excluded || g.entities().at(a.owner).excluded) continue;
    bool hit = false;
    if (kind) {
      hit = a.value.kind == *kind && a.value.text == want;
    } else if (probe.kind == ProbeKind::time_window) {
      hit = a.value.kind == AttributeKind::timestamp && a.value.number >= probe.window.lo &&
            a.value.number <= probe.window.hi;
    } else {
      std::string hay = a.raw_text;
      for (auto& c : hay) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      hit = hay.find(needle) != std::string::npos;
    }
    if (hit) by_entity[a.owner].push_back(id);
  }
  std::vector<QueryHit> out;
  for (auto& [e, attrs] : by_entity) out.push_back({e, attrs});
  return out;
}

/// Entity components via union-find over visible confirmed edges.
inline std::set<std::set<std::string>> union_find_components(const CaseGraph& g) {
  UnionFind uf;
  for (const auto& [id, e] : g.entities())
    if (!e.excluded) uf.find(id);
  for (const auto& [id, e] : g.edges()) {
    if (e.status != EdgeStatus::confirmed) continue;
    const auto& a = g.attributes().at(e.a);
    const auto& b = g.attributes().at(e.b);
    if (a.excluded || b.excluded || g.entities().at(a.owner).excluded || g.entities().at(b.owner).excluded) continue;
    uf.unite(a.owner, b.owner);
  }
  std::map<std::string, std::set<std::string>> groups;
  for (const auto& [id, e] : g.entities())
    if (!e.excluded) groups[uf.find(id)].insert(id);
  std::set<std::set<std::string>> out;
  for (auto& [root, members] : groups) out.insert(members);
  return out;
}

/// Every simple entity path up to `max_hops` cross edges, by exhaustive DFS.
inline std::set<std::vector<std::string>> brute_links(const CaseGraph& g, const std::string& from,
                                                      const std::string& to, std::size_t max_hops,
                                                      bool include_proposed = false) {
  std::set<std::vector<std::string>> out;
  if (g.entities().at(from).excluded || g.entities().at(to).excluded) return out;
  if (from == to) {
    out.insert({from});
    return out;
  }
  std::vector<std::string> path{from};
  std::set<std::string> used{from};
  std::function<void(const std::string&)> dfs = [&](const std::string& u) {
    if (u == to) {
      out.insert(path);
      return;
    }
    if ((path.size() - 1) / 4 >= max_hops) return;
    for (const auto& [id, e] : g.edges()) {
      if (!g.visible(e, include_proposed)) continue;
      for (int side = 0; side < 2; ++side) {
        const auto& here = side == 0 ? e.a : e.b;
        const auto& there = side == 0 ? e.b : e.a;
        if (g.attributes().at(here).owner != u) continue;
        const auto& next = g.attributes().at(there).owner;
        if (next == u || used.count(next)) continue;
        used.insert(next);
        path.insert(path.end(), {here, id, there, next});
        dfs(next);
        path.resize(path.size() - 4);
        used.erase(next);
      }
    }
  };
  dfs(from);
  return out;
}

}  // namespace evigraph::test
