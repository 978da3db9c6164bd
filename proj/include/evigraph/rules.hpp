#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "evigraph/error.hpp"
#include "evigraph/graph.hpp"
#include "evigraph/types.hpp"

namespace evigraph {

enum class Comparator { exact_equal, within_tolerance, alias_equal };

constexpr std::string_view to_string(Comparator c) {
  switch (c) {
    case Comparator::exact_equal: return "exact_equal";
    case Comparator::within_tolerance: return "within_tolerance";
    case Comparator::alias_equal: return "alias_equal";
  }
  return "?";
}

inline Comparator parse_comparator(std::string_view s) {
  if (s == "exact_equal") return Comparator::exact_equal;
  if (s == "within_tolerance") return Comparator::within_tolerance;
  if (s == "alias_equal") return Comparator::alias_equal;
  throw Error(ErrorCode::BadRule, "unknown comparator '" + std::string(s) + "'");
}

/// One side of a rule's kind pair. An empty role set is a wildcard.
struct RuleSide {
  AttributeKind kind = AttributeKind::free_text;
  std::set<Role> roles;

  bool accepts(const NormalizedValue& v) const {
    return v.kind == kind && (roles.empty() || roles.count(v.role) != 0);
  }
};

/// Equivalence classes over an alias list. Canonical member of a class is
/// its lexicographically smallest value.
class AliasTable {
 public:
  AliasTable() = default;
  explicit AliasTable(std::vector<std::pair<std::string, std::string>> pairs)
      : pairs_(std::move(pairs)) {
    std::map<std::string, std::vector<std::string>> adjacent;
    for (const auto& [a, b] : pairs_) {
      adjacent[a].push_back(b);
      adjacent[b].push_back(a);
    }
    for (const auto& [start, unused] : adjacent) {
      if (canon_.count(start)) continue;
      std::vector<std::string> members{start};
      std::set<std::string> seen{start};
      for (std::size_t i = 0; i < members.size(); ++i)
        for (const auto& next : adjacent[members[i]])
          if (seen.insert(next).second) members.push_back(next);
      const std::string root = *seen.begin();
      for (const auto& m : members) canon_[m] = root;
    }
  }

  std::string canonical(const std::string& value) const {
    auto it = canon_.find(value);
    return it == canon_.end() ? value : it->second;
  }

  const std::vector<std::pair<std::string, std::string>>& pairs() const { return pairs_; }

 private:
  std::vector<std::pair<std::string, std::string>> pairs_;
  std::map<std::string, std::string> canon_;
};

/// A knowledge-warehouse predicate deciding when two attribute nodes match.
struct MatchRule {
  std::string rule_id;
  std::string name;
  RuleSide left;
  RuleSide right;
  Comparator comparator = Comparator::exact_equal;
  std::optional<std::int64_t> tolerance;
  std::optional<AliasTable> aliases;
  bool enabled = true;

  void validate() const {
    auto fail = [&](const std::string& why) { return Error(ErrorCode::BadRule, rule_id + ": " + why); };
    if (rule_id.empty()) throw Error(ErrorCode::BadRule, "rule without id");
    if (tolerance && *tolerance < 0) throw fail("negative tolerance");
    if (comparator == Comparator::within_tolerance) {
      if (!is_numeric(left.kind) || !is_numeric(right.kind))
        throw fail("within_tolerance needs numeric attribute kinds");
      if (!tolerance) throw fail("within_tolerance needs a tolerance");
    }
    if (comparator == Comparator::alias_equal && !aliases) throw fail("alias_equal needs an alias_table");
  }

  bool sides_fit(const NormalizedValue& x, const NormalizedValue& y) const {
    return (left.accepts(x) && right.accepts(y)) || (left.accepts(y) && right.accepts(x));
  }

  bool values_match(const NormalizedValue& x, const NormalizedValue& y) const {
    switch (comparator) {
      case Comparator::exact_equal:
        return is_numeric(x.kind) && is_numeric(y.kind) ? x.number == y.number : x.text == y.text;
      case Comparator::within_tolerance: {
        const __int128 d = static_cast<__int128>(x.number) - y.number;
        return (d < 0 ? -d : d) <= tolerance.value_or(0);
      }
      case Comparator::alias_equal:
        return aliases->canonical(x.text) == aliases->canonical(y.text);
    }
    return false;
  }

  bool matches(const NormalizedValue& x, const NormalizedValue& y) const {
    return sides_fit(x, y) && values_match(x, y);
  }
};

struct RuleSet {
  std::vector<MatchRule> rules;

  const MatchRule* find(const std::string& id) const {
    for (const auto& r : rules)
      if (r.rule_id == id) return &r;
    return nullptr;
  }
};

namespace detail {

inline RuleSide side_from_json(const nlohmann::json& j) {
  RuleSide s;
  s.kind = parse_attribute_kind(j.at("kind").get<std::string>());
  if (j.contains("roles"))
    for (const auto& r : j.at("roles")) s.roles.insert(parse_role(r.get<std::string>()));
  return s;
}

inline nlohmann::json side_to_json(const RuleSide& s) {
  nlohmann::json j = {{"kind", std::string(to_string(s.kind))}};
  if (!s.roles.empty()) {
    j["roles"] = nlohmann::json::array();
    for (auto r : s.roles) j["roles"].push_back(std::string(to_string(r)));
  }
  return j;
}

}  // namespace detail

inline MatchRule rule_from_json(const nlohmann::json& j) {
  MatchRule r;
  try {
    r.rule_id = j.at("id").get<std::string>();
    r.name = j.value("name", r.rule_id);
    r.left = detail::side_from_json(j.at("left"));
    r.right = j.contains("right") ? detail::side_from_json(j.at("right")) : r.left;
    r.comparator = parse_comparator(j.at("comparator").get<std::string>());
    if (j.contains("tolerance") && !j.at("tolerance").is_null())
      r.tolerance = j.at("tolerance").get<std::int64_t>();
    if (j.contains("alias_table") && !j.at("alias_table").is_null())
      r.aliases = AliasTable(j.at("alias_table").get<std::vector<std::pair<std::string, std::string>>>());
    r.enabled = j.value("enabled", true);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadRule, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::BadRule) throw;
    throw Error(ErrorCode::BadRule, e.detail());
  }
  r.validate();
  return r;
}

inline nlohmann::json to_json(const MatchRule& r) {
  nlohmann::json j = {{"id", r.rule_id},
                      {"name", r.name},
                      {"left", detail::side_to_json(r.left)},
                      {"right", detail::side_to_json(r.right)},
                      {"comparator", std::string(to_string(r.comparator))},
                      {"tolerance", r.tolerance ? nlohmann::json(*r.tolerance) : nlohmann::json(nullptr)},
                      {"enabled", r.enabled}};
  j["alias_table"] = r.aliases ? nlohmann::json(r.aliases->pairs()) : nlohmann::json(nullptr);
  return j;
}

inline RuleSet rules_from_json(const nlohmann::json& doc) {
  RuleSet set;
  std::set<std::string> ids;
  try {
    for (const auto& j : doc.at("rules")) {
      set.rules.push_back(rule_from_json(j));
      if (!ids.insert(set.rules.back().rule_id).second)
        throw Error(ErrorCode::BadRule, "duplicate rule id " + set.rules.back().rule_id);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadRule, e.what());
  }
  return set;
}

inline nlohmann::json to_json(const RuleSet& set) {
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& r : set.rules) rules.push_back(to_json(r));
  return {{"rules", rules}};
}

/// The bundled rule file (data/rules.json carries the same document).
inline constexpr std::string_view kDefaultRulesJson = R"json({
  "rules": [
    {"id": "ip_equal", "name": "Same IPv4 address",
     "left": {"kind": "ipv4"}, "comparator": "exact_equal", "enabled": true},
    {"id": "timestamp_equal", "name": "Same instant",
     "left": {"kind": "timestamp"}, "comparator": "within_tolerance", "tolerance": 0, "enabled": true},
    {"id": "timestamp_near", "name": "Within five minutes",
     "left": {"kind": "timestamp"}, "comparator": "within_tolerance", "tolerance": 300, "enabled": false},
    {"id": "username_equal", "name": "Same username",
     "left": {"kind": "username"}, "comparator": "exact_equal", "enabled": true},
    {"id": "size_equal", "name": "Same size in bytes",
     "left": {"kind": "file_size"}, "comparator": "within_tolerance", "tolerance": 0, "enabled": true},
    {"id": "port_equal", "name": "Same port number",
     "left": {"kind": "port"}, "comparator": "exact_equal", "enabled": false},
    {"id": "mac_equal", "name": "Same MAC address",
     "left": {"kind": "mac"}, "comparator": "exact_equal", "enabled": true},
    {"id": "protocol_alias_equal", "name": "Same protocol family",
     "left": {"kind": "protocol"}, "comparator": "alias_equal",
     "alias_table": [["sshv2", "ssh"], ["https", "https"]], "enabled": true},
    {"id": "host_equal", "name": "Same host name",
     "left": {"kind": "host"}, "comparator": "exact_equal", "enabled": true}
  ]
}
)json";

inline RuleSet default_rules() { return rules_from_json(nlohmann::json::parse(kDefaultRulesJson)); }

}  // namespace evigraph
