#pragma once

#include <random>
#include <string>
#include <vector>

#include "evigraph/graph.hpp"
#include "evigraph/harmoniser.hpp"
#include "evigraph/rules.hpp"

namespace evigraph::test {

using Rng = std::mt19937_64;

template <class T>
const T& pick(Rng& rng, const std::vector<T>& items) {
  return items[std::uniform_int_distribution<std::size_t>(0, items.size() - 1)(rng)];
}

inline int uniform(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
inline bool chance(Rng& rng, double p) { return std::bernoulli_distribution(p)(rng); }

inline const std::vector<AttributeKind>& random_kinds() {
  using K = AttributeKind;
  static const std::vector<K> kinds{K::ipv4,     K::username, K::email,       K::timestamp, K::file_size,
                                    K::port,     K::protocol, K::host,        K::geolocation, K::free_text};
  return kinds;
}

inline const std::vector<Role>& random_roles() {
  static const std::vector<Role> roles{Role::none, Role::source, Role::destination, Role::created, Role::accessed};
  return roles;
}

/// A value drawn from a small pool so that collisions are common.
inline NormalizedValue random_value(Rng& rng, AttributeKind kind, Role role, std::string& raw) {
  using K = AttributeKind;
  NormalizedValue v;
  v.kind = kind;
  v.role = role;
  switch (kind) {
    case K::ipv4: raw = "10.0.0." + std::to_string(uniform(rng, 1, 12)); break;
    case K::username: raw = pick(rng, std::vector<std::string>{"Alex", "bill", "Lisa", "abby", "root"}); break;
    case K::email: raw = pick(rng, std::vector<std::string>{"Alex@AIxz.ai", "bill@aixz.ai", "lisa@aixz.ai"}); break;
    case K::timestamp: raw = std::to_string(1652868605 + uniform(rng, 0, 3600)); break;
    case K::file_size:
      raw = std::to_string(chance(rng, 0.5) ? 4200000000LL + uniform(rng, 0, 50) : uniform(rng, 0, 4096));
      break;
    case K::port: raw = pick(rng, std::vector<std::string>{"22", "443", "52814", "49130", "80"}); break;
    case K::protocol: raw = pick(rng, std::vector<std::string>{"ssh", "sshv2", "https", "tls", "tcp", "udp"}); break;
    case K::host: raw = pick(rng, std::vector<std::string>{"system1", "alex", "server", "bill"}); break;
    case K::geolocation: raw = pick(rng, std::vector<std::string>{"london", "paris", "dublin"}); break;
    default: raw = pick(rng, std::vector<std::string>{"FinAI.h5 upload", "Perimeter firewall", "putty session"}); break;
  }
  if (is_numeric(kind)) {
    v.number = std::stoll(raw);
    v.text = raw;
  } else if (kind == K::username || kind == K::email || kind == K::host) {
    v.text = raw;
    for (auto& c : v.text) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  } else {
    v.text = raw;
  }
  return v;
}

/// A graph of `sources` sources holding about `attributes` attribute nodes.
inline CaseGraph random_graph(Rng& rng, std::size_t attributes, int sources = 4) {
  CaseGraph g;
  std::size_t made = 0;
  for (int s = 0; s < sources; ++s) {
    SourceDescriptor desc;
    desc.source_id = "src-r" + std::to_string(s);
    desc.source_kind = pick(rng, std::vector<SourceKind>{SourceKind::network_log, SourceKind::memory_artifact,
                                                          SourceKind::cloud_audit, SourceKind::syslog,
                                                          SourceKind::generic_tabular});
    desc.entity_kind = default_entity_kind(desc.source_kind);
    desc.display_name = "source " + std::to_string(s);
    std::vector<EvidenceRecord> records;
    const std::size_t budget = s + 1 == sources ? attributes - made : attributes / sources;
    std::size_t line = 2;
    for (std::size_t used = 0; used < budget; ++line) {
      EvidenceRecord rec;
      rec.source_id = desc.source_id;
      rec.source_kind = desc.source_kind;
      rec.entity_kind = desc.entity_kind;
      rec.line_number = line;
      rec.record_id = desc.source_id + ":" + std::to_string(line);
      const int n = std::min<int>(uniform(rng, 1, 6), static_cast<int>(budget - used));
      for (int i = 0; i < n; ++i) {
        std::string raw;
        auto v = random_value(rng, pick(rng, random_kinds()), pick(rng, random_roles()), raw);
        rec.attributes.push_back({v, raw, "c" + std::to_string(i)});
        rec.raw_line += raw + ",";
      }
      used += static_cast<std::size_t>(n);
      records.push_back(std::move(rec));
    }
    made += budget;
    apply_delta(g, desc, build_graph(records));
  }
  return g;
}

inline RuleSide random_side(Rng& rng, AttributeKind kind) {
  RuleSide side;
  side.kind = kind;
  if (chance(rng, 0.4)) {
    const int n = uniform(rng, 1, 2);
    for (int i = 0; i < n; ++i) side.roles.insert(pick(rng, random_roles()));
  }
  return side;
}

inline MatchRule random_rule(Rng& rng, const std::string& id) {
  using K = AttributeKind;
  MatchRule r;
  r.rule_id = id;
  r.name = id;
  r.enabled = chance(rng, 0.85);
  switch (uniform(rng, 0, 2)) {
    case 0: {
      r.comparator = Comparator::exact_equal;
      const auto kind = pick(rng, random_kinds());
      r.left = random_side(rng, kind);
      auto other = kind;
      if (chance(rng, 0.2)) other = kind == K::username ? K::host : K::username;
      r.right = chance(rng, 0.5) ? r.left : random_side(rng, other);
      break;
    }
    case 1: {
      r.comparator = Comparator::within_tolerance;
      const auto kind = pick(rng, std::vector<K>{K::timestamp, K::file_size, K::port});
      r.left = random_side(rng, kind);
      r.right = chance(rng, 0.8) ? random_side(rng, kind) : random_side(rng, K::port);
      r.tolerance = pick(rng, std::vector<std::int64_t>{0, 1, 5, 60, 300, 900});
      break;
    }
    default: {
      r.comparator = Comparator::alias_equal;
      r.left = random_side(rng, K::protocol);
      r.right = r.left;
      const std::vector<std::string> pool{"ssh", "sshv2", "https", "tls", "tcp", "udp"};
      std::vector<std::pair<std::string, std::string>> pairs;
      const int n = uniform(rng, 0, 3);
      for (int i = 0; i < n; ++i) pairs.emplace_back(pick(rng, pool), pick(rng, pool));
      r.aliases = AliasTable(pairs);
      break;
    }
  }
  r.validate();
  return r;
}

inline RuleSet random_rules(Rng& rng) {
  RuleSet set;
  const int n = uniform(rng, 1, 6);
  for (int i = 0; i < n; ++i) set.rules.push_back(random_rule(rng, "r" + std::to_string(i)));
  return set;
}

/// Hides a random share of entity and attribute nodes.
inline void random_exclusions(Rng& rng, CaseGraph& g, double share) {
  std::vector<std::string> ids;
  for (const auto& [id, e] : g.entities()) ids.push_back(id);
  for (const auto& [id, a] : g.attributes()) ids.push_back(id);
  for (const auto& id : ids)
    if (chance(rng, share)) g.set_excluded(id, true);
}

}  // namespace evigraph::test
