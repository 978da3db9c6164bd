#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "evigraph/csv.hpp"
#include "evigraph/error.hpp"
#include "evigraph/graph.hpp"
#include "evigraph/normalize.hpp"

namespace evigraph {

// ---------------------------------------------------------------------------
// classification map

/// Maps (source kind, event type) to the category/type columns of the
/// timeline and names the attribute shown as the event's subject.
struct Classification {
  SourceKind source_kind = SourceKind::generic_tabular;
  std::string event_type{"*"};
  std::string category;
  std::string type;
  std::optional<AttributeKind> subject_kind;
  std::optional<Role> subject_role;
  std::string subject_label;
};

struct ClassificationMap {
  std::vector<Classification> entries;

  /// Exact event-type match first (case-insensitive), then the "*" entry.
  const Classification* find(SourceKind kind, std::string_view event_type) const {
    const Classification* wildcard = nullptr;
    for (const auto& c : entries) {
      if (c.source_kind != kind) continue;
      if (c.event_type == "*") {
        if (!wildcard) wildcard = &c;
      } else if (!event_type.empty() && iequals(c.event_type, event_type)) {
        return &c;
      }
    }
    return wildcard;
  }

  static ClassificationMap from_json(const nlohmann::json& doc) {
    ClassificationMap map;
    try {
      for (const auto& j : doc.at("classifications")) {
        Classification c;
        c.source_kind = parse_source_kind(j.at("source_kind").get<std::string>());
        c.event_type = j.value("event_type", "*");
        c.category = j.at("category").get<std::string>();
        c.type = j.at("type").get<std::string>();
        if (j.contains("subject")) {
          const auto& s = j.at("subject");
          c.subject_kind = parse_attribute_kind(s.at("kind").get<std::string>());
          if (s.contains("role")) c.subject_role = parse_role(s.at("role").get<std::string>());
          c.subject_label = s.value("label", std::string(to_string(*c.subject_kind)));
        }
        map.entries.push_back(std::move(c));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::BadValue, std::string("classification map: ") + e.what());
    }
    return map;
  }
};

inline constexpr std::string_view kDefaultClassificationJson = R"json({
  "classifications": [
    {"source_kind": "cloud_audit", "event_type": "*", "category": "Development", "type": "AI model",
     "subject": {"kind": "file_name", "label": "Model name"}},
    {"source_kind": "cloud_audit", "event_type": "Access permission", "category": "Security",
     "type": "Access permission", "subject": {"kind": "username", "label": "Username"}},
    {"source_kind": "cloud_audit", "event_type": "Cloud server deployment", "category": "Deployment",
     "type": "Cloud server", "subject": {"kind": "username", "label": "Username"}},
    {"source_kind": "generic_tabular", "event_type": "SSH logon", "category": "Connection",
     "type": "SSH", "subject": {"kind": "username", "label": "Username"}},
    {"source_kind": "syslog", "event_type": "Logon", "category": "Security", "type": "Logged in",
     "subject": {"kind": "username", "label": "Username"}},
    {"source_kind": "firewall_log", "event_type": "Logon", "category": "Security", "type": "Logged in",
     "subject": {"kind": "username", "label": "Username"}},
    {"source_kind": "syslog", "event_type": "Incident detection", "category": "Security",
     "type": "Incident detection", "subject": {"kind": "device_name", "label": "Device"}},
    {"source_kind": "network_log", "event_type": "*", "category": "Network", "type": "Transmission",
     "subject": {"kind": "ipv4", "role": "source", "label": "IP"}},
    {"source_kind": "memory_artifact", "event_type": "*", "category": "Connection", "type": "Process",
     "subject": {"kind": "process_name", "label": "Process"}}
  ]
}
)json";

inline ClassificationMap default_classification() {
  return ClassificationMap::from_json(nlohmann::json::parse(kDefaultClassificationJson));
}

// ---------------------------------------------------------------------------
// timeline

struct TimelineEvent {
  std::int64_t epoch = 0;
  std::string timestamp_attribute;  // "Created" or "Accessed"
  std::string category;
  std::string type;
  std::string attribute;
  std::string value;
  std::string metadata_source;
  std::string attribute_id;
  std::string entity_id;
  std::string source_id;
  std::string record_id;

  std::string date() const { return format_timestamp(epoch, "%d/%m/%Y"); }
  std::string time() const { return format_timestamp(epoch, "%H:%M:%S"); }
};

struct TimeWindow {
  std::int64_t lo = std::numeric_limits<std::int64_t>::min();
  std::int64_t hi = std::numeric_limits<std::int64_t>::max();
};

/// One event per visible timestamp attribute inside the window, ascending by
/// epoch; ties fall back to (source id, record id, attribute id).
inline std::vector<TimelineEvent> build_timeline(const CaseGraph& g, const ClassificationMap& classes,
                                                 std::optional<TimeWindow> window = std::nullopt) {
  if (window && window->lo > window->hi)
    throw Error(ErrorCode::BadWindow, "window start " + std::to_string(window->lo) + " is after end " +
                                          std::to_string(window->hi));
  std::vector<TimelineEvent> events;
  for (const auto& id : g.attributes_of_kind(AttributeKind::timestamp)) {
    const auto& ts = g.attributes().at(id);
    if (!g.visible(ts)) continue;
    if (window && (ts.value.number < window->lo || ts.value.number > window->hi)) continue;
    const auto& entity = g.owner_of(ts);
    const auto* source = g.find_source(entity.source_id);

    std::string event_type;
    for (const auto& aid : g.attributes_of(entity.id)) {
      const auto& a = g.attributes().at(aid);
      if (a.value.kind == AttributeKind::event_type) {
        event_type = a.raw_text;
        break;
      }
    }
    TimelineEvent ev;
    ev.epoch = ts.value.number;
    ev.timestamp_attribute = ts.value.role == Role::accessed ? "Accessed" : "Created";
    ev.metadata_source = source ? source->display_name : entity.source_id;
    ev.attribute_id = id;
    ev.entity_id = entity.id;
    ev.source_id = entity.source_id;
    ev.record_id = entity.record_id;
    const Classification* c = source ? classes.find(source->source_kind, event_type) : nullptr;
    if (c) {
      ev.category = c->category;
      ev.type = c->type;
      if (c->subject_kind) {
        ev.attribute = c->subject_label;
        for (const auto& aid : g.attributes_of(entity.id)) {
          const auto& a = g.attributes().at(aid);
          if (a.value.kind != *c->subject_kind || !g.visible(a) || !a.derived_from.empty()) continue;
          if (c->subject_role && a.value.role != *c->subject_role) continue;
          ev.value = a.raw_text;
          break;
        }
      }
    } else {
      ev.category = "Uncategorised";
      ev.type = event_type.empty() ? std::string(source ? to_string(source->source_kind) : "") : event_type;
    }
    events.push_back(std::move(ev));
  }
  std::sort(events.begin(), events.end(), [](const TimelineEvent& x, const TimelineEvent& y) {
    return std::tie(x.epoch, x.source_id, x.record_id, x.attribute_id) <
           std::tie(y.epoch, y.source_id, y.record_id, y.attribute_id);
  });
  return events;
}

inline constexpr std::string_view kTimelineCsvHeader =
    "date,time,timestamp_attribute,category,type,attribute,value,metadata_source";

inline std::string timeline_csv(const std::vector<TimelineEvent>& events) {
  std::string out(kTimelineCsvHeader);
  out += '\n';
  for (const auto& e : events) {
    out += csv::join({e.date(), e.time(), e.timestamp_attribute, e.category, e.type, e.attribute, e.value,
                      e.metadata_source});
    out += '\n';
  }
  return out;
}

inline nlohmann::json to_json(const TimelineEvent& e) {
  return {{"epoch", e.epoch},           {"date", e.date()},
          {"time", e.time()},           {"timestamp_attribute", e.timestamp_attribute},
          {"category", e.category},     {"type", e.type},
          {"attribute", e.attribute},   {"value", e.value},
          {"metadata_source", e.metadata_source}, {"attribute_id", e.attribute_id},
          {"entity_id", e.entity_id}};
}

/// Smallest window covering the investigator-flagged timestamp attributes.
inline std::optional<TimeWindow> suspicious_window(const std::vector<TimelineEvent>& events,
                                                   const std::set<std::string>& flagged) {
  std::optional<TimeWindow> w;
  for (const auto& e : events) {
    if (!flagged.count(e.attribute_id)) continue;
    if (!w) w = TimeWindow{e.epoch, e.epoch};
    w->lo = std::min(w->lo, e.epoch);
    w->hi = std::max(w->hi, e.epoch);
  }
  return w;
}

// ---------------------------------------------------------------------------
// link analysis

/// Alternating entity / attribute / edge / attribute / entity ids.
struct LinkPath {
  std::vector<std::string> elements;
  std::size_t hop_count = 0;

  friend bool operator==(const LinkPath&, const LinkPath&) = default;
};

struct LinkOptions {
  std::size_t max_hops = 6;
  std::size_t max_paths = 1000;
  bool include_proposed = false;
};

namespace detail {

struct Hop {
  std::string neighbor;
  std::string edge;
  std::string from_attr;
  std::string to_attr;

  friend bool operator<(const Hop& x, const Hop& y) {
    return std::tie(x.neighbor, x.edge) < std::tie(y.neighbor, y.edge);
  }
};

inline std::map<std::string, std::vector<Hop>> entity_adjacency(const CaseGraph& g, bool include_proposed) {
  std::map<std::string, std::vector<Hop>> adj;
  for (const auto& [id, e] : g.edges()) {
    if (!g.visible(e, include_proposed)) continue;
    const auto& ea = g.attributes().at(e.a).owner;
    const auto& eb = g.attributes().at(e.b).owner;
    if (ea == eb) continue;
    adj[ea].push_back({eb, id, e.a, e.b});
    adj[eb].push_back({ea, id, e.b, e.a});
  }
  for (auto& [id, hops] : adj) std::sort(hops.begin(), hops.end());
  return adj;
}

}  // namespace detail

/// Simple entity-to-entity paths through visible cross-match edges, up to
/// `max_hops` edges and `max_paths` results, shortest first.
inline std::vector<LinkPath> find_links(const CaseGraph& g, const std::string& from, const std::string& to,
                                        const LinkOptions& options = {}) {
  const auto* src = g.find_entity(from);
  const auto* dst = g.find_entity(to);
  if (!src) throw Error(ErrorCode::UnknownNode, "no entity '" + from + "'");
  if (!dst) throw Error(ErrorCode::UnknownNode, "no entity '" + to + "'");
  std::vector<LinkPath> paths;
  if (src->excluded || dst->excluded || options.max_paths == 0) return paths;
  if (from == to) {
    paths.push_back({{from}, 0});
    return paths;
  }
  const auto adj = detail::entity_adjacency(g, options.include_proposed);

  // Hop distance to the target bounds every partial path.
  std::map<std::string, std::size_t> dist{{to, 0}};
  std::queue<std::string> frontier;
  frontier.push(to);
  while (!frontier.empty()) {
    const auto u = frontier.front();
    frontier.pop();
    auto it = adj.find(u);
    if (it == adj.end()) continue;
    for (const auto& h : it->second)
      if (dist.emplace(h.neighbor, dist[u] + 1).second) frontier.push(h.neighbor);
  }
  if (!dist.count(from)) return paths;

  std::set<std::string> on_path{from};
  std::vector<std::string> elements{from};
  for (std::size_t depth = dist[from]; depth <= options.max_hops && paths.size() < options.max_paths; ++depth) {
    std::function<void(const std::string&, std::size_t)> walk = [&](const std::string& u, std::size_t left) {
      if (paths.size() >= options.max_paths) return;
      if (left == 0) {
        if (u == to) paths.push_back({elements, depth});
        return;
      }
      auto it = adj.find(u);
      if (it == adj.end()) return;
      for (const auto& h : it->second) {
        if (on_path.count(h.neighbor)) continue;
        auto d = dist.find(h.neighbor);
        if (d == dist.end() || d->second > left - 1) continue;
        if (h.neighbor == to && left != 1) continue;
        on_path.insert(h.neighbor);
        elements.insert(elements.end(), {h.from_attr, h.edge, h.to_attr, h.neighbor});
        walk(h.neighbor, left - 1);
        elements.resize(elements.size() - 4);
        on_path.erase(h.neighbor);
        if (paths.size() >= options.max_paths) return;
      }
    };
    walk(from, depth);
  }
  return paths;
}

/// Groups visible entities into components joined by visible cross-match
/// edges. Each component is sorted; components are ordered by first member.
inline std::vector<std::vector<std::string>> connected_components(const CaseGraph& g,
                                                                   bool include_proposed = false) {
  const auto adj = detail::entity_adjacency(g, include_proposed);
  std::set<std::string> seen;
  std::vector<std::vector<std::string>> out;
  for (const auto& [id, ent] : g.entities()) {
    if (ent.excluded || seen.count(id)) continue;
    std::vector<std::string> comp{id};
    seen.insert(id);
    for (std::size_t i = 0; i < comp.size(); ++i) {
      auto it = adj.find(comp[i]);
      if (it == adj.end()) continue;
      for (const auto& h : it->second)
        if (seen.insert(h.neighbor).second) comp.push_back(h.neighbor);
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(std::move(comp));
  }
  return out;
}

inline nlohmann::json to_json(const LinkPath& p) {
  return {{"elements", p.elements}, {"hop_count", p.hop_count}};
}

// ---------------------------------------------------------------------------
// correlation

struct EdgeCounts {
  std::size_t confirmed = 0;
  std::size_t proposed = 0;

  friend bool operator==(const EdgeCounts&, const EdgeCounts&) = default;
};

/// Confirmed / proposed cross-match counts per ordered pair of sources.
/// Symmetric; same-source pairs never appear.
struct CorrelationMatrix {
  std::vector<std::string> sources;
  std::map<std::pair<std::string, std::string>, EdgeCounts> cells;

  EdgeCounts at(const std::string& x, const std::string& y) const {
    auto it = cells.find({x, y});
    return it == cells.end() ? EdgeCounts{} : it->second;
  }

  /// Sum over all source pairs whose kinds are (kx, ky).
  EdgeCounts by_kind(const CaseGraph& g, SourceKind kx, SourceKind ky) const {
    EdgeCounts total;
    for (const auto& [key, counts] : cells) {
      const auto* sx = g.find_source(key.first);
      const auto* sy = g.find_source(key.second);
      if (sx && sy && sx->source_kind == kx && sy->source_kind == ky) {
        total.confirmed += counts.confirmed;
        total.proposed += counts.proposed;
      }
    }
    return total;
  }
};

inline CorrelationMatrix correlate_sources(const CaseGraph& g) {
  CorrelationMatrix m;
  for (const auto& [id, s] : g.sources()) m.sources.push_back(id);
  for (const auto& [id, e] : g.edges()) {
    if (!g.visible(e, true)) continue;
    const auto& sa = g.owner_of(g.attributes().at(e.a)).source_id;
    const auto& sb = g.owner_of(g.attributes().at(e.b)).source_id;
    if (sa == sb) continue;
    for (auto key : {std::make_pair(sa, sb), std::make_pair(sb, sa)}) {
      auto& c = m.cells[key];
      (e.status == EdgeStatus::confirmed ? c.confirmed : c.proposed) += 1;
    }
  }
  return m;
}

inline nlohmann::json to_json(const CaseGraph& g, const CorrelationMatrix& m) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& [key, c] : m.cells) {
    const auto* sx = g.find_source(key.first);
    const auto* sy = g.find_source(key.second);
    cells.push_back({{"from", key.first},
                     {"to", key.second},
                     {"from_kind", sx ? std::string(to_string(sx->source_kind)) : ""},
                     {"to_kind", sy ? std::string(to_string(sy->source_kind)) : ""},
                     {"confirmed", c.confirmed},
                     {"proposed", c.proposed}});
  }
  return {{"sources", m.sources}, {"cells", cells}};
}

// ---------------------------------------------------------------------------
// built-in queries

enum class ProbeKind { username, ip, email, keyword, time_window, geolocation };

inline ProbeKind parse_probe_kind(std::string_view s) {
  if (s == "username") return ProbeKind::username;
  if (s == "ip") return ProbeKind::ip;
  if (s == "email") return ProbeKind::email;
  if (s == "keyword") return ProbeKind::keyword;
  if (s == "time_window") return ProbeKind::time_window;
  if (s == "geolocation") return ProbeKind::geolocation;
  throw Error(ErrorCode::BadProbe, "unknown probe kind '" + std::string(s) + "'");
}

struct Probe {
  ProbeKind kind = ProbeKind::keyword;
  std::string value;
  TimeWindow window;

  /// Builds a probe from text; time windows are "lo..hi" where each bound is
  /// epoch seconds or a timestamp in the default pattern.
  static Probe parse(std::string_view kind, std::string_view value) {
    Probe p;
    p.kind = parse_probe_kind(kind);
    p.value = std::string(trim(value));
    if (p.kind == ProbeKind::time_window) {
      const auto sep = p.value.find("..");
      if (sep == std::string::npos) throw Error(ErrorCode::BadProbe, "time window needs 'lo..hi'");
      auto bound = [](std::string_view t) -> std::int64_t {
        t = trim(t);
        const bool negative = !t.empty() && t.front() == '-';
        if (all_digits(negative ? t.substr(1) : t) && t.size() < 19) return std::stoll(std::string(t));
        return normalize_timestamp(t);
      };
      try {
        p.window = {bound(std::string_view(p.value).substr(0, sep)),
                    bound(std::string_view(p.value).substr(sep + 2))};
      } catch (const Error& e) {
        throw Error(ErrorCode::BadProbe, e.detail());
      }
    }
    return p;
  }
};

struct QueryHit {
  std::string entity_id;
  std::vector<std::string> attributes;

  friend bool operator==(const QueryHit&, const QueryHit&) = default;
};

/// Entities owning a visible attribute that matches the probe, ordered by
/// entity id, each with its matching attribute ids for highlighting.
inline std::vector<QueryHit> query(const CaseGraph& g, const Probe& probe) {
  std::vector<std::string> matched;
  auto normalized = [&](AttributeKind kind) {
    if (probe.value.empty()) throw Error(ErrorCode::BadProbe, "empty probe value");
    try {
      return normalize_value(kind, Role::none, probe.value).text;
    } catch (const Error& e) {
      throw Error(ErrorCode::BadProbe, e.detail());
    }
  };
  switch (probe.kind) {
    case ProbeKind::username:
      matched = g.lookup(AttributeKind::username, std::nullopt, normalized(AttributeKind::username));
      break;
    case ProbeKind::ip:
      matched = g.lookup(AttributeKind::ipv4, std::nullopt, normalized(AttributeKind::ipv4));
      break;
    case ProbeKind::email:
      matched = g.lookup(AttributeKind::email, std::nullopt, normalized(AttributeKind::email));
      break;
    case ProbeKind::geolocation:
      matched = g.lookup(AttributeKind::geolocation, std::nullopt, normalized(AttributeKind::geolocation));
      break;
    case ProbeKind::time_window:
      if (probe.window.lo > probe.window.hi) throw Error(ErrorCode::BadProbe, "window start after end");
      matched = g.lookup_range(AttributeKind::timestamp, std::nullopt, probe.window.lo, probe.window.hi);
      break;
    case ProbeKind::keyword: {
      if (probe.value.empty()) throw Error(ErrorCode::BadProbe, "empty keyword");
      const std::string needle = to_lower(probe.value);
      for (const auto& [id, a] : g.attributes())
        if (to_lower(a.raw_text).find(needle) != std::string::npos) matched.push_back(id);
      break;
    }
  }
  std::map<std::string, std::vector<std::string>> by_entity;
  for (const auto& id : matched) {
    const auto& a = g.attributes().at(id);
    if (g.visible(a)) by_entity[a.owner].push_back(id);
  }
  std::vector<QueryHit> hits;
  for (auto& [entity, attrs] : by_entity) {
    std::sort(attrs.begin(), attrs.end());
    hits.push_back({entity, std::move(attrs)});
  }
  return hits;
}

inline nlohmann::json to_json(const QueryHit& h) {
  return {{"entity_id", h.entity_id}, {"attributes", h.attributes}};
}

// ---------------------------------------------------------------------------
// geolocation

inline constexpr std::string_view kUnlocated = "unlocated";

/// Visible entities grouped by geolocation value; entities without one land
/// in the "unlocated" bucket.
inline std::map<std::string, std::vector<std::string>> group_by_geolocation(const CaseGraph& g) {
  std::map<std::string, std::vector<std::string>> buckets;
  for (const auto& [id, e] : g.entities()) {
    if (e.excluded) continue;
    bool located = false;
    for (const auto& aid : g.attributes_of(id)) {
      const auto& a = g.attributes().at(aid);
      if (a.value.kind != AttributeKind::geolocation || !g.visible(a)) continue;
      auto& bucket = buckets[a.value.text];
      if (bucket.empty() || bucket.back() != id) bucket.push_back(id);
      located = true;
    }
    if (!located) buckets[std::string(kUnlocated)].push_back(id);
  }
  return buckets;
}

}  // namespace evigraph
