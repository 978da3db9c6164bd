#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "evigraph/error.hpp"

namespace evigraph {

enum class SourceKind {
  network_log,
  memory_artifact,
  cloud_audit,
  syslog,
  firewall_log,
  generic_tabular,
};

/// Node labels used for evidence entities.
enum class EntityKind { nl, m, wa, slog, dc, ec, ai, s1, generic };

enum class AttributeKind {
  timestamp,
  ipv4,
  mac,
  port,
  protocol,
  username,
  application_name,
  process_name,
  url,
  file_name,
  file_size,
  email,
  event_type,
  device_name,
  host,
  geolocation,
  connection_state,
  free_text,
};

enum class Role {
  none,
  source,
  destination,
  local,
  foreign,
  created,
  accessed,
  created_by,
  accessed_by,
};

namespace detail {

template <typename E, std::size_t N>
using NameTable = std::array<std::pair<E, std::string_view>, N>;

inline constexpr NameTable<SourceKind, 6> kSourceKindNames{{
    {SourceKind::network_log, "network_log"},
    {SourceKind::memory_artifact, "memory_artifact"},
    {SourceKind::cloud_audit, "cloud_audit"},
    {SourceKind::syslog, "syslog"},
    {SourceKind::firewall_log, "firewall_log"},
    {SourceKind::generic_tabular, "generic_tabular"},
}};

inline constexpr NameTable<EntityKind, 9> kEntityKindNames{{
    {EntityKind::nl, "nl"},
    {EntityKind::m, "m"},
    {EntityKind::wa, "wa"},
    {EntityKind::slog, "slog"},
    {EntityKind::dc, "dc"},
    {EntityKind::ec, "ec"},
    {EntityKind::ai, "ai"},
    {EntityKind::s1, "s1"},
    {EntityKind::generic, "generic"},
}};

inline constexpr NameTable<AttributeKind, 18> kAttributeKindNames{{
    {AttributeKind::timestamp, "timestamp"},
    {AttributeKind::ipv4, "ipv4"},
    {AttributeKind::mac, "mac"},
    {AttributeKind::port, "port"},
    {AttributeKind::protocol, "protocol"},
    {AttributeKind::username, "username"},
    {AttributeKind::application_name, "application_name"},
    {AttributeKind::process_name, "process_name"},
    {AttributeKind::url, "url"},
    {AttributeKind::file_name, "file_name"},
    {AttributeKind::file_size, "file_size"},
    {AttributeKind::email, "email"},
    {AttributeKind::event_type, "event_type"},
    {AttributeKind::device_name, "device_name"},
    {AttributeKind::host, "host"},
    {AttributeKind::geolocation, "geolocation"},
    {AttributeKind::connection_state, "connection_state"},
    {AttributeKind::free_text, "free_text"},
}};

inline constexpr NameTable<Role, 9> kRoleNames{{
    {Role::none, "none"},
    {Role::source, "source"},
    {Role::destination, "destination"},
    {Role::local, "local"},
    {Role::foreign, "foreign"},
    {Role::created, "created"},
    {Role::accessed, "accessed"},
    {Role::created_by, "created_by"},
    {Role::accessed_by, "accessed_by"},
}};

template <typename E, std::size_t N>
constexpr std::string_view name_of(const NameTable<E, N>& table, E value) {
  for (const auto& [e, name] : table)
    if (e == value) return name;
  return "?";
}

template <typename E, std::size_t N>
constexpr std::optional<E> value_of(const NameTable<E, N>& table,
                                    std::string_view name) {
  for (const auto& [e, n] : table)
    if (n == name) return e;
  return std::nullopt;
}

template <typename E, std::size_t N>
E parse_or_throw(const NameTable<E, N>& table, std::string_view name,
                 std::string_view what) {
  if (auto v = value_of(table, name)) return *v;
  throw Error(ErrorCode::BadValue,
              "unknown " + std::string(what) + " '" + std::string(name) + "'");
}

}  // namespace detail

constexpr std::string_view to_string(SourceKind v) {
  return detail::name_of(detail::kSourceKindNames, v);
}
constexpr std::string_view to_string(EntityKind v) {
  return detail::name_of(detail::kEntityKindNames, v);
}
constexpr std::string_view to_string(AttributeKind v) {
  return detail::name_of(detail::kAttributeKindNames, v);
}
constexpr std::string_view to_string(Role v) {
  return detail::name_of(detail::kRoleNames, v);
}

inline SourceKind parse_source_kind(std::string_view s) {
  return detail::parse_or_throw(detail::kSourceKindNames, s, "source kind");
}
inline EntityKind parse_entity_kind(std::string_view s) {
  return detail::parse_or_throw(detail::kEntityKindNames, s, "entity kind");
}
inline AttributeKind parse_attribute_kind(std::string_view s) {
  return detail::parse_or_throw(detail::kAttributeKindNames, s,
                                "attribute kind");
}
inline Role parse_role(std::string_view s) {
  return detail::parse_or_throw(detail::kRoleNames, s, "role");
}

inline constexpr auto all_source_kinds() { return detail::kSourceKindNames; }
inline constexpr auto all_entity_kinds() { return detail::kEntityKindNames; }
inline constexpr auto all_attribute_kinds() {
  return detail::kAttributeKindNames;
}
inline constexpr auto all_roles() { return detail::kRoleNames; }

/// Kinds whose canonical value is an integer (epoch seconds, port, bytes).
constexpr bool is_numeric(AttributeKind kind) {
  return kind == AttributeKind::timestamp || kind == AttributeKind::port ||
         kind == AttributeKind::file_size;
}

/// One typed, canonicalised attribute value. `text` is the canonical
/// rendering for every kind; `number` is meaningful for numeric kinds only.
struct NormalizedValue {
  AttributeKind kind = AttributeKind::free_text;
  Role role = Role::none;
  std::string text;
  std::int64_t number = 0;

  friend bool operator==(const NormalizedValue&,
                         const NormalizedValue&) = default;
};

}  // namespace evigraph
