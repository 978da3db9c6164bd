#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "evigraph/csv.hpp"
#include "evigraph/error.hpp"
#include "evigraph/ids.hpp"
#include "evigraph/normalize.hpp"
#include "evigraph/types.hpp"

namespace evigraph {

struct SourceOptions {
  std::int64_t utc_offset_seconds = 0;
  SizeUnits size_units = SizeUnits::decimal;
};

struct SourceDescriptor {
  std::string source_id;
  SourceKind source_kind = SourceKind::generic_tabular;
  EntityKind entity_kind = EntityKind::generic;
  std::string display_name;
  std::int64_t ingested_at = 0;
  std::string original_uri;
  SourceOptions options;
};

/// Entity label a source gets when the investigator does not choose one.
constexpr EntityKind default_entity_kind(SourceKind kind) {
  switch (kind) {
    case SourceKind::network_log: return EntityKind::nl;
    case SourceKind::memory_artifact: return EntityKind::m;
    case SourceKind::syslog:
    case SourceKind::firewall_log: return EntityKind::slog;
    default: return EntityKind::generic;
  }
}

/// Content-derived id: the same bytes ingested as the same kind always land
/// on the same source, which makes re-ingestion idempotent.
inline std::string make_source_id(SourceKind kind, EntityKind entity,
                                  std::string_view bytes,
                                  std::string_view mapping = {}) {
  std::string key(to_string(kind));
  key += '\0';
  key += to_string(entity);
  key += '\0';
  key += mapping;
  key += '\0';
  key += bytes;
  return make_id("src-", key);
}

struct RecordAttribute {
  NormalizedValue value;
  std::string raw_text;
  std::string column;

  friend bool operator==(const RecordAttribute&,
                         const RecordAttribute&) = default;
};

struct EvidenceRecord {
  std::string record_id;
  std::string source_id;
  SourceKind source_kind = SourceKind::generic_tabular;
  EntityKind entity_kind = EntityKind::generic;
  std::vector<RecordAttribute> attributes;
  std::string raw_line;
  std::size_t line_number = 0;
};

struct IngestWarning {
  std::size_t line = 0;
  std::string message;
};

struct SkippedLine {
  std::size_t line = 0;
  std::string raw_line;
};

struct ParseResult {
  std::vector<EvidenceRecord> records;
  std::vector<IngestWarning> warnings;
  /// Rows rejected as MalformedRow; ingestion continued past them.
  std::vector<Error> row_errors;
  /// Every input line that produced no record (header, blanks, bad rows).
  std::vector<SkippedLine> skipped;
};

struct ColumnMapping {
  std::string column;
  AttributeKind kind = AttributeKind::free_text;
  Role role = Role::none;
};

/// "Source MAC" and "source_mac" name the same column.
inline std::string column_key(std::string_view cell) {
  auto key = to_lower(trim(cell));
  std::replace(key.begin(), key.end(), ' ', '_');
  return key;
}

/// Column map for sources without a built-in schema.
struct MappingConfig {
  std::vector<ColumnMapping> columns;
  std::string timestamp_format{kDefaultTimestampFormat};
  EntityKind entity_kind = EntityKind::generic;

  static MappingConfig from_json(const nlohmann::json& doc) {
    MappingConfig cfg;
    try {
      if (doc.contains("timestamp_format"))
        cfg.timestamp_format = doc.at("timestamp_format").get<std::string>();
      if (doc.contains("entity_kind"))
        cfg.entity_kind =
            parse_entity_kind(doc.at("entity_kind").get<std::string>());
      std::set<std::string> seen;
      for (const auto& c : doc.at("columns")) {
        ColumnMapping m;
        m.column = column_key(c.at("column").get<std::string>());
        m.kind = parse_attribute_kind(c.at("kind").get<std::string>());
        if (c.contains("role")) m.role = parse_role(c.at("role").get<std::string>());
        if (!seen.insert(m.column).second)
          throw Error(ErrorCode::BadMapping, "column '" + m.column + "' mapped twice");
        cfg.columns.push_back(m);
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::BadMapping, e.what());
    } catch (const Error& e) {
      if (e.code() == ErrorCode::BadMapping) throw;
      throw Error(ErrorCode::BadMapping, e.detail());
    }
    if (cfg.columns.empty())
      throw Error(ErrorCode::BadMapping, "mapping has no columns");
    return cfg;
  }

  nlohmann::json to_json() const {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : columns)
      cols.push_back({{"column", c.column},
                      {"kind", std::string(to_string(c.kind))},
                      {"role", std::string(to_string(c.role))}});
    return {{"columns", cols},
            {"timestamp_format", timestamp_format},
            {"entity_kind", std::string(to_string(entity_kind))}};
  }
};

namespace detail {

enum class CellHandler {
  attribute,  // kind + role as given
  endpoint,   // "ip:port" or "ip:service"
  identity,   // username, or email when it contains '@'
};

struct ColumnSpec {
  std::string name;
  CellHandler handler = CellHandler::attribute;
  AttributeKind kind = AttributeKind::free_text;
  Role role = Role::none;
};

struct Schema {
  std::string name;
  std::vector<ColumnSpec> columns;
  std::string timestamp_format{kDefaultTimestampFormat};
};

inline Schema memory_schema() {
  using K = AttributeKind;
  return {"memory",
          {{"process_name", CellHandler::attribute, K::process_name, Role::none},
           {"protocol", CellHandler::attribute, K::protocol, Role::none},
           {"local_address", CellHandler::endpoint, K::ipv4, Role::local},
           {"foreign_address", CellHandler::endpoint, K::ipv4, Role::foreign},
           {"state", CellHandler::attribute, K::connection_state, Role::none},
           {"cpu_time", CellHandler::attribute, K::free_text, Role::none},
           {"elapsed_time", CellHandler::attribute, K::free_text, Role::none}}};
}

inline Schema network_schema() {
  using K = AttributeKind;
  return {"network",
          {{"timestamp", CellHandler::attribute, K::timestamp, Role::created},
           {"source_mac", CellHandler::attribute, K::mac, Role::source},
           {"destination_mac", CellHandler::attribute, K::mac, Role::destination},
           {"source_ip", CellHandler::attribute, K::ipv4, Role::source},
           {"destination_ip", CellHandler::attribute, K::ipv4, Role::destination},
           {"source_port", CellHandler::attribute, K::port, Role::source},
           {"destination_port", CellHandler::attribute, K::port, Role::destination},
           {"protocol", CellHandler::attribute, K::protocol, Role::none},
           {"host", CellHandler::attribute, K::host, Role::none}}};
}

inline Schema cloud_schema() {
  using K = AttributeKind;
  return {"cloud",
          {{"file_name", CellHandler::attribute, K::file_name, Role::none},
           {"file_size", CellHandler::attribute, K::file_size, Role::none},
           {"created_by", CellHandler::identity, K::username, Role::created_by},
           {"created_timestamp", CellHandler::attribute, K::timestamp, Role::created},
           {"accessed_by", CellHandler::identity, K::username, Role::accessed_by},
           {"accessed_timestamp", CellHandler::attribute, K::timestamp, Role::accessed}}};
}

inline Schema syslog_schema() {
  using K = AttributeKind;
  return {"syslog",
          {{"device_name", CellHandler::attribute, K::device_name, Role::none},
           {"ip_address", CellHandler::attribute, K::ipv4, Role::none},
           {"event_type", CellHandler::attribute, K::event_type, Role::none},
           {"created_timestamp", CellHandler::attribute, K::timestamp, Role::created},
           {"accessed_by", CellHandler::identity, K::username, Role::accessed_by},
           {"accessed_timestamp", CellHandler::attribute, K::timestamp, Role::accessed}}};
}

inline Schema firewall_schema() {
  Schema s = syslog_schema();
  s.name = "firewall";
  s.columns.push_back(
      {"action", CellHandler::attribute, AttributeKind::free_text, Role::none});
  return s;
}

/// Built-in schemas a source kind may use; the header picks among them.
inline std::vector<Schema> schemas_for(SourceKind kind) {
  switch (kind) {
    case SourceKind::network_log: return {network_schema()};
    case SourceKind::memory_artifact: return {memory_schema()};
    case SourceKind::cloud_audit: return {cloud_schema(), syslog_schema()};
    case SourceKind::syslog: return {syslog_schema()};
    case SourceKind::firewall_log: return {firewall_schema()};
    case SourceKind::generic_tabular: return {};
  }
  return {};
}

inline Schema schema_from_mapping(const MappingConfig& cfg) {
  Schema s;
  s.name = "mapping";
  s.timestamp_format = cfg.timestamp_format;
  for (const auto& c : cfg.columns)
    s.columns.push_back({c.column, CellHandler::attribute, c.kind, c.role});
  return s;
}

inline bool is_missing(std::string_view cell) {
  const auto t = trim(cell);
  return t.empty() || std::all_of(t.begin(), t.end(), [](char c) { return c == '-'; });
}

/// Row context shared by the CSV and JSON-lines front ends.
struct RowBuilder {
  const SourceDescriptor& source;
  EntityKind entity_kind;
  NormalizeOptions options;
  ParseResult& out;

  /// `cells` is aligned with `schema.columns`; nullopt marks an absent cell.
  void build(const Schema& schema,
             const std::vector<std::optional<std::string>>& cells,
             std::string_view raw_line, std::size_t line_number) {
    EvidenceRecord rec;
    rec.source_id = source.source_id;
    rec.source_kind = source.source_kind;
    rec.entity_kind = entity_kind;
    rec.raw_line = std::string(raw_line);
    rec.line_number = line_number;
    rec.record_id = source.source_id + ":" + std::to_string(line_number);

    std::vector<std::string> missing;
    std::vector<std::string> notes;
    try {
      for (std::size_t i = 0; i < schema.columns.size(); ++i) {
        const auto& col = schema.columns[i];
        if (!cells[i] || is_missing(*cells[i])) {
          missing.push_back(col.name);
          continue;
        }
        add_cell(rec, col, *cells[i], notes);
      }
    } catch (const Error& e) {
      reject(raw_line, line_number, e.detail());
      return;
    }
    if (rec.attributes.empty()) {
      reject(raw_line, line_number, "row carries no attributes");
      return;
    }
    if (!missing.empty()) {
      std::string msg = "missing";
      for (std::size_t i = 0; i < missing.size(); ++i)
        msg += (i ? ", " : " ") + missing[i];
      notes.insert(notes.begin(), msg);
    }
    if (!notes.empty()) {
      std::string msg;
      for (std::size_t i = 0; i < notes.size(); ++i) msg += (i ? "; " : "") + notes[i];
      out.warnings.push_back({line_number, msg});
    }
    out.records.push_back(std::move(rec));
  }

  void reject(std::string_view raw_line, std::size_t line_number,
              const std::string& why) {
    out.row_errors.emplace_back(ErrorCode::MalformedRow, why, line_number);
    out.skipped.push_back({line_number, std::string(raw_line)});
  }

 private:
  void push(EvidenceRecord& rec, AttributeKind kind, Role role,
            std::string_view raw, const std::string& column) {
    try {
      rec.attributes.push_back(
          {normalize_value(kind, role, raw, options), std::string(trim(raw)), column});
    } catch (const Error& e) {
      throw Error(e.code(), "column " + column + ": " + e.detail());
    }
  }

  void add_cell(EvidenceRecord& rec, const ColumnSpec& col, std::string_view cell,
                std::vector<std::string>& notes) {
    switch (col.handler) {
      case CellHandler::attribute:
        push(rec, col.kind, col.role, cell, col.name);
        return;
      case CellHandler::identity:
        push(rec, looks_like_email(cell) ? AttributeKind::email : AttributeKind::username,
             col.role, cell, col.name);
        return;
      case CellHandler::endpoint: {
        const auto t = trim(cell);
        const auto colon = t.rfind(':');
        const auto host = colon == std::string_view::npos ? t : t.substr(0, colon);
        push(rec, AttributeKind::ipv4, col.role, host, col.name);
        if (colon == std::string_view::npos) return;
        const auto service = trim(t.substr(colon + 1));
        if (all_digits(service)) {
          push(rec, AttributeKind::port, col.role, service, col.name);
        } else if (auto port = resolve_service(service)) {
          NormalizedValue v{AttributeKind::port, col.role, std::to_string(*port), *port};
          rec.attributes.push_back({v, std::string(service), col.name});
        } else {
          notes.push_back("column " + col.name + ": unknown service '" +
                          std::string(service) + "', port omitted");
        }
        return;
      }
    }
  }
};

inline std::string header_key(std::string_view cell) { return column_key(cell); }

inline std::optional<Schema> match_header(const std::vector<std::string>& header,
                                          const std::vector<Schema>& candidates,
                                          std::vector<std::size_t>& order) {
  for (const auto& schema : candidates) {
    if (schema.columns.size() > header.size()) continue;
    std::vector<std::size_t> positions;
    std::set<std::string> seen;
    bool ok = true;
    for (const auto& cell : header) {
      if (!seen.insert(header_key(cell)).second) ok = false;
    }
    for (const auto& col : schema.columns) {
      auto it = std::find_if(header.begin(), header.end(), [&](const std::string& h) {
        return header_key(h) == col.name;
      });
      if (it == header.end()) {
        ok = false;
        break;
      }
      positions.push_back(static_cast<std::size_t>(it - header.begin()));
    }
    // Built-in schemas take exactly their columns; mappings may ignore extras.
    if (ok && (schema.name == "mapping" || header.size() == schema.columns.size())) {
      order = positions;
      return schema;
    }
  }
  return std::nullopt;
}

inline bool looks_like_json_lines(std::string_view first_line) {
  const auto t = trim(first_line);
  return !t.empty() && t.front() == '{';
}

}  // namespace detail

/// Parses one evidence export into records. CSV sources need a header row
/// naming the schema's columns; JSON-lines sources carry one object per line
/// keyed by the same column names. Bad rows become MalformedRow entries in
/// `row_errors` and parsing continues; an unrecognised layout throws
/// UnknownFormat.
inline ParseResult parse_source(std::string_view bytes, const SourceDescriptor& descriptor,
                                const std::optional<MappingConfig>& config = std::nullopt) {
  ParseResult result;
  std::vector<detail::Schema> candidates;
  EntityKind entity_kind = descriptor.entity_kind;
  if (config) {
    candidates.push_back(detail::schema_from_mapping(*config));
    if (descriptor.entity_kind == EntityKind::generic) entity_kind = config->entity_kind;
  } else {
    candidates = detail::schemas_for(descriptor.source_kind);
    if (candidates.empty())
      throw Error(ErrorCode::UnknownFormat,
                  std::string(to_string(descriptor.source_kind)) +
                      " sources need a mapping config",
                  1);
  }

  const auto lines = csv::lines(bytes);
  std::size_t first = 0;
  while (first < lines.size() && trim(lines[first]).empty()) {
    result.skipped.push_back({first + 1, std::string(lines[first])});
    ++first;
  }
  if (first == lines.size()) return result;

  NormalizeOptions options;
  options.utc_offset_seconds = descriptor.options.utc_offset_seconds;
  options.size_units = descriptor.options.size_units;

  if (detail::looks_like_json_lines(lines[first])) {
    for (std::size_t i = first; i < lines.size(); ++i) {
      const std::size_t line_number = i + 1;
      if (trim(lines[i]).empty()) {
        result.skipped.push_back({line_number, std::string(lines[i])});
        continue;
      }
      auto doc = nlohmann::json::parse(lines[i], nullptr, false);
      if (doc.is_discarded() || !doc.is_object()) {
        detail::RowBuilder{descriptor, entity_kind, options, result}.reject(
            lines[i], line_number, "not a JSON object");
        continue;
      }
      // The candidate whose columns the object covers best wins.
      const detail::Schema* best = nullptr;
      std::size_t best_hits = 0;
      for (const auto& schema : candidates) {
        std::size_t hits = 0;
        for (const auto& col : schema.columns)
          if (doc.contains(col.name)) ++hits;
        if (hits > best_hits) {
          best = &schema;
          best_hits = hits;
        }
      }
      if (!best) {
        detail::RowBuilder{descriptor, entity_kind, options, result}.reject(
            lines[i], line_number, "object has no known column");
        continue;
      }
      options.timestamp_format = best->timestamp_format;
      std::vector<std::optional<std::string>> cells;
      for (const auto& col : best->columns) {
        auto it = doc.find(col.name);
        if (it == doc.end() || it->is_null()) cells.emplace_back();
        else if (it->is_string()) cells.emplace_back(it->get<std::string>());
        else if (it->is_number() || it->is_boolean()) cells.emplace_back(it->dump());
        else cells.emplace_back(std::string{});
      }
      detail::RowBuilder{descriptor, entity_kind, options, result}.build(
          *best, cells, lines[i], line_number);
    }
    return result;
  }

  const auto header = csv::split_line(lines[first]);
  std::vector<std::size_t> order;
  std::optional<detail::Schema> schema;
  if (header) schema = detail::match_header(*header, candidates, order);
  if (!schema) {
    std::string expected;
    for (const auto& c : candidates) {
      expected += expected.empty() ? "" : " | ";
      for (std::size_t i = 0; i < c.columns.size(); ++i)
        expected += (i ? "," : "") + c.columns[i].name;
    }
    throw Error(ErrorCode::UnknownFormat, "header does not match " + expected, first + 1);
  }
  result.skipped.push_back({first + 1, std::string(lines[first])});
  options.timestamp_format = schema->timestamp_format;

  detail::RowBuilder builder{descriptor, entity_kind, options, result};
  for (std::size_t i = first + 1; i < lines.size(); ++i) {
    const std::size_t line_number = i + 1;
    if (trim(lines[i]).empty()) {
      result.skipped.push_back({line_number, std::string(lines[i])});
      continue;
    }
    const auto cells = csv::split_line(lines[i]);
    if (!cells) {
      builder.reject(lines[i], line_number, "unbalanced quotes");
      continue;
    }
    if (cells->size() != header->size()) {
      builder.reject(lines[i], line_number,
                     "expected " + std::to_string(header->size()) + " cells, got " +
                         std::to_string(cells->size()));
      continue;
    }
    std::vector<std::optional<std::string>> aligned;
    for (auto pos : order) aligned.emplace_back((*cells)[pos]);
    builder.build(*schema, aligned, lines[i], line_number);
  }
  return result;
}

}  // namespace evigraph
