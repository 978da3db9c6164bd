#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "evigraph/analytics.hpp"
#include "evigraph/error.hpp"
#include "evigraph/graph.hpp"
#include "evigraph/harmoniser.hpp"
#include "evigraph/ingest.hpp"
#include "evigraph/rules.hpp"

namespace evigraph {

namespace fs = std::filesystem;

namespace detail {

inline std::int64_t now_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::StorageError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_all(int fd, std::string_view data, const fs::path& path) {
  while (!data.empty()) {
    const auto n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::StorageError, "write " + path.string() + ": " + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

inline void fsync_path(const fs::path& path, int flags) {
  const int fd = ::open(path.c_str(), flags);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

/// Writes a file durably: temp file, fsync, rename over the target.
inline void write_file_atomic(const fs::path& path, std::string_view data) {
  const fs::path tmp = path.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(ErrorCode::StorageError, "create " + tmp.string() + ": " + std::strerror(errno));
  try {
    write_all(fd, data, tmp);
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::fsync(fd);
  ::close(fd);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::StorageError, "rename " + tmp.string() + ": " + ec.message());
  fsync_path(path.parent_path(), O_RDONLY | O_DIRECTORY);
}

/// Appends one line and fsyncs before returning.
inline void append_durable(const fs::path& path, std::string_view line) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(ErrorCode::StorageError, "open " + path.string() + ": " + std::strerror(errno));
  try {
    write_all(fd, line, path);
  } catch (...) {
    ::close(fd);
    throw;
  }
  if (::fsync(fd) != 0) {
    ::close(fd);
    throw Error(ErrorCode::StorageError, "fsync " + path.string());
  }
  ::close(fd);
}

inline bool valid_case_id(std::string_view id) {
  if (id.empty() || id.size() > 128 || id == "." || id == "..") return false;
  for (char c : id)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) return false;
  return true;
}

}  // namespace detail

/// "AIxz leak" -> "aixz-leak".
inline std::string slugify(std::string_view title) {
  std::string out;
  for (char c : title) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!out.empty() && out.back() != '-') {
      out += '-';
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out.empty() ? "case" : out;
}

struct CaseManifest {
  std::string case_id;
  std::string title;
  std::int64_t created_at = 0;
  std::string rules_file{"rules.json"};
  std::string classification_file{"classification.json"};
  std::vector<SourceDescriptor> sources;
  std::uint64_t version = 0;

  nlohmann::json to_json() const {
    nlohmann::json src = nlohmann::json::array();
    for (const auto& s : sources) src.push_back(evigraph::to_json(s));
    return {{"case_id", case_id},       {"title", title},
            {"created_at", created_at}, {"rules_file", rules_file},
            {"classification_file", classification_file},
            {"sources", src},           {"version", version}};
  }

  static CaseManifest from_json(const nlohmann::json& j) {
    CaseManifest m;
    m.case_id = j.at("case_id").get<std::string>();
    m.title = j.value("title", "");
    m.created_at = j.value("created_at", std::int64_t{0});
    m.rules_file = j.value("rules_file", "rules.json");
    m.classification_file = j.value("classification_file", "classification.json");
    for (const auto& s : j.value("sources", nlohmann::json::array())) m.sources.push_back(source_from_json(s));
    m.version = j.value("version", std::uint64_t{0});
    return m;
  }

  friend bool operator==(const CaseManifest& a, const CaseManifest& b) {
    return a.to_json() == b.to_json();
  }
};

/// What the investigator supplies when adding an evidence file.
struct IngestRequest {
  std::string content;
  SourceKind source_kind = SourceKind::generic_tabular;
  std::optional<EntityKind> entity_kind;
  std::string display_name;
  std::string original_uri;
  SourceOptions options;
  std::optional<MappingConfig> mapping;
};

struct IngestReport {
  std::string source_id;
  std::size_t records = 0;
  std::size_t duplicates = 0;
  std::vector<IngestWarning> warnings;
  std::vector<Error> row_errors;
  std::uint64_t version = 0;
};

inline nlohmann::json to_json(const IngestReport& r) {
  nlohmann::json warnings = nlohmann::json::array();
  for (const auto& w : r.warnings) warnings.push_back({{"line", w.line}, {"message", w.message}});
  nlohmann::json errors = nlohmann::json::array();
  for (const auto& e : r.row_errors)
    errors.push_back({{"line", e.line()}, {"code", std::string(to_string(e.code()))}, {"message", e.detail()}});
  return {{"source_id", r.source_id}, {"records", r.records},   {"duplicates", r.duplicates},
          {"warnings", warnings},     {"row_errors", errors},   {"version", r.version}};
}

/// One open case: the current graph snapshot plus its durable action log.
/// Mutations are serialised; readers take immutable snapshots.
class Case {
 public:
  Case(fs::path dir, CaseManifest manifest, RuleSet rules, ClassificationMap classes)
      : dir_(std::move(dir)),
        manifest_(std::move(manifest)),
        rules_(std::move(rules)),
        classes_(std::move(classes)),
        graph_(std::make_shared<const CaseGraph>()) {}

  const fs::path& dir() const { return dir_; }
  fs::path log_path() const { return dir_ / "actions.jsonl"; }

  CaseManifest manifest() const {
    std::lock_guard lock(read_mutex_);
    return manifest_;
  }
  const RuleSet& rules() const { return rules_; }
  const ClassificationMap& classification() const { return classes_; }

  std::shared_ptr<const CaseGraph> snapshot() const {
    std::lock_guard lock(read_mutex_);
    return graph_;
  }

  std::uint64_t version() const { return snapshot()->version(); }

  IngestReport ingest(const IngestRequest& req, std::optional<std::uint64_t> expected = std::nullopt,
                      const std::string& actor = "investigator") {
    std::lock_guard lock(write_mutex_);
    check_version(expected);
    SourceDescriptor desc;
    desc.source_kind = req.source_kind;
    desc.entity_kind = req.entity_kind ? *req.entity_kind
                       : req.mapping   ? req.mapping->entity_kind
                                       : default_entity_kind(req.source_kind);
    desc.display_name = req.display_name.empty() ? std::string(to_string(req.source_kind)) : req.display_name;
    desc.original_uri = req.original_uri;
    desc.options = req.options;
    desc.source_id = make_source_id(desc.source_kind, desc.entity_kind, req.content,
                                    req.mapping ? dump_json(req.mapping->to_json()) : std::string());
    const CaseGraph& current = *snapshot();
    if (const auto* existing = current.find_source(desc.source_id)) desc = *existing;
    else desc.ingested_at = detail::now_seconds();

    CaseGraph next = current;
    IngestReport report = ingest_into(next, desc, req.content, req.mapping);

    const fs::path stored = dir_ / "sources" / (desc.source_id + ".dat");
    if (!fs::exists(stored)) detail::write_file_atomic(stored, req.content);
    nlohmann::json entry = {{"type", "ingest"},
                            {"source", to_json(desc)},
                            {"mapping", req.mapping ? req.mapping->to_json() : nlohmann::json(nullptr)},
                            {"file", "sources/" + desc.source_id + ".dat"}};
    commit(std::move(next), std::move(entry), actor);
    report.version = version();
    return report;
  }

  Refine1Report harmonise(std::optional<std::uint64_t> expected = std::nullopt,
                          const std::string& actor = "investigator") {
    std::lock_guard lock(write_mutex_);
    check_version(expected);
    CaseGraph next = *snapshot();
    auto report = apply_refine1(next, rules_);
    commit(std::move(next), {{"type", "harmonise"}}, actor);
    return report;
  }

  std::vector<CrossMatchEdge> enrich(const EnrichmentRecord& record,
                                     std::optional<std::uint64_t> expected = std::nullopt,
                                     const std::string& actor = "investigator") {
    std::lock_guard lock(write_mutex_);
    check_version(expected);
    CaseGraph next = *snapshot();
    auto edges = apply_enrichment(next, record, rules_);
    commit(std::move(next), {{"type", "enrich"}, {"enrichment", record.to_json()}}, actor);
    return edges;
  }

  /// Applies one Refine-2 action; returns the new version.
  std::uint64_t act(const RefinementAction& action, std::optional<std::uint64_t> expected = std::nullopt) {
    std::lock_guard lock(write_mutex_);
    check_version(expected);
    CaseGraph next = *snapshot();
    apply_action(next, action);
    commit(std::move(next), {{"type", "action"}, {"action", action.to_json()}}, action.actor);
    return version();
  }

  /// Rebuilds the graph from the action log. A torn final line (crash
  /// mid-append) is dropped and truncated away.
  void replay() {
    std::lock_guard lock(write_mutex_);
    CaseGraph g;
    std::string log;
    if (fs::exists(log_path())) log = detail::read_file(log_path());
    std::size_t good_bytes = 0;
    std::uint64_t seq = 0;
    std::size_t pos = 0;
    while (pos < log.size()) {
      const auto nl = log.find('\n', pos);
      if (nl == std::string::npos) break;
      auto entry = nlohmann::json::parse(std::string_view(log).substr(pos, nl - pos), nullptr, false);
      if (entry.is_discarded()) break;
      if (entry.value("seq", std::uint64_t{0}) != seq + 1)
        throw Error(ErrorCode::StorageError, "action log sequence gap after " + std::to_string(seq));
      apply_entry(g, entry);
      ++seq;
      good_bytes = nl + 1;
      pos = nl + 1;
    }
    if (good_bytes != log.size()) {
      std::error_code ec;
      fs::resize_file(log_path(), good_bytes, ec);
      if (ec) throw Error(ErrorCode::StorageError, "truncate torn log: " + ec.message());
    }
    seq_ = seq;
    install(std::move(g));
    write_manifest();
  }

 private:
  void check_version(std::optional<std::uint64_t> expected) const {
    if (expected && *expected != version())
      throw Error(ErrorCode::VersionConflict, "expected version " + std::to_string(*expected) +
                                                  ", case is at " + std::to_string(version()));
  }

  IngestReport ingest_into(CaseGraph& g, const SourceDescriptor& desc, std::string_view content,
                           const std::optional<MappingConfig>& mapping) const {
    IngestReport report;
    report.source_id = desc.source_id;
    auto parsed = parse_source(content, desc, mapping);
    std::vector<EvidenceRecord> fresh;
    for (auto& r : parsed.records) {
      if (g.has_record(r.record_id)) ++report.duplicates;
      else fresh.push_back(std::move(r));
    }
    report.records = fresh.size();
    report.warnings = std::move(parsed.warnings);
    report.row_errors = std::move(parsed.row_errors);
    apply_delta(g, desc, build_graph(fresh));
    return report;
  }

  void apply_entry(CaseGraph& g, const nlohmann::json& entry) const {
    const auto type = entry.at("type").get<std::string>();
    if (type == "ingest") {
      const auto desc = source_from_json(entry.at("source"));
      std::optional<MappingConfig> mapping;
      if (!entry.at("mapping").is_null()) mapping = MappingConfig::from_json(entry.at("mapping"));
      const auto content = detail::read_file(dir_ / entry.at("file").get<std::string>());
      ingest_into(g, desc, content, mapping);
    } else if (type == "harmonise") {
      apply_refine1(g, rules_);
    } else if (type == "enrich") {
      apply_enrichment(g, EnrichmentRecord::from_json(entry.at("enrichment")), rules_);
    } else if (type == "action") {
      apply_action(g, RefinementAction::from_json(entry.at("action")));
    } else {
      throw Error(ErrorCode::StorageError, "unknown log entry type '" + type + "'");
    }
    if (entry.contains("version") && entry.at("version").get<std::uint64_t>() != g.version())
      throw Error(ErrorCode::StorageError, "replay diverged at seq " + entry.at("seq").dump());
  }

  void commit(CaseGraph next, nlohmann::json entry, const std::string& actor) {
    entry["seq"] = seq_ + 1;
    entry["version"] = next.version();
    entry["actor"] = actor;
    entry["time"] = detail::now_seconds();
    detail::append_durable(log_path(), dump_json(entry) + "\n");
    ++seq_;
    install(std::move(next));
    write_manifest();
  }

  void install(CaseGraph g) {
    auto ptr = std::make_shared<const CaseGraph>(std::move(g));
    std::lock_guard lock(read_mutex_);
    manifest_.sources.clear();
    for (const auto& [id, s] : ptr->sources()) manifest_.sources.push_back(s);
    manifest_.version = ptr->version();
    graph_ = std::move(ptr);
  }

  void write_manifest() {
    detail::write_file_atomic(dir_ / "manifest.json", dump_json(manifest().to_json(), 2) + "\n");
  }

  fs::path dir_;
  CaseManifest manifest_;
  RuleSet rules_;
  ClassificationMap classes_;
  std::shared_ptr<const CaseGraph> graph_;
  std::uint64_t seq_ = 0;
  mutable std::mutex read_mutex_;
  std::mutex write_mutex_;
};

/// A data directory holding one subdirectory per case.
class CaseStore {
 public:
  explicit CaseStore(fs::path data_dir) : data_dir_(std::move(data_dir)) {
    std::error_code ec;
    fs::create_directories(data_dir_, ec);
    if (ec) throw Error(ErrorCode::StorageError, "cannot create " + data_dir_.string() + ": " + ec.message());
  }

  const fs::path& data_dir() const { return data_dir_; }

  /// Creates an empty case at version 0. Rule set and classification map
  /// default to the bundled ones.
  CaseManifest create_case(const std::string& title, std::string case_id = {},
                           std::optional<nlohmann::json> rules = std::nullopt,
                           std::optional<nlohmann::json> classification = std::nullopt) {
    std::lock_guard lock(mutex_);
    if (case_id.empty()) case_id = slugify(title);
    if (!detail::valid_case_id(case_id)) throw Error(ErrorCode::StorageError, "invalid case id '" + case_id + "'");
    const fs::path dir = data_dir_ / case_id;
    if (fs::exists(dir)) throw Error(ErrorCode::StorageError, "case '" + case_id + "' already exists");
    const auto rules_doc = rules ? *rules : nlohmann::json::parse(kDefaultRulesJson);
    const auto class_doc = classification ? *classification : nlohmann::json::parse(kDefaultClassificationJson);
    rules_from_json(rules_doc);
    ClassificationMap::from_json(class_doc);

    std::error_code ec;
    fs::create_directories(dir / "sources", ec);
    if (ec) throw Error(ErrorCode::StorageError, "cannot create " + dir.string() + ": " + ec.message());
    CaseManifest m;
    m.case_id = case_id;
    m.title = title;
    m.created_at = detail::now_seconds();
    detail::write_file_atomic(dir / m.rules_file, dump_json(rules_doc, 2) + "\n");
    detail::write_file_atomic(dir / m.classification_file, dump_json(class_doc, 2) + "\n");
    detail::write_file_atomic(dir / "actions.jsonl", "");
    detail::write_file_atomic(dir / "manifest.json", dump_json(m.to_json(), 2) + "\n");
    return m;
  }

  /// Opens (or returns the already-open) case, replaying its log.
  std::shared_ptr<Case> open(const std::string& case_id) {
    std::lock_guard lock(mutex_);
    if (auto it = open_.find(case_id); it != open_.end()) return it->second;
    if (!detail::valid_case_id(case_id)) throw Error(ErrorCode::UnknownCase, "invalid case id '" + case_id + "'");
    const fs::path dir = data_dir_ / case_id;
    if (!fs::exists(dir / "manifest.json")) throw Error(ErrorCode::UnknownCase, "no case '" + case_id + "'");
    CaseManifest m;
    RuleSet rules;
    ClassificationMap classes;
    try {
      m = CaseManifest::from_json(nlohmann::json::parse(detail::read_file(dir / "manifest.json")));
      rules = rules_from_json(nlohmann::json::parse(detail::read_file(dir / m.rules_file)));
      classes = ClassificationMap::from_json(nlohmann::json::parse(detail::read_file(dir / m.classification_file)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::StorageError, "corrupt case '" + case_id + "': " + e.what());
    }
    auto c = std::make_shared<Case>(dir, m, std::move(rules), std::move(classes));
    c->replay();
    open_.emplace(case_id, c);
    return c;
  }

  std::vector<std::string> list() const {
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(data_dir_))
      if (fs::exists(entry.path() / "manifest.json")) ids.push_back(entry.path().filename().string());
    std::sort(ids.begin(), ids.end());
    return ids;
  }

 private:
  fs::path data_dir_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Case>> open_;
};

}  // namespace evigraph
