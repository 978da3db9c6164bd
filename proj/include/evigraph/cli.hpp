#pragma once

#include <cstdlib>
#include <csignal>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "evigraph/analytics.hpp"
#include "evigraph/case_store.hpp"
#include "evigraph/service.hpp"

namespace evigraph {

inline std::string resolve_data_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("EVIGRAPH_DATA_DIR"); env && *env) return env;
  return "cases";
}

namespace detail {

inline Service* active_service = nullptr;

inline void stop_service(int) {
  if (active_service) active_service->stop();
}

inline nlohmann::json load_json_file(const std::string& path) {
  auto j = nlohmann::json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::BadValue, "'" + path + "' is not valid JSON");
  return j;
}

}  // namespace detail

/// Entry point behind the `evigraph` tool. Returns the process exit code:
/// 0 success, 1 domain or storage error, 2 usage error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Evidence graph workbench: ingest, harmonise, refine and analyse case evidence"};
  app.require_subcommand(1);

  std::string data_dir_flag;
  std::string case_id;
  std::optional<std::uint64_t> expect;
  std::string actor{"investigator"};
  app.add_option("--data-dir", data_dir_flag, "Case data directory (env EVIGRAPH_DATA_DIR)");

  auto with_case = [&](CLI::App* sub) {
    sub->add_option("--case", case_id, "Case id")->required();
  };
  auto with_mutation = [&](CLI::App* sub) {
    with_case(sub);
    sub->add_option("--expect-version", expect, "Fail with a conflict unless the case is at this version");
    sub->add_option("--actor", actor, "Investigator recorded in the action log");
  };

  // new
  std::string title, new_id, rules_file, classification_file;
  auto* cmd_new = app.add_subcommand("new", "Create an empty case");
  cmd_new->add_option("title", title, "Case title")->required();
  cmd_new->add_option("--id", new_id, "Case id (default: slug of the title)");
  cmd_new->add_option("--rules", rules_file, "Match rule set JSON (default: bundled rules)");
  cmd_new->add_option("--classification", classification_file, "Timeline classification JSON");

  // ingest
  std::string file, kind, entity_kind, display_name, mapping_file;
  std::int64_t utc_offset = 0;
  bool binary_sizes = false;
  auto* cmd_ingest = app.add_subcommand("ingest", "Add an evidence export to a case");
  with_mutation(cmd_ingest);
  cmd_ingest->add_option("file", file, "Evidence file")->required()->check(CLI::ExistingFile);
  cmd_ingest->add_option("--kind", kind, "Source kind")->required();
  cmd_ingest->add_option("--entity-kind", entity_kind, "Entity kind label");
  cmd_ingest->add_option("--name", display_name, "Display name used as metadata source");
  cmd_ingest->add_option("--mapping", mapping_file, "Column mapping JSON for generic_tabular sources");
  cmd_ingest->add_option("--utc-offset", utc_offset, "Seconds east of UTC for naive timestamps");
  cmd_ingest->add_flag("--binary-sizes", binary_sizes, "Treat KB/MB/GB as powers of 1024");

  auto* cmd_harmonise = app.add_subcommand("harmonise", "Run automatic relationship proposal");
  with_mutation(cmd_harmonise);

  std::string edge_id;
  auto* cmd_confirm = app.add_subcommand("confirm", "Confirm a proposed edge");
  with_mutation(cmd_confirm);
  cmd_confirm->add_option("edge", edge_id, "Edge id")->required();
  auto* cmd_reject = app.add_subcommand("reject", "Reject a proposed edge");
  with_mutation(cmd_reject);
  cmd_reject->add_option("edge", edge_id, "Edge id")->required();

  std::string node_id, text;
  auto* cmd_exclude = app.add_subcommand("exclude", "Hide a node from analytics");
  with_mutation(cmd_exclude);
  cmd_exclude->add_option("node", node_id, "Entity or attribute id")->required();
  auto* cmd_include = app.add_subcommand("include", "Restore an excluded node");
  with_mutation(cmd_include);
  cmd_include->add_option("node", node_id, "Entity or attribute id")->required();
  auto* cmd_annotate = app.add_subcommand("annotate", "Attach a note to an entity");
  with_mutation(cmd_annotate);
  cmd_annotate->add_option("node", node_id, "Entity id")->required();
  cmd_annotate->add_option("text", text, "Note")->required();

  std::string attr_a, attr_b;
  auto* cmd_add_edge = app.add_subcommand("add-edge", "Draw a confirmed manual edge between two attributes");
  with_mutation(cmd_add_edge);
  cmd_add_edge->add_option("a", attr_a, "Attribute id")->required();
  cmd_add_edge->add_option("b", attr_b, "Attribute id")->required();
  cmd_add_edge->add_option("--note", text, "Why the investigator linked them");

  std::string enrichment_file;
  auto* cmd_enrich = app.add_subcommand("enrich", "Apply an external reference mapping");
  with_mutation(cmd_enrich);
  cmd_enrich->add_option("file", enrichment_file, "Enrichment JSON")->required()->check(CLI::ExistingFile);

  std::string link_from, link_to;
  LinkOptions link_opts;
  auto* cmd_link = app.add_subcommand("link", "Find paths between two entities");
  with_case(cmd_link);
  cmd_link->add_option("--from", link_from, "Entity id")->required();
  cmd_link->add_option("--to", link_to, "Entity id")->required();
  cmd_link->add_option("--max-hops", link_opts.max_hops, "Maximum cross-match hops");
  cmd_link->add_option("--max-paths", link_opts.max_paths, "Maximum paths returned");
  cmd_link->add_flag("--include-proposed", link_opts.include_proposed, "Traverse unconfirmed edges too");

  std::string timeline_format{"csv"};
  std::optional<std::int64_t> window_from, window_to;
  auto* cmd_timeline = app.add_subcommand("timeline", "Chronological event view");
  with_case(cmd_timeline);
  cmd_timeline->add_option("--format", timeline_format, "csv or doc")->check(CLI::IsMember({"csv", "doc"}));
  cmd_timeline->add_option("--from", window_from, "Window start (epoch seconds)");
  cmd_timeline->add_option("--to", window_to, "Window end (epoch seconds)");

  std::string probe_kind, probe_value;
  auto* cmd_query = app.add_subcommand("query", "Run a built-in probe");
  with_case(cmd_query);
  cmd_query->add_option("--kind", probe_kind, "username|ip|email|keyword|time_window|geolocation")->required();
  cmd_query->add_option("--value", probe_value, "Probe value")->required();

  auto* cmd_correlate = app.add_subcommand("correlate", "Edge counts between evidence sources");
  with_case(cmd_correlate);
  auto* cmd_validate = app.add_subcommand("validate", "Report contradictions, orphans and duplicate rows");
  with_case(cmd_validate);

  std::string output;
  std::string export_format{"doc"};
  auto* cmd_export = app.add_subcommand("export", "Write the graph document");
  with_case(cmd_export);
  cmd_export->add_option("--format", export_format, "doc or csv (timeline)")->check(CLI::IsMember({"csv", "doc"}));
  cmd_export->add_option("--output,-o", output, "Write to file instead of stdout");

  ServiceConfig serve_cfg;
  auto* cmd_serve = app.add_subcommand("serve", "Run the HTTP service");
  cmd_serve->add_option("--host", serve_cfg.host, "Listen address");
  cmd_serve->add_option("--port", serve_cfg.port, "Listen port (0 = any)");
  cmd_serve->add_option("--static", serve_cfg.static_dir, "Workbench assets directory")->check(CLI::ExistingDirectory);

  auto* cmd_list = app.add_subcommand("list", "List cases");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    CaseStore store(resolve_data_dir(data_dir_flag));
    auto emit = [&](const nlohmann::json& j) { out << dump_json(j, 2) << "\n"; };
    auto act = [&](ActionVerb verb, std::string target, std::string other = {}) {
      RefinementAction a;
      a.verb = verb;
      a.target = std::move(target);
      a.other = std::move(other);
      a.text = text;
      a.actor = actor;
      emit({{"version", store.open(case_id)->act(a, expect)}});
    };

    if (*cmd_new) {
      std::optional<nlohmann::json> rules, classes;
      if (!rules_file.empty()) rules = detail::load_json_file(rules_file);
      if (!classification_file.empty()) classes = detail::load_json_file(classification_file);
      emit(store.create_case(title, new_id, rules, classes).to_json());
    } else if (*cmd_ingest) {
      IngestRequest req;
      req.content = detail::read_file(file);
      req.source_kind = parse_source_kind(kind);
      if (!entity_kind.empty()) req.entity_kind = parse_entity_kind(entity_kind);
      req.display_name = display_name;
      req.original_uri = fs::absolute(file).string();
      req.options.utc_offset_seconds = utc_offset;
      req.options.size_units = binary_sizes ? SizeUnits::binary : SizeUnits::decimal;
      if (!mapping_file.empty()) req.mapping = MappingConfig::from_json(detail::load_json_file(mapping_file));
      emit(to_json(store.open(case_id)->ingest(req, expect, actor)));
    } else if (*cmd_harmonise) {
      auto c = store.open(case_id);
      const auto report = c->harmonise(expect, actor);
      emit({{"proposed", report.proposed.size()}, {"per_rule", report.per_rule}, {"version", c->version()}});
    } else if (*cmd_confirm) {
      act(ActionVerb::confirm_edge, edge_id);
    } else if (*cmd_reject) {
      act(ActionVerb::reject_edge, edge_id);
    } else if (*cmd_exclude) {
      act(ActionVerb::exclude_node, node_id);
    } else if (*cmd_include) {
      act(ActionVerb::include_node, node_id);
    } else if (*cmd_annotate) {
      act(ActionVerb::annotate, node_id);
    } else if (*cmd_add_edge) {
      act(ActionVerb::add_manual_edge, attr_a, attr_b);
    } else if (*cmd_enrich) {
      auto c = store.open(case_id);
      const auto edges = c->enrich(EnrichmentRecord::from_json(detail::load_json_file(enrichment_file)), expect, actor);
      nlohmann::json ids = nlohmann::json::array();
      for (const auto& e : edges) ids.push_back(e.id);
      emit({{"proposed", ids}, {"version", c->version()}});
    } else if (*cmd_link) {
      nlohmann::json paths = nlohmann::json::array();
      for (const auto& p : find_links(*store.open(case_id)->snapshot(), link_from, link_to, link_opts))
        paths.push_back(to_json(p));
      emit({{"paths", paths}});
    } else if (*cmd_timeline || (*cmd_export && export_format == "csv")) {
      const auto& format = *cmd_timeline ? timeline_format : export_format;
      auto c = store.open(case_id);
      std::optional<TimeWindow> window;
      if (window_from || window_to)
        window = TimeWindow{window_from.value_or(INT64_MIN), window_to.value_or(INT64_MAX)};
      const auto events = build_timeline(*c->snapshot(), c->classification(), window);
      std::string text_out;
      if (format == "csv") {
        text_out = timeline_csv(events);
      } else {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& e : events) j.push_back(to_json(e));
        text_out = dump_json(j, 2) + "\n";
      }
      if (!output.empty()) detail::write_file_atomic(output, text_out);
      else out << text_out;
    } else if (*cmd_query) {
      nlohmann::json hits = nlohmann::json::array();
      for (const auto& h : query(*store.open(case_id)->snapshot(), Probe::parse(probe_kind, probe_value)))
        hits.push_back(to_json(h));
      emit({{"hits", hits}});
    } else if (*cmd_correlate) {
      auto snap = store.open(case_id)->snapshot();
      emit(to_json(*snap, correlate_sources(*snap)));
    } else if (*cmd_validate) {
      auto c = store.open(case_id);
      nlohmann::json findings = nlohmann::json::array();
      for (const auto& f : validate_graph(*c->snapshot(), c->rules())) findings.push_back(to_json(f));
      emit({{"findings", findings}});
    } else if (*cmd_export) {
      const auto doc = dump_json(export_document(*store.open(case_id)->snapshot()), 2) + "\n";
      if (!output.empty()) detail::write_file_atomic(output, doc);
      else out << doc;
    } else if (*cmd_list) {
      emit({{"cases", store.list()}});
    } else if (*cmd_serve) {
      serve_cfg.data_dir = store.data_dir().string();
      Service service(serve_cfg);
      const int port = service.bind();
      err << "listening on http://" << serve_cfg.host << ":" << port << "\n";
      detail::active_service = &service;
      std::signal(SIGINT, detail::stop_service);
      std::signal(SIGTERM, detail::stop_service);
      service.listen();
      detail::active_service = nullptr;
    }
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.detail();
    if (e.line() > 0) err << " (line " << e.line() << ")";
    err << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace evigraph
