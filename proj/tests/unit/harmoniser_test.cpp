#include <gtest/gtest.h>

#include "evigraph/case_store.hpp"
#include "evigraph/harmoniser.hpp"
#include "support/golden.hpp"
#include "support/oracles.hpp"
#include "support/random_graph.hpp"
#include "support/temp_dir.hpp"

using namespace evigraph;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::StorageError;
}

struct GoldenCase {
  test::TempDir dir;
  CaseStore store{dir.path()};
  std::shared_ptr<Case> c;
  test::GoldenIds ids;

  GoldenCase() {
    store.create_case("golden");
    c = store.open("golden");
    ids = test::ingest_golden(*c);
  }
};

std::size_t count_rule(const std::vector<CrossMatchEdge>& edges, const std::string& rule) {
  return std::count_if(edges.begin(), edges.end(), [&](const auto& e) { return e.rule_id == rule; });
}

}  // namespace

TEST(Refine1, GoldenMatchesFrozenSet) {
  GoldenCase gc;
  const auto report = gc.c->harmonise();
  const auto g = gc.c->snapshot();
  std::set<std::string> got;
  for (const auto& e : report.proposed) got.insert(test::describe_edge(*g, gc.ids, e.a, e.b, *e.rule_id));
  EXPECT_EQ(got, test::read_lines(test::golden_dir() / "refine1_edges.txt"));
  EXPECT_EQ(report.per_rule.at("ip_equal"), 17u);
  EXPECT_EQ(report.per_rule.at("username_equal"), 10u);
  EXPECT_EQ(report.per_rule.at("timestamp_equal"), 5u);
  EXPECT_EQ(report.per_rule.at("size_equal"), 1u);
  EXPECT_EQ(report.per_rule.count("port_equal"), 0u);
  for (const auto& e : report.proposed) {
    EXPECT_EQ(e.status, EdgeStatus::proposed);
    EXPECT_EQ(e.stage, EdgeStage::refine1_auto);
    EXPECT_NE(g->attributes().at(e.a).owner, g->attributes().at(e.b).owner);
  }
}

TEST(Refine1, SecondRunProposesNothing) {
  GoldenCase gc;
  gc.c->harmonise();
  const auto v = gc.c->version();
  EXPECT_TRUE(gc.c->harmonise().proposed.empty());
  EXPECT_EQ(gc.c->version(), v + 1);
}

TEST(Refine1, AllRulesDisabledProposesNothing) {
  GoldenCase gc;
  auto rules = default_rules();
  for (auto& r : rules.rules) r.enabled = false;
  EXPECT_TRUE(refine1(*gc.c->snapshot(), rules).empty());
}

TEST(Refine1, RejectedEdgesAreNotReproposed) {
  GoldenCase gc;
  const auto first = gc.c->harmonise().proposed;
  for (const auto& e : first) gc.c->act({ActionVerb::reject_edge, e.id, {}, {}, "investigator"});
  EXPECT_TRUE(gc.c->harmonise().proposed.empty());
  for (const auto& e : first) EXPECT_EQ(gc.c->snapshot()->edges().at(e.id).status, EdgeStatus::rejected);
}

TEST(Refine1, ExcludedNodesDoNotMatch) {
  GoldenCase gc;
  const auto g = gc.c->snapshot();
  const auto fw_ip = gc.ids.attribute(*g, "firewall", 2, AttributeKind::ipv4);
  gc.c->act({ActionVerb::exclude_node, fw_ip, {}, {}, "investigator"});
  for (const auto& e : gc.c->harmonise().proposed) {
    EXPECT_NE(e.a, fw_ip);
    EXPECT_NE(e.b, fw_ip);
  }
}

TEST(Refine1, AgreesWithAllPairsOracleOnRandomGraphs) {
  test::Rng rng(77);
  for (int round = 0; round < 40; ++round) {
    auto g = test::random_graph(rng, 150, 3);
    test::random_exclusions(rng, g, 0.1);
    const auto rules = test::random_rules(rng);
    EXPECT_EQ(test::keys_of(refine1(g, rules)), test::brute_refine1(g, rules)) << "round " << round;
  }
}

TEST(Refine1, ToleranceBoundaryIsInclusive) {
  MatchRule r;
  r.rule_id = "near";
  r.left.kind = r.right.kind = AttributeKind::timestamp;
  r.comparator = Comparator::within_tolerance;
  r.tolerance = 300;
  const NormalizedValue a{AttributeKind::timestamp, Role::created, "0", 1000};
  EXPECT_TRUE(r.matches(a, {AttributeKind::timestamp, Role::created, "0", 1300}));
  EXPECT_TRUE(r.matches(a, {AttributeKind::timestamp, Role::created, "0", 700}));
  EXPECT_FALSE(r.matches(a, {AttributeKind::timestamp, Role::created, "0", 1301}));
  const NormalizedValue lo{AttributeKind::timestamp, Role::created, "0", std::numeric_limits<std::int64_t>::min()};
  const NormalizedValue hi{AttributeKind::timestamp, Role::created, "0", std::numeric_limits<std::int64_t>::max()};
  EXPECT_FALSE(r.matches(lo, hi));
}

TEST(Refine2, TransitionsAreOneWay) {
  GoldenCase gc;
  const auto proposed = gc.c->harmonise().proposed;
  ASSERT_GE(proposed.size(), 2u);
  CaseGraph g = *gc.c->snapshot();
  confirm_edge(g, proposed[0].id);
  reject_edge(g, proposed[1].id);
  const auto v = g.version();
  EXPECT_EQ(code_of([&] { confirm_edge(g, proposed[0].id); }), ErrorCode::IllegalTransition);
  EXPECT_EQ(code_of([&] { reject_edge(g, proposed[0].id); }), ErrorCode::IllegalTransition);
  EXPECT_EQ(code_of([&] { confirm_edge(g, proposed[1].id); }), ErrorCode::IllegalTransition);
  EXPECT_EQ(code_of([&] { confirm_edge(g, "x-missing"); }), ErrorCode::UnknownEdge);
  EXPECT_EQ(g.version(), v);
}

TEST(Refine2, ManualEdges) {
  GoldenCase gc;
  CaseGraph g = *gc.c->snapshot();
  const auto mem_proc = gc.ids.attribute(g, "memory", 2, AttributeKind::process_name);
  const auto mem_proto = gc.ids.attribute(g, "memory", 2, AttributeKind::protocol);
  const auto net_host = gc.ids.attribute(g, "network", 2, AttributeKind::host);

  const auto& e = add_manual_edge(g, mem_proc, net_host, "putty ran on System1", "alex-investigator");
  EXPECT_EQ(e.status, EdgeStatus::confirmed);
  EXPECT_EQ(e.stage, EdgeStage::refine2_manual);
  EXPECT_FALSE(e.rule_id.has_value());
  EXPECT_EQ(e.created_by, "alex-investigator");
  EXPECT_EQ(e.id, make_edge_id(net_host, mem_proc, std::nullopt));

  const auto v = g.version();
  EXPECT_EQ(code_of([&] { add_manual_edge(g, net_host, mem_proc, "", "x"); }), ErrorCode::DuplicateEdge);
  EXPECT_EQ(code_of([&] { add_manual_edge(g, mem_proc, mem_proto, "", "x"); }), ErrorCode::SelfMatch);
  EXPECT_EQ(code_of([&] { add_manual_edge(g, mem_proc, "a-missing", "", "x"); }), ErrorCode::UnknownNode);
  EXPECT_EQ(g.version(), v);
}

TEST(Refine2, ActionJsonRoundTrip) {
  const RefinementAction a{ActionVerb::add_manual_edge, "a-1", "a-2", "same person", "sam"};
  const auto back = RefinementAction::from_json(nlohmann::json::parse(dump_json(a.to_json())));
  EXPECT_EQ(back.to_json(), a.to_json());
  EXPECT_EQ(code_of([] { parse_action_verb("merge"); }), ErrorCode::BadValue);
}

TEST(Enrichment, IdentityDirectoryLinksEmailToUsername) {
  GoldenCase gc;
  gc.c->harmonise();
  const auto record = EnrichmentRecord::from_json(
      {{"kind", "identity_directory"}, {"entries", {{"Alex@AIxz.ai", "Alex"}}}, {"provenance", "HR directory"}});
  const auto edges = gc.c->enrich(record);
  const auto g = gc.c->snapshot();
  const auto email = gc.ids.attribute(*g, "cloud", 2, AttributeKind::email, Role::accessed_by);
  std::string derived;
  for (const auto& id : g->attributes_of(gc.ids.entity("cloud")))
    if (g->attributes().at(id).derived_from == email) derived = id;
  ASSERT_FALSE(derived.empty());
  EXPECT_EQ(g->attributes().at(derived).value.text, "alex");
  EXPECT_EQ(g->attributes().at(derived).value.kind, AttributeKind::username);
  ASSERT_FALSE(edges.empty());
  for (const auto& e : edges) {
    EXPECT_TRUE(e.a == derived || e.b == derived);
    EXPECT_EQ(e.rule_id, "username_equal");
  }
  // Applying the same directory again adds nothing.
  EXPECT_TRUE(gc.c->enrich(record).empty());
}

TEST(Enrichment, ProtocolAlias) {
  test::TempDir dir;
  CaseStore store(dir.path());
  store.create_case("proto");
  auto c = store.open("proto");
  IngestRequest net;
  net.source_kind = SourceKind::network_log;
  net.content =
      "Timestamp,Source MAC,Destination MAC,Source IP,Destination IP,Source Port,Destination Port,Protocol,Host\n"
      "18/5/2022 10:10:05,Ff:df:f9:c4:94:ac,24:d4:4b:8e:02:86,10.0.0.20,10.0.0.100,52814,22,SSHv2,System1\n";
  c->ingest(net);
  IngestRequest sys;
  sys.source_kind = SourceKind::generic_tabular;
  sys.content = "proto\nssh-2\n";
  sys.mapping = MappingConfig::from_json(
      {{"entity_kind", "generic"}, {"columns", {{{"column", "proto"}, {"kind", "protocol"}}}}});
  c->ingest(sys);
  EXPECT_TRUE(c->harmonise().proposed.empty());
  const auto edges =
      c->enrich(EnrichmentRecord::from_json({{"kind", "protocol_alias"}, {"entries", {{"ssh-2", "ssh"}}}}));
  ASSERT_EQ(edges.size(), 1u);
  EXPECT_EQ(edges[0].rule_id, "protocol_alias_equal");
}

TEST(Enrichment, IpAssetInventoryDerivesHosts) {
  GoldenCase gc;
  gc.c->harmonise();
  const auto edges = gc.c->enrich(EnrichmentRecord::from_json(
      {{"kind", "ip_asset_inventory"}, {"entries", {{"10.0.0.20", "System1"}}}}));
  const auto g = gc.c->snapshot();
  std::size_t derived_hosts = 0;
  for (const auto& [id, a] : g->attributes())
    if (!a.derived_from.empty() && a.value.kind == AttributeKind::host) {
      EXPECT_EQ(a.value.text, "system1");
      ++derived_hosts;
    }
  EXPECT_EQ(derived_hosts, g->lookup(AttributeKind::ipv4, std::nullopt, "10.0.0.20").size());
  EXPECT_GT(count_rule(edges, "host_equal"), 0u);
}

TEST(Enrichment, RejectsNonFunctionalMappings) {
  const auto r = EnrichmentRecord::from_json(
      {{"kind", "identity_directory"}, {"entries", {{"alex@aixz.ai", "alex"}, {"Alex@aixz.ai", "sam"}}}});
  EXPECT_EQ(code_of([&] { r.validated(); }), ErrorCode::BadEnrichment);
  EXPECT_EQ(code_of([] { EnrichmentRecord::from_json({{"kind", "dns"}, {"entries", nlohmann::json::array()}}); }),
            ErrorCode::BadEnrichment);
  const auto bad_ip = EnrichmentRecord::from_json({{"kind", "ip_asset_inventory"}, {"entries", {{"10.0.0", "h"}}}});
  EXPECT_EQ(code_of([&] { bad_ip.validated(); }), ErrorCode::BadEnrichment);
}

TEST(Validation, GoldenFindings) {
  GoldenCase gc;
  gc.c->harmonise();
  test::refine_golden(*gc.c, gc.ids);
  const auto g = gc.c->snapshot();
  const auto findings = validate_graph(*g, gc.c->rules());
  std::set<std::string> orphans;
  for (const auto& f : findings) {
    EXPECT_NE(f.kind, FindingKind::contradiction);
    if (f.kind == FindingKind::orphan) orphans.insert(f.subjects.at(0));
  }
  // Entities with no confirmed match in the golden session.
  EXPECT_EQ(orphans, (std::set<std::string>{gc.ids.entity("network", 3), gc.ids.entity("syslog")}));
}

TEST(Validation, ContradictionAfterRuleChange) {
  GoldenCase gc;
  gc.c->harmonise();
  test::refine_golden(*gc.c, gc.ids);
  auto rules = gc.c->rules();
  for (auto& r : rules.rules)
    if (r.rule_id == "ip_equal") r.left.roles = {Role::source};
  std::size_t contradictions = 0;
  for (const auto& f : validate_graph(*gc.c->snapshot(), rules))
    if (f.kind == FindingKind::contradiction) ++contradictions;
  EXPECT_GT(contradictions, 0u);
}

TEST(Validation, DuplicateRowsAcrossSources) {
  CaseGraph g;
  for (const auto* id : {"src-a", "src-b"}) {
    SourceDescriptor d;
    d.source_id = id;
    d.source_kind = SourceKind::syslog;
    d.entity_kind = EntityKind::slog;
    apply_delta(g, d, build_graph(parse_source(test::read_text(test::golden_dir() / "syslog.csv"), d).records));
  }
  std::size_t dups = 0;
  for (const auto& f : validate_graph(g, default_rules()))
    if (f.kind == FindingKind::duplicate_row) {
      ++dups;
      EXPECT_EQ(f.subjects.size(), 2u);
    }
  EXPECT_EQ(dups, 1u);
}

TEST(Rules, AliasTableClosesTransitively) {
  const AliasTable t({{"sshv2", "ssh"}, {"ssh", "ssh-2"}, {"http", "www"}});
  EXPECT_EQ(t.canonical("sshv2"), t.canonical("ssh-2"));
  EXPECT_EQ(t.canonical("ssh-2"), "ssh");
  EXPECT_NE(t.canonical("http"), t.canonical("ssh"));
  EXPECT_EQ(t.canonical("ftp"), "ftp");
}

TEST(Rules, JsonRoundTripAndShippedCopy) {
  const auto rules = default_rules();
  EXPECT_EQ(to_json(rules_from_json(to_json(rules))), to_json(rules));
  const auto shipped = nlohmann::json::parse(test::read_text(test::source_dir() / "data" / "rules.json"));
  EXPECT_EQ(shipped, nlohmann::json::parse(kDefaultRulesJson));
}

TEST(Rules, InvalidRulesAreRejected) {
  auto bad = [](nlohmann::json rule) {
    return code_of([&] { rules_from_json({{"rules", {rule}}}); });
  };
  EXPECT_EQ(bad({{"id", "t"}, {"left", {{"kind", "ipv4"}}}, {"comparator", "within_tolerance"}, {"tolerance", 1}}),
            ErrorCode::BadRule);
  EXPECT_EQ(bad({{"id", "t"}, {"left", {{"kind", "timestamp"}}}, {"comparator", "within_tolerance"}}),
            ErrorCode::BadRule);
  EXPECT_EQ(bad({{"id", "t"}, {"left", {{"kind", "protocol"}}}, {"comparator", "alias_equal"}}), ErrorCode::BadRule);
  EXPECT_EQ(bad({{"id", "t"}, {"left", {{"kind", "ipv4"}}}, {"comparator", "fuzzy"}}), ErrorCode::BadRule);
}
