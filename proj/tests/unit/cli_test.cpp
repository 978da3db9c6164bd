#include <sstream>

#include <gtest/gtest.h>

#include "evigraph/cli.hpp"
#include "support/golden.hpp"
#include "support/temp_dir.hpp"

using namespace evigraph;
using nlohmann::json;

namespace {

struct CliRun {
  int code = 0;
  std::string out, err;
  json doc() const { return json::parse(out); }
};

class CliTest : public ::testing::Test {
 protected:
  CliRun run(std::vector<std::string> args) {
    args.insert(args.begin(), {"evigraph", "--data-dir", dir.str()});
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    CliRun r;
    r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
  }

  CliRun ok(const std::vector<std::string>& args) {
    auto r = run(args);
    EXPECT_EQ(r.code, 0) << r.err;
    return r;
  }

  std::string fixture(const std::string& name) const { return (test::golden_dir() / name).string(); }

  /// Golden fixtures ingested through the CLI, harmonised.
  void golden_case(const std::string& id) {
    ok({"new", "AIxz leak", "--id", id});
    for (const auto& f : test::golden_sources()) {
      std::vector<std::string> args{"ingest", "--case", id, fixture(f.stem + ".csv"), "--kind",
                                    std::string(to_string(f.kind)), "--name", f.display_name};
      if (f.entity_kind) args.insert(args.end(), {"--entity-kind", std::string(to_string(*f.entity_kind))});
      if (f.has_mapping) args.insert(args.end(), {"--mapping", fixture(f.stem + ".mapping.json")});
      ok(args);
    }
    EXPECT_EQ(ok({"harmonise", "--case", id}).doc()["proposed"], 33);
  }

  test::TempDir dir;
};

}  // namespace

TEST(DataDir, FlagThenEnvThenDefault) {
  ::unsetenv("EVIGRAPH_DATA_DIR");
  EXPECT_EQ(resolve_data_dir(""), "cases");
  ::setenv("EVIGRAPH_DATA_DIR", "/tmp/from-env", 1);
  EXPECT_EQ(resolve_data_dir(""), "/tmp/from-env");
  EXPECT_EQ(resolve_data_dir("/tmp/flag"), "/tmp/flag");
  ::unsetenv("EVIGRAPH_DATA_DIR");
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"harmonise"}).code, 2);
  EXPECT_EQ(run({"timeline", "--case", "x", "--format", "xml"}).code, 2);
  EXPECT_EQ(run({"ingest", "--case", "x", "/no/such/file", "--kind", "syslog"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(CliTest, DomainErrorsExitOne) {
  auto r = run({"harmonise", "--case", "missing"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: UnknownCase", 0), 0u) << r.err;

  ok({"new", "c"});
  r = run({"ingest", "--case", "c", fixture("syslog.csv"), "--kind", "network_log"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("UnknownFormat"), std::string::npos);
  EXPECT_NE(r.err.find("(line 1)"), std::string::npos);
  EXPECT_EQ(run({"ingest", "--case", "c", fixture("syslog.csv"), "--kind", "tape"}).code, 1);
  EXPECT_EQ(run({"confirm", "--case", "c", "x-missing"}).code, 1);
  EXPECT_EQ(run({"new", "bad", "--rules", fixture("timeline.csv")}).code, 1);
}

TEST_F(CliTest, GoldenSessionReproducesTimeline) {
  golden_case("aixz");
  const auto unrefined = ok({"timeline", "--case", "aixz"}).out;
  EXPECT_EQ(std::count(unrefined.begin(), unrefined.end(), '\n'), 1 + 12);

  CaseStore store(dir.path());
  const auto c = store.open("aixz");
  test::GoldenIds ids;
  for (const auto& s : c->manifest().sources) {
    const auto uri = std::filesystem::path(s.original_uri).stem().string();
    ids.source[uri] = s.source_id;
  }
  const auto g = c->snapshot();
  for (const auto& m : test::golden_matches(*g, ids)) ok({"confirm", "--case", "aixz", m.edge_id()});
  for (const auto& id : test::golden_exclusions(*g, ids)) ok({"exclude", "--case", "aixz", id});
  EXPECT_EQ(ok({"timeline", "--case", "aixz"}).out, test::read_text(test::golden_dir() / "timeline.csv"));
  EXPECT_EQ(ok({"timeline", "--case", "aixz", "--format", "doc"}).doc().size(), 6u);
}

TEST_F(CliTest, ExportIsByteIdenticalAcrossRebuilds) {
  golden_case("one");
  golden_case("two");
  const auto a = ok({"export", "--case", "one"}).out;
  const auto b = ok({"export", "--case", "two"}).out;
  EXPECT_EQ(json::parse(a)["version"], 11);
  // Only ingestion times differ between the two builds.
  auto strip = [](std::string text) {
    auto doc = json::parse(text);
    for (auto& s : doc["sources"]) s.erase("ingested_at");
    return dump_json(doc, 2);
  };
  EXPECT_EQ(strip(a), strip(b));
  EXPECT_EQ(a, ok({"export", "--case", "one"}).out);

  const auto file = (dir.path() / "out.json").string();
  ok({"export", "--case", "one", "-o", file});
  EXPECT_EQ(test::read_text(file), a);
  const auto csv = (dir.path() / "timeline.csv").string();
  ok({"export", "--case", "one", "--format", "csv", "-o", csv});
  EXPECT_EQ(test::read_text(csv), ok({"timeline", "--case", "one"}).out);
}

TEST_F(CliTest, RefinementAndAnalyticsCommands) {
  golden_case("c");
  EXPECT_EQ(ok({"list"}).doc()["cases"], json::array({"c"}));
  const auto doc = ok({"export", "--case", "c"}).doc();
  const std::string edge = doc["edges"][0]["id"];
  const auto v = doc["version"].get<std::uint64_t>();

  auto r = run({"confirm", "--case", "c", edge, "--expect-version", std::to_string(v - 1)});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("VersionConflict"), std::string::npos);
  EXPECT_EQ(ok({"confirm", "--case", "c", edge, "--expect-version", std::to_string(v), "--actor", "sam"})
                .doc()["version"],
            v + 1);
  EXPECT_NE(run({"reject", "--case", "c", edge}).err.find("IllegalTransition"), std::string::npos);

  std::string entity, a_attr, b_attr;
  for (const auto& n : doc["nodes"]) {
    if (n["kind"] == "entity" && entity.empty()) entity = n["id"];
    if (n["kind"] == "process_name") a_attr = n["id"];
    if (n["kind"] == "host" && b_attr.empty()) b_attr = n["id"];
  }
  ok({"annotate", "--case", "c", entity, "check this"});
  ok({"add-edge", "--case", "c", a_attr, b_attr, "--note", "same machine"});
  ok({"exclude", "--case", "c", entity});
  ok({"include", "--case", "c", entity});
  const auto after = ok({"export", "--case", "c"}).doc();
  EXPECT_EQ(after["version"], v + 5);

  const auto log = test::read_text(dir.path() / "c" / "actions.jsonl");
  EXPECT_NE(log.find("\"actor\":\"sam\""), std::string::npos);

  EXPECT_EQ(ok({"query", "--case", "c", "--kind", "username", "--value", "Alex"}).doc()["hits"].size(), 5u);
  EXPECT_EQ(run({"query", "--case", "c", "--kind", "ip", "--value", "10.0.0"}).code, 1);
  EXPECT_FALSE(ok({"correlate", "--case", "c"}).doc()["cells"].empty());
  EXPECT_FALSE(ok({"validate", "--case", "c"}).doc()["findings"].empty());
  const auto links = ok({"link", "--case", "c", "--from", entity, "--to", entity}).doc();
  EXPECT_EQ(links["paths"].size(), 1u);

  const auto enrichment = (dir.path() / "directory.json").string();
  detail::write_file_atomic(enrichment, R"({"kind": "identity_directory", "entries": {"alex@aixz.ai": "alex"}})");
  EXPECT_FALSE(ok({"enrich", "--case", "c", enrichment}).doc()["proposed"].empty());
}
