#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "persist_trace/rules.hpp"

using namespace persist_trace;
using namespace pt_test;
namespace fs = std::filesystem;

namespace {

// Each call gets a fresh directory holding a single rule file.
std::string rules_dir(const std::string& name, const std::string& json_text) {
  fs::path dir = fs::path(PT_TMP_DIR) / ("rules-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "rules.json") << json_text;
  return dir.string();
}

std::string load_error(const std::string& name, const std::string& json_text) {
  try {
    load_ruleset(rules_dir(name, json_text));
  } catch (const RuleError& e) {
    return e.what();
  }
  return "";
}

// Minimal valid detection document with splice points for mutations.
std::string doc(const std::string& extra) {
  return std::string(R"([{"schema":"persist-trace-rule/1","kind":"detection","id":"r-x",)") +
         R"("technique":"T1234.001","tactic":"persistence","phase":"setup",)" +
         R"("conditions":[[{"field":"event_type","op":"equals","value":"FILE_WRITE"}]])" + extra +
         "}]";
}

AuditEvent sample_write() {
  Corpus c;
  ProcessRef a = proc("g1", "C:\\Users\\U\\Tool.EXE", "", "Tool.exe --Flag VALUE");
  return c.fwrite(a, "C:\\Dir\\Sub\\File.TXT");
}

}  // namespace

TEST_CASE("the bundled ruleset loads with the expected shape") {
  RuleSet rs = default_rules();
  CHECK(rs.phase_rules(RulePhase::Setup).size() == 12);
  CHECK(rs.phase_rules(RulePhase::Execution).size() == 12);
  CHECK(rs.phase_rules(RulePhase::Indicator).size() == 9);
  CHECK(rs.expert_rules.size() == 3);
  CHECK(rs.allowlist.size() == 12);

  CHECK(rs.is_allowlisted("c:\\windows\\explorer.exe"));
  CHECK(rs.is_allowlisted("/usr/lib/systemd/systemd"));
  CHECK(!rs.is_allowlisted("c:\\users\\u\\tool.exe"));
  // Matching is over canonical paths; the caller canonicalizes.
  CHECK(!rs.is_allowlisted("C:\\Windows\\Explorer.EXE"));

  CHECK(lint_ruleset(PT_REPO_ROOT "/rules/default").empty());
}

TEST_CASE("the loader rejects malformed documents with located messages") {
  using namespace std::string_literals;
  CHECK(load_error("dup", R"([)" + doc("").substr(1, doc("").size() - 2) + "," +
                              doc("").substr(1, doc("").size() - 2) + "]")
            .find("duplicate rule id") != std::string::npos);
  CHECK(load_error("badjson", "{nope").find("malformed json") != std::string::npos);
  CHECK(load_error("notobj", "[42]").find("must be an object") != std::string::npos);
  CHECK(load_error("schema", R"([{"schema":"other/9","kind":"detection"}])")
            .find("unsupported schema") != std::string::npos);
  CHECK(load_error("kind", R"([{"schema":"persist-trace-rule/1","kind":"wat","id":"r"}])")
            .find("unknown kind") != std::string::npos);

  auto mutate = [&](const std::string& from, const std::string& to) {
    std::string s = doc("");
    s.replace(s.find(from), from.size(), to);
    return s;
  };
  CHECK(load_error("noid", mutate(R"("id":"r-x")", R"("id":"")")).find("missing id") !=
        std::string::npos);
  CHECK(load_error("tech", mutate("T1234.001", "1234")).find("bad technique") !=
        std::string::npos);
  CHECK(load_error("tactic", mutate(R"("tactic":"persistence")", R"("tactic":"")"))
            .find("missing tactic") != std::string::npos);
  CHECK(load_error("phase", mutate(R"("phase":"setup")", R"("phase":"sideways")"))
            .find("bad phase") != std::string::npos);
  CHECK(load_error("field", mutate(R"("field":"event_type")", R"("field":"event_kind")"))
            .find("unknown field") != std::string::npos);
  CHECK(load_error("op", mutate(R"("op":"equals")", R"("op":"matches")"))
            .find("unknown op") != std::string::npos);
  // Object-form groups must carry an "all" list; bare predicate objects at the
  // group level are a structural mistake.
  CHECK(load_error("conds",
                   R"([{"schema":"persist-trace-rule/1","kind":"detection","id":"r",)"
                   R"("technique":"T1234","tactic":"x","phase":"setup",)"
                   R"("conditions":[{"field":"event_type","op":"equals","value":"FILE_WRITE"}]}])")
            .find("needs 'all'") != std::string::npos);
  CHECK(load_error("conds2",
                   R"([{"schema":"persist-trace-rule/1","kind":"detection","id":"r",)"
                   R"("technique":"T1234","tactic":"x","phase":"setup","conditions":[]}])")
            .find("non-empty array of groups") != std::string::npos);
  CHECK(load_error("span", doc(R"(,"max_span_ms":0)")).find("max_span_ms") != std::string::npos);
  CHECK(load_error("capname", doc(R"(,"captures":[{"field":"object.path"}])"))
            .find("needs a name") != std::string::npos);
  CHECK(load_error("capgroup", doc(R"(,"captures":[{"name":"t","field":"object.path","group":3}])"))
            .find("out of range") != std::string::npos);
  CHECK(load_error("multival",
                   mutate(R"("op":"equals","value":"FILE_WRITE")",
                          R"("op":"equals","values":["A","B"])"))
            .find("in_set") != std::string::npos);
  CHECK(load_error("noval", mutate(R"(,"value":"FILE_WRITE")", ""))
            .find("needs value") != std::string::npos);

  // Execution rules must pin how the match relates to the anchor.
  std::string exec = doc("");
  exec.replace(exec.find(R"("phase":"setup")"), 15, R"("phase":"execution")");
  CHECK(load_error("execgate", exec).find("required_ancestor or anchor_only") !=
        std::string::npos);
  std::string ra = exec;
  ra.insert(ra.rfind('}'),
            R"(,"required_ancestor":[{"field":"object.path","op":"equals","value":"x"}])");
  CHECK(load_error("rafield", ra).find("actor.image/cmdline/guid") != std::string::npos);

  // correlate_on needs the named capture in every group.
  std::string seq =
      R"([{"schema":"persist-trace-rule/1","kind":"detection","id":"r-s","technique":"T1000",)"
      R"("tactic":"x","phase":"setup","correlate_on":"tok",)"
      R"("conditions":[[{"field":"event_type","op":"equals","value":"FILE_WRITE"}],)"
      R"([{"field":"event_type","op":"equals","value":"PROCESS_CREATE"}]],)"
      R"("captures":[{"name":"tok","field":"object.path"}]}])";
  CHECK(load_error("corr", seq).find("missing group 0") != std::string::npos);

  CHECK_THROWS_WITH_AS((void)load_ruleset(std::string(PT_TMP_DIR) + "/definitely-absent"),
                       doctest::Contains("no such rules path"), RuleError);
}

TEST_CASE("expert rule loading refuses mixed documents") {
  std::string expert_only =
      R"([{"schema":"persist-trace-rule/1","kind":"expert-edge","id":"x-1","technique":"T1000",)"
      R"("trigger":{"all":[{"field":"event_type","op":"equals","value":"PROCESS_CREATE"}],)"
      R"("token":{"field":"child.cmdline","transform":"token_after:create"}},)"
      R"("broker":{"all":[{"field":"event_type","op":"equals","value":"REG_SET"}],)"
      R"("token":{"field":"object.reg_key","transform":"basename"}}}])";
  std::string dir = rules_dir("expertonly", expert_only);
  std::vector<ExpertEdgeRule> xs = load_expert_rules(dir);
  REQUIRE(xs.size() == 1);
  CHECK(xs[0].window_ms == 30000);  // default window
  CHECK(xs[0].src_role == ExpertSrcRole::TriggerProcess);

  std::string mixed = expert_only;
  mixed.insert(mixed.rfind(']'), "," + doc("").substr(1, doc("").size() - 2));
  CHECK_THROWS_WITH_AS((void)load_expert_rules(rules_dir("mixed", mixed)),
                       doctest::Contains("only expert-edge documents"), RuleError);

  CHECK(load_error("badsrc", expert_only.substr(0, expert_only.size() - 2) +
                                 R"(,"edge_src":"elsewhere"}])")
            .find("bad edge_src") != std::string::npos);
  CHECK(load_error("badwin", expert_only.substr(0, expert_only.size() - 2) +
                                 R"(,"window_ms":-5}])")
            .find("window_ms") != std::string::npos);
}

TEST_CASE("lint flags rules that can never align or always full-scan") {
  std::string text =
      R"([{"schema":"persist-trace-rule/1","kind":"detection","id":"r-l","technique":"T1000",)"
      R"("tactic":"x","phase":"setup",)"
      R"("conditions":[[{"field":"object.path","op":"suffix","value":".exe"}]]}])";
  std::vector<std::string> issues = lint_ruleset(rules_dir("lint", text));
  REQUIRE(issues.size() == 2);
  CHECK(issues[0].find("captures nothing") != std::string::npos);
  CHECK(issues[1].find("no event_type predicate") != std::string::npos);

  std::vector<std::string> broken = lint_ruleset(rules_dir("lintbroken", "{nope"));
  REQUIRE(broken.size() == 1);
  CHECK(broken[0].find("error:") == 0);
}

TEST_CASE("field resolution returns canonical values and nullopt for absent fields") {
  AuditEvent ev = sample_write();
  CHECK(resolve_field(ev, "event_type") == "FILE_WRITE");
  CHECK(resolve_field(ev, "host") == "w1");
  CHECK(resolve_field(ev, "actor.image") == "c:\\users\\u\\tool.exe");
  CHECK(resolve_field(ev, "actor.cmdline") == "tool.exe --flag value");
  CHECK(resolve_field(ev, "actor.guid") == "g1");
  CHECK(resolve_field(ev, "object.path") == "c:\\dir\\sub\\file.txt");
  CHECK(!resolve_field(ev, "object.reg_key").has_value());
  CHECK(!resolve_field(ev, "child.image").has_value());

  Corpus c;
  ProcessRef p = proc("gp", "c:\\w.exe");
  AuditEvent cr = c.start(p, proc("gc", "C:\\Child.EXE", "gp", "Child RUN"));
  CHECK(resolve_field(cr, "child.image") == "c:\\child.exe");
  CHECK(resolve_field(cr, "child.cmdline") == "child run");
  CHECK(resolve_field(cr, "child.guid") == "gc");

  AuditEvent rs = c.regset(p, "HKEY_LOCAL_MACHINE\\Software\\K", "Name", "C:\\Pay.EXE");
  CHECK(resolve_field(rs, "object.reg_key") == "hklm\\software\\k");
  CHECK(resolve_field(rs, "object.reg_value_name") == "name");
  // Values are usually commands or paths; the path heuristic applies.
  CHECK(resolve_field(rs, "object.reg_value") == "c:\\pay.exe");

  AuditEvent cn = c.connect(p, "1.2.3.4", 443);
  CHECK(resolve_field(cn, "object.ip") == "1.2.3.4");
  CHECK(resolve_field(cn, "object.port") == "443");
  CHECK(resolve_field(cn, "object.direction") == "out");

  AuditEvent ac = c.acreate(p, "Bob", false);
  CHECK(resolve_field(ac, "object.account") == "bob");
  CHECK(resolve_field(ac, "object.domain") == "false");

  CHECK(known_field("object.module"));
  CHECK(!known_field("object.nonsense"));

  // POSIX paths keep their case through canonicalization.
  Corpus lx("lx");
  AuditEvent pe = lx.fwrite(proc("gl", "/usr/bin/X"), "/var/WWW/File");
  CHECK(resolve_field(pe, "object.path") == "/var/WWW/File");
  CHECK(canon_value_for_field("object.path", "/var/WWW/File") == "/var/WWW/File");
  CHECK(canon_value_for_field("object.path", "C:\\Dir\\F") == "c:\\dir\\f");
  CHECK(canon_value_for_field("object.reg_key", "HKEY_CURRENT_USER\\A") == "hkcu\\a");
  CHECK(canon_value_for_field("object.account", "Admin") == "admin");
}

TEST_CASE("predicate operators, negation, and the missing-field rule") {
  AuditEvent ev = sample_write();
  auto P = [](std::string field, PredOp op, std::string value, bool neg = false) {
    Predicate p;
    p.field = std::move(field);
    p.op = op;
    p.values = {canon_value_for_field(p.field, value)};
    p.negate = neg;
    return p;
  };

  CHECK(eval_predicate(P("object.path", PredOp::Equals, "C:\\DIR\\Sub\\FILE.txt"), ev));
  CHECK(eval_predicate(P("object.path", PredOp::Prefix, "c:\\dir\\"), ev));
  CHECK(eval_predicate(P("object.path", PredOp::Suffix, ".txt"), ev));
  // Value canonicalization is data-driven: a bare ".TXT" does not look like a
  // Windows path, so it keeps its case and cannot match the lowered field.
  CHECK(!eval_predicate(P("object.path", PredOp::Suffix, ".TXT"), ev));
  CHECK(eval_predicate(P("object.path", PredOp::Contains, "\\sub\\"), ev));
  CHECK(eval_predicate(P("object.path", PredOp::Glob, "c:\\*\\sub\\*.txt"), ev));
  CHECK(!eval_predicate(P("object.path", PredOp::Glob, "c:\\*\\nope\\*.txt"), ev));
  CHECK(!eval_predicate(P("object.path", PredOp::Prefix, "d:\\"), ev));
  CHECK(eval_predicate(P("object.path", PredOp::Prefix, "d:\\", true), ev));

  Predicate in_set;
  in_set.field = "event_type";
  in_set.op = PredOp::InSet;
  in_set.values = {"FILE_READ", "FILE_WRITE"};
  CHECK(eval_predicate(in_set, ev));
  in_set.negate = true;
  CHECK(!eval_predicate(in_set, ev));

  // A predicate over a field the event lacks is false, negated or not.
  CHECK(!eval_predicate(P("object.reg_key", PredOp::Prefix, "hklm"), ev));
  CHECK(!eval_predicate(P("object.reg_key", PredOp::Prefix, "hklm", true), ev));

  CHECK(eval_all({P("object.path", PredOp::Prefix, "c:\\"),
                  P("object.path", PredOp::Suffix, ".txt")},
                 ev));
  CHECK(!eval_all({P("object.path", PredOp::Prefix, "c:\\"),
                   P("object.path", PredOp::Suffix, ".exe")},
                  ev));

  CHECK(glob_match("*", ""));
  CHECK(glob_match("a?c", "abc"));
  CHECK(!glob_match("a?c", "ac"));
  CHECK(glob_match("*end", "the-end"));
  CHECK(glob_match("a*b*c", "aXXbYYc"));
  CHECK(!glob_match("a*b*c", "aXXcYYb"));
}

TEST_CASE("capture transforms extract alignment tokens") {
  AuditEvent ev = sample_write();
  auto cap = [&](const std::string& field, const std::string& transform,
                 const AuditEvent& e) {
    return apply_capture(parse_capture_spec(field, transform, -1), e);
  };
  CHECK(cap("object.path", "", ev) == "c:\\dir\\sub\\file.txt");
  CHECK(cap("object.path", "basename", ev) == "file.txt");
  CHECK(cap("object.path", "segment_after:dir", ev) == "sub");
  CHECK(cap("object.path", "segment_after:sub", ev) == "file.txt");
  CHECK(!cap("object.path", "segment_after:file.txt", ev).has_value());
  CHECK(!cap("object.path", "segment_after:absent", ev).has_value());
  CHECK(cap("actor.cmdline", "token_after:--flag", ev) == "value");
  CHECK(!cap("actor.cmdline", "token_after:value", ev).has_value());
  CHECK(!cap("object.reg_key", "basename", ev).has_value());  // field missing

  Corpus c("lx");
  AuditEvent px = c.fwrite(proc("g", "/bin/x"), "/a/b/c.service");
  CHECK(cap("object.path", "basename", px) == "c.service");
  CHECK(cap("object.path", "segment_after:a", px) == "b");

  Corpus w;
  ProcessRef op = proc("go", "c:\\t.exe", "",
                       "wmic /namespace:x path Consumer create Name=\"EvilC\" exe=z");
  AuditEvent sp = w.start(op, proc("gw", "c:\\windows\\system32\\wbem\\wmic.exe", "go",
                                   "wmic path Consumer create name=evilc cmd=y"));
  CHECK(cap("child.cmdline", "token_value:name=", sp) == "evilc");
  CHECK(!cap("child.cmdline", "token_value:absent=", sp).has_value());

  CHECK_THROWS_AS((void)parse_capture_spec("object.path", "rot13", -1), RuleError);
  CHECK_THROWS_AS((void)parse_capture_spec("object.nosuch", "", -1), RuleError);
  CHECK_THROWS_AS((void)parse_capture_spec("object.path", "segment_after:", -1), RuleError);
}

TEST_CASE("single-group setup matching captures tokens and sorts records") {
  RuleSet rs = default_rules();
  Corpus c;
  ProcessRef mal = proc("g-mal", "c:\\users\\u\\mal.exe");
  c.regset(mal, "hklm\\software\\microsoft\\windows\\currentversion\\run", "Updater",
           "c:\\users\\u\\payload.exe");
  c.fwrite(mal, "c:\\users\\u\\appdata\\roaming\\microsoft\\windows\\start menu\\programs"
                "\\startup\\boot.lnk");
  EventStore s = c.store();

  std::vector<MatchRecord> ms = match_setup(s, rs);
  REQUIRE(ms.size() == 2);
  CHECK(ms[0].rule_id == "r-setup-run-key");
  CHECK(ms[0].label == "T1547.001");
  CHECK(ms[0].tactic == "persistence");
  CHECK(ms[0].captures.at("trigger") == "updater");
  CHECK(ms[0].captures.at("payload") == "c:\\users\\u\\payload.exe");
  CHECK(ms[1].rule_id == "r-setup-startup-folder");
  CHECK(ms[1].captures.at("trigger").find("\\startup\\boot.lnk") != std::string::npos);
  CHECK(ms[0].ts <= ms[1].ts);
  CHECK(ms[0].event != nullptr);
  CHECK(ms[0].event_id == ms[0].event->id);
}

TEST_CASE("allowlisted actors are suppressed unless their image was tampered first") {
  RuleSet rs = default_rules();

  Corpus benign;
  ProcessRef expl = proc("g-exp", "c:\\windows\\explorer.exe");
  benign.regset(expl, "hkcu\\software\\microsoft\\windows\\currentversion\\run", "Sync",
                "c:\\sync.exe");
  CHECK(match_setup(benign.store(), rs).empty());

  // Same action, but the binary was overwritten beforehand: the allowlist
  // assumption no longer holds and the match must surface.
  Corpus tampered;
  ProcessRef evil = proc("g-evil", "c:\\users\\u\\i.exe");
  tampered.fwrite(evil, "c:\\windows\\explorer.exe");
  tampered.gap(1000);
  tampered.regset(expl, "hkcu\\software\\microsoft\\windows\\currentversion\\run", "Sync",
                  "c:\\sync.exe");
  std::vector<MatchRecord> ms = match_setup(tampered.store(), rs);
  REQUIRE(ms.size() == 1);
  CHECK(ms[0].rule_id == "r-setup-run-key");

  // Tamper at the same timestamp is not "before".
  Corpus same;
  same.fwrite(evil, "c:\\windows\\explorer.exe");
  same.regset(expl, "hkcu\\software\\microsoft\\windows\\currentversion\\run", "Sync",
              "c:\\sync.exe");
  std::vector<AuditEvent> evs = same.events();
  evs[1].ts = evs[0].ts;
  CHECK(match_setup(EventStore::from_events(evs), rs).empty());

  // ignore_allowlist bypasses the actor check entirely (brokered writes).
  Corpus broker;
  ProcessRef services = proc("g-svc", "c:\\windows\\system32\\services.exe");
  broker.regset(services, "hklm\\system\\currentcontrolset\\services\\badsvc", "ImagePath",
                "c:\\users\\u\\b.exe");
  std::vector<MatchRecord> bs = match_setup(broker.store(), rs);
  REQUIRE(bs.size() == 1);
  CHECK(bs[0].rule_id == "r-setup-service-image");
  CHECK(bs[0].captures.at("trigger") == "badsvc");
}

TEST_CASE("dropped-then-deleted objects are suppressed, boundary exclusive") {
  RuleSet rs = default_rules();
  const char* lnk = "c:\\u\\start menu\\programs\\startup\\x.lnk";

  Corpus gone;
  ProcessRef mal = proc("g-m", "c:\\m.exe");
  gone.fwrite(mal, lnk);
  gone.gap(5000);
  gone.fdelete(mal, lnk);
  CHECK(match_setup(gone.store(), rs).empty());

  // Deletion at exactly the write timestamp does not suppress (strictly after).
  Corpus simul;
  simul.fwrite(mal, lnk);
  simul.fdelete(mal, lnk);
  std::vector<AuditEvent> evs = simul.events();
  evs[1].ts = evs[0].ts;
  CHECK(match_setup(EventStore::from_events(evs), rs).size() == 1);

  // The run-key rule has no suppress_if_deleted; deletion does not matter.
  Corpus keyed;
  keyed.regset(mal, "hkcu\\x\\currentversion\\run", "A", "c:\\p.exe");
  CHECK(match_setup(keyed.store(), rs).size() == 1);
}

TEST_CASE("sequenced rules take the nearest preceding correlated event per group") {
  std::string seq =
      R"([{"schema":"persist-trace-rule/1","kind":"detection","id":"r-seq","technique":"T1000",)"
      R"("tactic":"persistence","phase":"setup","max_span_ms":10000,)"
      R"("conditions":[[{"field":"event_type","op":"equals","value":"FILE_WRITE"},)"
      R"({"field":"object.path","op":"suffix","value":".exe"}],)"
      R"([{"field":"event_type","op":"equals","value":"NET_CONNECT"}]],)"
      R"("captures":[{"name":"src","field":"object.path","group":0}]}])";
  RuleSet rs = load_ruleset(rules_dir("seq", seq));

  SUBCASE("subject-guid correlation picks the nearest write by the same process") {
    Corpus c;
    ProcessRef a = proc("g-a", "c:\\a.exe");
    ProcessRef b = proc("g-b", "c:\\b.exe");
    c.fwrite(a, "c:\\one.exe");
    c.gap(1000);
    c.fwrite(a, "c:\\two.exe");
    c.gap(1000);
    c.fwrite(b, "c:\\other.exe");  // different subject, ignored
    c.gap(1000);
    AuditEvent cn = c.connect(a, "9.9.9.9", 443);
    std::vector<MatchRecord> ms = match_setup(c.store(), rs);
    REQUIRE(ms.size() == 1);
    CHECK(ms[0].event_id == cn.id);  // record anchored on the final event
    CHECK(ms[0].ts == cn.ts);
    CHECK(ms[0].captures.at("src") == "c:\\two.exe");  // nearest, not first
  }

  SUBCASE("span boundary is inclusive") {
    Corpus c;
    ProcessRef a = proc("g-a", "c:\\a.exe");
    AuditEvent w = c.fwrite(a, "c:\\one.exe");
    c.connect(a, "9.9.9.9", 443);
    std::vector<AuditEvent> evs = c.events();
    evs[1].ts = w.ts + 10000;
    CHECK(match_setup(EventStore::from_events(evs), rs).size() == 1);
    evs[1].ts = w.ts + 10001;
    CHECK(match_setup(EventStore::from_events(evs), rs).empty());
  }

  SUBCASE("two finals may reuse the same earlier event") {
    Corpus c;
    ProcessRef a = proc("g-a", "c:\\a.exe");
    c.fwrite(a, "c:\\one.exe");
    c.connect(a, "9.9.9.9", 443);
    c.connect(a, "9.9.9.9", 444);
    CHECK(match_setup(c.store(), rs).size() == 2);
  }

  SUBCASE("a final with no preceding correlated write does not match") {
    Corpus c;
    ProcessRef a = proc("g-a", "c:\\a.exe");
    ProcessRef b = proc("g-b", "c:\\b.exe");
    c.fwrite(b, "c:\\one.exe");
    c.connect(a, "9.9.9.9", 443);
    CHECK(match_setup(c.store(), rs).empty());
  }
}

TEST_CASE("correlate_on links groups by captured token instead of subject") {
  std::string seq =
      R"([{"schema":"persist-trace-rule/1","kind":"detection","id":"r-tok","technique":"T1000",)"
      R"("tactic":"persistence","phase":"setup","max_span_ms":60000,"correlate_on":"tool",)"
      R"("conditions":[[{"field":"event_type","op":"equals","value":"FILE_WRITE"},)"
      R"({"field":"object.path","op":"suffix","value":".dll"}],)"
      R"([{"field":"event_type","op":"equals","value":"MODULE_LOAD"}]],)"
      R"("captures":[{"name":"tool","field":"object.path","transform":"basename","group":0},)"
      R"({"name":"tool","field":"object.module","transform":"basename"}]}])";
  RuleSet rs = load_ruleset(rules_dir("corrtok", seq));

  Corpus c;
  ProcessRef writer = proc("g-w", "c:\\w.exe");
  ProcessRef loader = proc("g-l", "c:\\l.exe");  // different process: token links them
  c.fwrite(writer, "c:\\drop\\evil.dll");
  c.fwrite(writer, "c:\\drop\\other.dll");
  c.gap(500);
  AuditEvent ld = c.mload(loader, "c:\\app\\EVIL.DLL");
  std::vector<MatchRecord> ms = match_setup(c.store(), rs);
  REQUIRE(ms.size() == 1);
  CHECK(ms[0].event_id == ld.id);
  CHECK(ms[0].captures.at("tool") == "evil.dll");  // final group's capture wins
}

TEST_CASE("execution matching walks the creation path to the anchor") {
  RuleSet rs = default_rules();
  Corpus c;
  ProcessRef expl = proc("g-exp", "c:\\windows\\explorer.exe");
  ProcessRef pay = proc("g-pay", "c:\\users\\u\\payload.exe", "g-exp");
  ProcessRef iso = proc("g-iso", "c:\\iso.exe");  // unrelated process
  const char* lnk = "c:\\u\\start menu\\programs\\startup\\x.lnk";
  c.fread(expl, lnk);
  c.start(expl, pay);
  c.connect(pay, "203.0.113.9", 4444);
  c.connect(iso, "203.0.113.10", 443);
  BuiltCase bc = build_case(c);

  std::vector<const AuditEvent*> trace;
  for (std::size_t i = 0; i < bc.store.size(); ++i) trace.push_back(&bc.store.at(i));

  std::vector<MatchRecord> ms = match_execution(trace, "g-pay", bc.graph, rs);
  REQUIRE(ms.size() == 1);
  CHECK(ms[0].rule_id == "r-exec-startup-folder");
  CHECK(ms[0].anchor_guid == "g-pay");
  CHECK(ms[0].captures.at("trigger") == lnk);

  // No match against an anchor the subject cannot reach.
  CHECK(match_execution(trace, "g-iso", bc.graph, rs).empty());
  // Unknown anchor: nothing.
  CHECK(match_execution(trace, "g-nope", bc.graph, rs).empty());
  // The subject reaching itself is a valid one-node path.
  std::vector<MatchRecord> self = match_execution(trace, "g-exp", bc.graph, rs);
  REQUIRE(self.size() == 1);
  CHECK(self[0].anchor_guid == "g-exp");
}

TEST_CASE("anchor_only execution rules ignore matches on other processes") {
  RuleSet rs = default_rules();
  Corpus c;
  ProcessRef expl = proc("g-exp", "c:\\windows\\explorer.exe");
  ProcessRef pay = proc("g-pay", "c:\\users\\u\\p.exe", "g-exp");
  ProcessRef kid = proc("g-kid", "c:\\users\\u\\k.exe", "g-pay");
  c.start(expl, pay);
  c.mload(pay, "c:\\windows\\system32\\hijack.dll");
  c.start(pay, kid);
  BuiltCase bc = build_case(c);
  std::vector<const AuditEvent*> trace;
  for (std::size_t i = 0; i < bc.store.size(); ++i) trace.push_back(&bc.store.at(i));

  // Load happened in g-pay: matches when g-pay is the anchor...
  std::vector<MatchRecord> ms = match_execution(trace, "g-pay", bc.graph, rs);
  REQUIRE(ms.size() == 1);
  CHECK(ms[0].rule_id == "r-exec-dll-search-order");
  // ...but not when the anchor is its child, even though a path exists.
  CHECK(match_execution(trace, "g-kid", bc.graph, rs).empty());
}

TEST_CASE("required_ancestor may be satisfied by an intermediate process") {
  RuleSet rs = default_rules();
  Corpus c;
  ProcessRef svchost = proc("g-svch", "c:\\windows\\system32\\svchost.exe", "",
                            "svchost.exe -k netsvcs -p -s schedule");
  ProcessRef task = proc("g-task", "c:\\users\\u\\task.exe", "g-svch");
  ProcessRef sub = proc("g-sub", "c:\\users\\u\\sub.exe", "g-task");
  c.fread(svchost, "c:\\windows\\system32\\tasks\\evil");
  c.start(svchost, task);
  c.start(task, sub);
  BuiltCase bc = build_case(c);
  std::vector<const AuditEvent*> trace;
  for (std::size_t i = 0; i < bc.store.size(); ++i) trace.push_back(&bc.store.at(i));

  // Anchor two hops below the scheduler: svchost still sits on the path.
  std::vector<MatchRecord> ms = match_execution(trace, "g-sub", bc.graph, rs);
  REQUIRE(ms.size() == 1);
  CHECK(ms[0].rule_id == "r-exec-sched-task");
}

TEST_CASE("indicator matching is a flat scan over the given events") {
  RuleSet rs = default_rules();
  Corpus c;
  ProcessRef word = proc("g-word", "c:\\program files\\microsoft office\\winword.exe");
  ProcessRef shell = proc("g-sh", "c:\\windows\\system32\\cmd.exe", "g-word");
  ProcessRef who = proc("g-who", "c:\\windows\\system32\\whoami.exe", "g-sh");
  c.start(word, shell);
  c.start(shell, who);
  c.fread(shell, "c:\\windows\\system32\\config\\sam");
  EventStore s = c.store();
  std::vector<const AuditEvent*> evs;
  for (std::size_t i = 0; i < s.size(); ++i) evs.push_back(&s.at(i));

  std::vector<MatchRecord> ms = match_indicators(evs, rs);
  std::vector<std::string> ids;
  for (const auto& m : ms) ids.push_back(m.rule_id);
  CHECK(std::count(ids.begin(), ids.end(), "r-ind-office-spawn") == 1);
  CHECK(std::count(ids.begin(), ids.end(), "r-ind-user-discovery") == 1);
  CHECK(std::count(ids.begin(), ids.end(), "r-ind-cred-store-read") == 1);
  for (std::size_t i = 1; i < ms.size(); ++i) CHECK(ms[i - 1].ts <= ms[i].ts);

  CHECK(match_indicators({}, rs).empty());
}
