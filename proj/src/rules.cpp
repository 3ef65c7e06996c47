#include "persist_trace/rules.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <set>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace persist_trace {

namespace {

bool valid_technique(std::string_view t) {
  if (t.size() != 5 && t.size() != 9) return false;
  if (t[0] != 'T') return false;
  for (int i = 1; i < 5; ++i)
    if (!std::isdigit(static_cast<unsigned char>(t[i]))) return false;
  if (t.size() == 9) {
    if (t[5] != '.') return false;
    for (int i = 6; i < 9; ++i)
      if (!std::isdigit(static_cast<unsigned char>(t[i]))) return false;
  }
  return true;
}

Predicate parse_predicate(const json& j, const std::string& where) {
  Predicate p;
  if (!j.is_object()) throw RuleError(where + ": predicate must be an object");
  p.field = j.value("field", "");
  if (!known_field(p.field)) throw RuleError(where + ": unknown field '" + p.field + "'");
  auto op = pred_op_from_name(j.value("op", ""));
  if (!op) throw RuleError(where + ": unknown op '" + j.value("op", "") + "'");
  p.op = *op;
  p.negate = j.value("negate", false);

  if (j.contains("values")) {
    if (!j["values"].is_array()) throw RuleError(where + ": values must be an array");
    for (const auto& v : j["values"])
      p.values.push_back(canon_value_for_field(p.field, v.get<std::string>()));
  } else if (j.contains("value")) {
    p.values.push_back(canon_value_for_field(p.field, j["value"].get<std::string>()));
  }
  if (p.values.empty()) throw RuleError(where + ": predicate needs value(s)");
  if (p.op != PredOp::InSet && p.values.size() != 1)
    throw RuleError(where + ": multiple values only valid with in_set");
  return p;
}

CaptureSpec parse_capture(const json& j, const std::string& where) {
  if (j.is_string())
    return parse_capture_spec(j.get<std::string>(), "", -1);
  if (!j.is_object()) throw RuleError(where + ": capture must be a string or object");
  try {
    return parse_capture_spec(j.value("field", ""), j.value("transform", ""), j.value("group", -1));
  } catch (const RuleError& e) {
    throw RuleError(where + ": " + e.what());
  }
}

ExpertEventMatcher parse_expert_matcher(const json& j, const std::string& where) {
  ExpertEventMatcher m;
  if (!j.is_object()) throw RuleError(where + ": matcher must be an object");
  for (const auto& p : j.value("all", json::array())) m.all.push_back(parse_predicate(p, where));
  if (m.all.empty()) throw RuleError(where + ": matcher needs predicates");
  if (j.value("subject", "actor") == "child") m.subject = ExpertSubject::Child;
  if (!j.contains("token")) throw RuleError(where + ": matcher needs a token capture");
  m.token = parse_capture(j["token"], where);
  return m;
}

DetectionRule parse_detection_rule(const json& j, const std::string& where) {
  DetectionRule r;
  r.id = j.value("id", "");
  if (r.id.empty()) throw RuleError(where + ": missing id");
  r.technique = j.value("technique", "");
  if (!valid_technique(r.technique))
    throw RuleError(where + ": bad technique '" + r.technique + "'");
  r.tactic = j.value("tactic", "");
  if (r.tactic.empty()) throw RuleError(where + ": missing tactic");

  std::string phase = j.value("phase", "");
  if (phase == "setup")
    r.phase = RulePhase::Setup;
  else if (phase == "execution")
    r.phase = RulePhase::Execution;
  else if (phase == "indicator")
    r.phase = RulePhase::Indicator;
  else
    throw RuleError(where + ": bad phase '" + phase + "'");

  if (!j.contains("conditions") || !j["conditions"].is_array() || j["conditions"].empty())
    throw RuleError(where + ": conditions must be a non-empty array of groups");
  for (const auto& gj : j["conditions"]) {
    ConditionGroup g;
    const json* preds = &gj;
    if (gj.is_object()) {
      if (gj.value("subject", "actor") == "child") g.subject = GroupSubject::Child;
      if (!gj.contains("all")) throw RuleError(where + ": condition group needs 'all'");
      preds = &gj["all"];
    }
    if (!preds->is_array() || preds->empty())
      throw RuleError(where + ": condition group must be a non-empty predicate array");
    for (const auto& pj : *preds) g.all.push_back(parse_predicate(pj, where));
    r.groups.push_back(std::move(g));
  }

  r.max_span_ms = j.value("max_span_ms", static_cast<TimeMs>(30000));
  if (r.max_span_ms <= 0) throw RuleError(where + ": max_span_ms must be positive");
  r.correlate_on = j.value("correlate_on", "");

  // Object form maps name -> spec; the array form carries explicit names and
  // allows one capture of the same name per group.
  const json& caps = j.value("captures", json::object());
  if (caps.is_object()) {
    for (const auto& [name, cj] : caps.items())
      r.captures.push_back({name, parse_capture(cj, where + " capture '" + name + "'")});
  } else if (caps.is_array()) {
    for (const auto& cj : caps) {
      std::string name = cj.is_object() ? cj.value("name", "") : "";
      if (name.empty()) throw RuleError(where + ": array-form capture needs a name");
      r.captures.push_back({name, parse_capture(cj, where + " capture '" + name + "'")});
    }
  } else {
    throw RuleError(where + ": captures must be an object or an array");
  }

  for (const auto& pj : j.value("required_ancestor", json::array())) {
    Predicate p = parse_predicate(pj, where + " required_ancestor");
    if (p.field != "actor.image" && p.field != "actor.cmdline" && p.field != "actor.guid")
      throw RuleError(where + ": required_ancestor fields must be actor.image/cmdline/guid");
    r.required_ancestor.push_back(std::move(p));
  }

  r.anchor_only = j.value("anchor_only", false);
  r.ignore_allowlist = j.value("ignore_allowlist", false);
  r.suppress_if_deleted = j.value("suppress_if_deleted", false);
  r.partial_sensitivity = j.value("sensitivity", "full") == "partial";

  if (r.phase == RulePhase::Execution) {
    if (r.groups.size() != 1)
      throw RuleError(where + ": execution rules take exactly one condition group");
    if (r.required_ancestor.empty() && !r.anchor_only)
      throw RuleError(where + ": execution rules need required_ancestor or anchor_only");
  }
  if (r.phase == RulePhase::Indicator && r.groups.size() != 1)
    throw RuleError(where + ": indicator rules take exactly one condition group");

  if (!r.correlate_on.empty()) {
    int last = static_cast<int>(r.groups.size()) - 1;
    for (int i = 0; i <= last; ++i) {
      bool found = false;
      for (const auto& nc : r.captures)
        if (nc.name == r.correlate_on &&
            (nc.spec.group == i || (i == last && nc.spec.group == -1)))
          found = true;
      if (!found)
        throw RuleError(where + ": correlate_on '" + r.correlate_on +
                        "' needs a capture for every group (missing group " + std::to_string(i) +
                        ")");
    }
  }
  for (const auto& nc : r.captures) {
    if (nc.spec.group >= static_cast<int>(r.groups.size()))
      throw RuleError(where + ": capture '" + nc.name + "' references group " +
                      std::to_string(nc.spec.group) + " out of range");
  }
  return r;
}

ExpertEdgeRule parse_expert_rule(const json& j, const std::string& where) {
  ExpertEdgeRule r;
  r.id = j.value("id", "");
  if (r.id.empty()) throw RuleError(where + ": missing id");
  r.technique = j.value("technique", "");
  if (!j.contains("trigger") || !j.contains("broker"))
    throw RuleError(where + ": expert-edge rules need trigger and broker matchers");
  r.trigger = parse_expert_matcher(j["trigger"], where + " trigger");
  r.broker = parse_expert_matcher(j["broker"], where + " broker");
  r.window_ms = j.value("window_ms", static_cast<TimeMs>(30000));
  if (r.window_ms <= 0) throw RuleError(where + ": window_ms must be positive");
  std::string role = j.value("edge_src", "trigger_process");
  if (role == "trigger_process")
    r.src_role = ExpertSrcRole::TriggerProcess;
  else if (role == "trigger_object")
    r.src_role = ExpertSrcRole::TriggerObject;
  else
    throw RuleError(where + ": bad edge_src '" + role + "'");
  return r;
}

std::vector<fs::path> rule_files(const std::string& path) {
  std::vector<fs::path> files;
  fs::path p(path);
  if (fs::is_directory(p)) {
    for (const auto& entry : fs::directory_iterator(p))
      if (entry.is_regular_file() && entry.path().extension() == ".json")
        files.push_back(entry.path());
    std::sort(files.begin(), files.end());
  } else if (fs::is_regular_file(p)) {
    files.push_back(p);
  } else {
    throw RuleError("no such rules path: " + path);
  }
  return files;
}

void load_documents(const std::string& path, RuleSet& out) {
  std::set<std::string> ids;
  for (const auto& file : rule_files(path)) {
    std::string where = file.filename().string();
    json j = json::parse(read_file(file.string()), nullptr, false);
    if (j.is_discarded()) throw RuleError(where + ": malformed json");

    std::vector<json> docs;
    if (j.is_array())
      docs.assign(j.begin(), j.end());
    else
      docs.push_back(std::move(j));

    for (const auto& doc : docs) {
      if (!doc.is_object()) throw RuleError(where + ": rule document must be an object");
      std::string schema = doc.value("schema", std::string(kRuleSchema));
      if (schema != kRuleSchema)
        throw RuleError(where + ": unsupported schema '" + schema + "'");
      std::string kind = doc.value("kind", "detection");
      if (kind == "allowlist") {
        for (const auto& img : doc.value("images", json::array()))
          out.allowlist.push_back(canon_path(img.get<std::string>()));
        continue;
      }
      std::string id = doc.value("id", "");
      if (!id.empty() && !ids.insert(id).second)
        throw RuleError(where + ": duplicate rule id '" + id + "'");
      if (kind == "expert-edge")
        out.expert_rules.push_back(parse_expert_rule(doc, where));
      else if (kind == "detection")
        out.rules.push_back(parse_detection_rule(doc, where));
      else
        throw RuleError(where + ": unknown kind '" + kind + "'");
    }
  }
}

}  // namespace

bool RuleSet::is_allowlisted(const std::string& canon_image) const {
  return std::find(allowlist.begin(), allowlist.end(), canon_image) != allowlist.end();
}

std::vector<const DetectionRule*> RuleSet::phase_rules(RulePhase phase) const {
  std::vector<const DetectionRule*> out;
  for (const auto& r : rules)
    if (r.phase == phase) out.push_back(&r);
  return out;
}

RuleSet load_ruleset(const std::string& dir) {
  RuleSet rs;
  load_documents(dir, rs);
  return rs;
}

std::vector<ExpertEdgeRule> load_expert_rules(const std::string& path) {
  RuleSet rs;
  load_documents(path, rs);
  if (!rs.rules.empty())
    throw RuleError("expected only expert-edge documents in " + path);
  return std::move(rs.expert_rules);
}

std::vector<std::string> lint_ruleset(const std::string& dir) {
  std::vector<std::string> issues;
  RuleSet rs;
  try {
    rs = load_ruleset(dir);
  } catch (const RuleError& e) {
    issues.push_back(std::string("error: ") + e.what());
    return issues;
  } catch (const IoError& e) {
    issues.push_back(std::string("error: ") + e.what());
    return issues;
  }
  for (const auto& r : rs.rules) {
    if (r.phase != RulePhase::Indicator && r.captures.empty())
      issues.push_back("warning: rule " + r.id + " captures nothing; alignment will never hold");
    bool has_type = false;
    for (const auto& g : r.groups)
      for (const auto& p : g.all)
        if (p.field == "event_type" && !p.negate) has_type = true;
    if (!has_type)
      issues.push_back("warning: rule " + r.id + " has no event_type predicate (full scans)");
  }
  return issues;
}

bool check_condition(const ConditionGroup& group, const AuditEvent& ev) {
  return eval_all(group.all, ev);
}

namespace {

// Candidate ordinals for a group, via the type index when the group pins the
// event type.
std::vector<std::uint32_t> candidates(const EventStore& store, const ConditionGroup& g) {
  for (const auto& p : g.all) {
    if (p.field == "event_type" && !p.negate &&
        (p.op == PredOp::Equals || (p.op == PredOp::InSet && p.values.size() == 1))) {
      if (auto t = event_type_from_name(p.values[0])) return store.by_type(*t);
      return {};
    }
  }
  std::vector<std::uint32_t> all(store.size());
  for (std::uint32_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

std::string group_subject_guid(const ConditionGroup& g, const AuditEvent& ev) {
  if (g.subject == GroupSubject::Child) {
    const auto* child = ev.child();
    return child ? child->guid : std::string();
  }
  return ev.actor.guid;
}

const CaptureSpec* capture_for_group(const DetectionRule& r, const std::string& name, int group) {
  int last = static_cast<int>(r.groups.size()) - 1;
  for (const auto& nc : r.captures) {
    if (nc.name != name) continue;
    if (nc.spec.group == group || (group == last && nc.spec.group == -1)) return &nc.spec;
  }
  return nullptr;
}

std::string correlation_key(const DetectionRule& r, std::size_t group_ix, const AuditEvent& ev) {
  if (r.correlate_on.empty()) return group_subject_guid(r.groups[group_ix], ev);
  const CaptureSpec* spec = capture_for_group(r, r.correlate_on, static_cast<int>(group_ix));
  if (!spec) return {};
  auto v = apply_capture(*spec, ev);
  return v ? *v : std::string();
}

bool event_before(const AuditEvent& a, const AuditEvent& b) {
  if (a.ts != b.ts) return a.ts < b.ts;
  return a.id < b.id;
}

void extract_captures(const DetectionRule& r, const std::vector<const AuditEvent*>& tuple,
                      MatchRecord& m) {
  for (const auto& nc : r.captures) {
    const AuditEvent* ev = tuple.back();
    if (nc.spec.group >= 0 && nc.spec.group < static_cast<int>(tuple.size()))
      ev = tuple[nc.spec.group];
    if (auto v = apply_capture(nc.spec, *ev)) m.captures[nc.name] = *v;
  }
}

MatchRecord make_match(const DetectionRule& r, const std::vector<const AuditEvent*>& tuple) {
  MatchRecord m;
  m.event = tuple.back();
  m.event_id = m.event->id;
  m.label = r.technique;
  m.tactic = r.tactic;
  m.ts = m.event->ts;
  m.rule_id = r.id;
  m.partial_sensitivity = r.partial_sensitivity;
  extract_captures(r, tuple, m);
  return m;
}

bool suppressed(const EventStore& store, const RuleSet& rules, const DetectionRule& r,
                const AuditEvent& ev) {
  if (!r.ignore_allowlist) {
    std::string image = canon_path(ev.actor.image);
    if (rules.is_allowlisted(image) && !store.image_modified_before(image, ev.ts)) return true;
  }
  if (r.suppress_if_deleted && !ev.okey.empty() && store.deleted_after(ev.okey, ev.ts))
    return true;
  return false;
}

}  // namespace

std::vector<MatchRecord> match_setup(const EventStore& store, const RuleSet& rules) {
  std::vector<MatchRecord> out;

  for (const auto* rp : rules.phase_rules(RulePhase::Setup)) {
    const DetectionRule& r = *rp;

    if (r.groups.size() == 1) {
      for (auto ix : candidates(store, r.groups[0])) {
        const AuditEvent& ev = store.at(ix);
        if (!check_condition(r.groups[0], ev)) continue;
        if (suppressed(store, rules, r, ev)) continue;
        out.push_back(make_match(r, {&ev}));
      }
      continue;
    }

    // Sequenced: per final event, greedily take the nearest preceding event
    // of each earlier group sharing the correlation key, then check the span.
    std::vector<std::vector<const AuditEvent*>> group_hits(r.groups.size());
    for (std::size_t gi = 0; gi < r.groups.size(); ++gi) {
      for (auto ix : candidates(store, r.groups[gi])) {
        const AuditEvent& ev = store.at(ix);
        if (check_condition(r.groups[gi], ev)) group_hits[gi].push_back(&ev);
      }
    }

    std::size_t last = r.groups.size() - 1;
    for (const AuditEvent* fin : group_hits[last]) {
      std::string key = correlation_key(r, last, *fin);
      if (key.empty()) continue;

      std::vector<const AuditEvent*> tuple(r.groups.size());
      tuple[last] = fin;
      bool complete = true;
      const AuditEvent* upper = fin;
      for (std::size_t gi = last; gi-- > 0;) {
        const AuditEvent* best = nullptr;
        for (const AuditEvent* cand : group_hits[gi]) {
          if (!event_before(*cand, *upper)) continue;
          if (correlation_key(r, gi, *cand) != key) continue;
          if (!best || event_before(*best, *cand)) best = cand;
        }
        if (!best) {
          complete = false;
          break;
        }
        tuple[gi] = best;
        upper = best;
      }
      if (!complete) continue;
      if (fin->ts - tuple[0]->ts > r.max_span_ms) continue;
      if (suppressed(store, rules, r, *fin)) continue;
      out.push_back(make_match(r, tuple));
    }
  }

  std::sort(out.begin(), out.end(), [](const MatchRecord& a, const MatchRecord& b) {
    if (a.ts != b.ts) return a.ts < b.ts;
    if (a.event_id != b.event_id) return a.event_id < b.event_id;
    return a.rule_id < b.rule_id;
  });
  return out;
}

std::vector<MatchRecord> match_execution(const std::vector<const AuditEvent*>& trace_events,
                                         const std::string& anchor_guid,
                                         const ProvenanceGraph& graph, const RuleSet& rules) {
  std::vector<MatchRecord> out;
  auto anchor_ix = graph.find_node(anchor_guid);
  if (!anchor_ix) return out;

  auto node_matches = [&](std::uint32_t node_ix, const std::vector<Predicate>& preds) {
    const Node& n = graph.node(node_ix);
    for (const auto& p : preds) {
      std::string value;
      if (p.field == "actor.image")
        value = n.image;
      else if (p.field == "actor.cmdline")
        value = canon_cmdline(n.cmdline);
      else if (p.field == "actor.guid")
        value = n.key;
      Predicate probe = p;
      AuditEvent shim;  // evaluate through the same operator semantics
      shim.actor.guid = value;
      probe.field = "actor.guid";
      if (!eval_predicate(probe, shim)) return false;
    }
    return true;
  };

  for (const auto* rp : rules.phase_rules(RulePhase::Execution)) {
    const DetectionRule& r = *rp;
    for (const AuditEvent* ev : trace_events) {
      if (!check_condition(r.groups[0], *ev)) continue;

      std::string subject = group_subject_guid(r.groups[0], *ev);
      if (subject.empty()) continue;
      if (r.anchor_only && subject != anchor_guid) continue;

      auto subject_ix = graph.find_node(subject);
      if (!subject_ix) continue;
      auto path = graph.forward_start_path(*subject_ix, *anchor_ix);
      if (!path) continue;

      if (!r.required_ancestor.empty()) {
        bool ok = false;
        for (auto n : *path)
          if (node_matches(n, r.required_ancestor)) {
            ok = true;
            break;
          }
        if (!ok) continue;
      }

      MatchRecord m = make_match(r, {ev});
      m.anchor_guid = anchor_guid;
      out.push_back(std::move(m));
    }
  }

  std::sort(out.begin(), out.end(), [](const MatchRecord& a, const MatchRecord& b) {
    if (a.ts != b.ts) return a.ts < b.ts;
    if (a.event_id != b.event_id) return a.event_id < b.event_id;
    return a.rule_id < b.rule_id;
  });
  return out;
}

std::vector<MatchRecord> match_indicators(const std::vector<const AuditEvent*>& events,
                                          const RuleSet& rules) {
  std::vector<MatchRecord> out;
  for (const auto* rp : rules.phase_rules(RulePhase::Indicator)) {
    const DetectionRule& r = *rp;
    for (const AuditEvent* ev : events)
      if (check_condition(r.groups[0], *ev)) out.push_back(make_match(r, {ev}));
  }
  std::sort(out.begin(), out.end(), [](const MatchRecord& a, const MatchRecord& b) {
    if (a.ts != b.ts) return a.ts < b.ts;
    if (a.event_id != b.event_id) return a.event_id < b.event_id;
    return a.rule_id < b.rule_id;
  });
  return out;
}

}  // namespace persist_trace
