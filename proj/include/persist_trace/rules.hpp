#pragma once

#include <map>
#include <string>
#include <vector>

#include "persist_trace/graph.hpp"
#include "persist_trace/predicates.hpp"
#include "persist_trace/store.hpp"

namespace persist_trace {

inline constexpr std::string_view kRuleSchema = "persist-trace-rule/1";

enum class RulePhase { Setup, Execution, Indicator };

enum class GroupSubject { Actor, Child };

struct ConditionGroup {
  std::vector<Predicate> all;
  GroupSubject subject = GroupSubject::Actor;
};

// One structured document per rule; grammar in docs/rule-format.md.
struct DetectionRule {
  std::string id;
  std::string technique;  // T####(.###)
  std::string tactic;
  RulePhase phase = RulePhase::Setup;
  std::vector<ConditionGroup> groups;
  TimeMs max_span_ms = 30000;
  // Sequenced rules correlate groups by subject guid, unless correlate_on
  // names a capture each group extracts; then token equality links them.
  std::string correlate_on;
  // Ordered; the same name may be captured once per group (last wins in the
  // match record, which is safe because correlated tokens are equal).
  struct NamedCapture {
    std::string name;
    CaptureSpec spec;
  };
  std::vector<NamedCapture> captures;
  std::vector<Predicate> required_ancestor;  // execution only; fields actor.*
  bool anchor_only = false;
  bool ignore_allowlist = false;
  bool suppress_if_deleted = false;
  bool partial_sensitivity = false;
};

struct RuleSet {
  std::vector<DetectionRule> rules;
  std::vector<ExpertEdgeRule> expert_rules;
  std::vector<std::string> allowlist;  // canonical image paths

  bool is_allowlisted(const std::string& canon_image) const;
  std::vector<const DetectionRule*> phase_rules(RulePhase phase) const;
};

struct MatchRecord {
  const AuditEvent* event = nullptr;
  std::string event_id;
  std::string label;  // technique
  std::string tactic;
  TimeMs ts = 0;
  std::string rule_id;
  std::map<std::string, std::string> captures;
  std::string anchor_guid;  // execution matches
  bool partial_sensitivity = false;
};

// Loads every *.json rule document under dir (non-recursive, sorted order).
// Duplicate ids and schema violations raise RuleError.
RuleSet load_ruleset(const std::string& dir);
// Additional expert-edge rules from a file or directory; merged by the caller.
std::vector<ExpertEdgeRule> load_expert_rules(const std::string& path);

std::vector<std::string> lint_ruleset(const std::string& dir);

bool check_condition(const ConditionGroup& group, const AuditEvent& ev);

// Stage-1 sweep. Sequenced rules match greedily: for each candidate final
// event the nearest preceding event per earlier group (same correlation key)
// is chosen; the match stands if that tuple fits max_span_ms. Exactly the two
// documented suppressions apply (critical-process allowlist unless the image
// was modified earlier; dropped-then-deleted objects).
std::vector<MatchRecord> match_setup(const EventStore& store, const RuleSet& rules);

// Matches execution rules over a backward-trace event list for one anchor.
// required_ancestor must match some process on the Start/ExpertGuided path
// from the matched event's subject to the anchor.
std::vector<MatchRecord> match_execution(const std::vector<const AuditEvent*>& trace_events,
                                         const std::string& anchor_guid,
                                         const ProvenanceGraph& graph, const RuleSet& rules);

// Single-event indicator rules over arbitrary event lists (triage stage).
std::vector<MatchRecord> match_indicators(const std::vector<const AuditEvent*>& events,
                                          const RuleSet& rules);

}  // namespace persist_trace
