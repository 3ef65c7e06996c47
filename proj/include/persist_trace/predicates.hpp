#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "persist_trace/events.hpp"

namespace persist_trace {

enum class PredOp { Equals, Prefix, Suffix, Contains, InSet, Glob };

std::optional<PredOp> pred_op_from_name(std::string_view name);
std::string_view pred_op_name(PredOp op);

// Field comparison happens in canonical space: Windows-insensitive fields are
// lowercased on both sides at load/eval time, POSIX paths stay case-sensitive.
struct Predicate {
  std::string field;
  PredOp op = PredOp::Equals;
  std::vector<std::string> values;  // canonicalized at load
  bool negate = false;
};

// Dotted field paths as documented in docs/rule-format.md. Returns the
// canonical value, or nullopt when the event has no such field (a predicate
// over a missing field is false, negated or not).
std::optional<std::string> resolve_field(const AuditEvent& ev, std::string_view field);
bool known_field(std::string_view field);

// Canonicalizes a rule-supplied comparison value the same way the field it
// targets is canonicalized.
std::string canon_value_for_field(std::string_view field, std::string_view value);

bool eval_predicate(const Predicate& p, const AuditEvent& ev);
bool eval_all(const std::vector<Predicate>& preds, const AuditEvent& ev);

bool glob_match(std::string_view pattern, std::string_view text);

// Capture transforms pull alignment tokens out of wider field values:
//   none                 value as-is
//   basename             last path component (both separators)
//   segment_after:<seg>  path component following the component <seg>
//   token_after:<word>   whitespace token following the token <word>
//   token_value:<prefix> remainder of the whitespace token starting with <prefix>
enum class Transform { None, Basename, SegmentAfter, TokenAfter, TokenValue };

struct CaptureSpec {
  std::string field;
  Transform transform = Transform::None;
  std::string arg;
  int group = -1;  // sequenced rules: which condition group to read; -1 = final
};

std::optional<std::string> apply_capture(const CaptureSpec& spec, const AuditEvent& ev);

CaptureSpec parse_capture_spec(const std::string& field, const std::string& transform_text,
                               int group);

}  // namespace persist_trace
