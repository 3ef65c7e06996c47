#include "persist_trace/predicates.hpp"

#include <algorithm>
#include <array>

namespace persist_trace {

namespace {

constexpr std::array<std::pair<std::string_view, PredOp>, 6> kOps = {{
    {"equals", PredOp::Equals},
    {"prefix", PredOp::Prefix},
    {"suffix", PredOp::Suffix},
    {"contains", PredOp::Contains},
    {"in_set", PredOp::InSet},
    {"glob", PredOp::Glob},
}};

constexpr std::string_view kKnownFields[] = {
    "event_type",         "host",
    "actor.guid",         "actor.pid",
    "actor.image",        "actor.cmdline",
    "actor.parent_guid",  "child.guid",
    "child.pid",          "child.image",
    "child.cmdline",      "child.parent_guid",
    "object.path",        "object.reg_key",
    "object.reg_value_name", "object.reg_value",
    "object.ip",          "object.port",
    "object.direction",   "object.module",
    "object.account",     "object.domain",
};

std::optional<std::string> resolve_process_field(const ProcessRef* p, std::string_view leaf) {
  if (!p) return std::nullopt;
  if (leaf == "guid") return p->guid;
  if (leaf == "pid") return std::to_string(p->pid);
  if (leaf == "image") return canon_path(p->image);
  if (leaf == "cmdline") return canon_cmdline(p->cmdline);
  if (leaf == "parent_guid")
    return p->parent_guid.empty() ? std::nullopt : std::optional<std::string>(p->parent_guid);
  return std::nullopt;
}

}  // namespace

std::optional<PredOp> pred_op_from_name(std::string_view name) {
  for (auto [n, op] : kOps)
    if (n == name) return op;
  return std::nullopt;
}

std::string_view pred_op_name(PredOp op) {
  for (auto [n, o] : kOps)
    if (o == op) return n;
  return "?";
}

bool known_field(std::string_view field) {
  return std::find(std::begin(kKnownFields), std::end(kKnownFields), field) !=
         std::end(kKnownFields);
}

std::optional<std::string> resolve_field(const AuditEvent& ev, std::string_view field) {
  if (field == "event_type") return std::string(event_type_name(ev.type));
  if (field == "host") return ev.host;
  if (field.substr(0, 6) == "actor.") return resolve_process_field(&ev.actor, field.substr(6));
  if (field.substr(0, 6) == "child.") return resolve_process_field(ev.child(), field.substr(6));

  if (field == "object.path") {
    if (const auto* f = ev.file()) return canon_path(f->path);
    return std::nullopt;
  }
  if (field == "object.reg_key") {
    if (const auto* r = ev.reg()) return canon_reg_key(r->key);
    return std::nullopt;
  }
  if (field == "object.reg_value_name") {
    if (const auto* r = ev.reg(); r && !r->value_name.empty()) return to_lower(r->value_name);
    return std::nullopt;
  }
  if (field == "object.reg_value") {
    if (const auto* r = ev.reg(); r && !r->value.empty()) return canon_path(r->value);
    return std::nullopt;
  }
  if (field == "object.ip") {
    if (const auto* e = ev.endpoint()) return e->ip;
    return std::nullopt;
  }
  if (field == "object.port") {
    if (const auto* e = ev.endpoint()) return std::to_string(e->port);
    return std::nullopt;
  }
  if (field == "object.direction") {
    if (const auto* e = ev.endpoint()) return e->direction;
    return std::nullopt;
  }
  if (field == "object.module") {
    if (const auto* m = ev.module_()) return canon_path(m->path);
    return std::nullopt;
  }
  if (field == "object.account") {
    if (const auto* a = ev.account()) return canon_account(a->name);
    return std::nullopt;
  }
  if (field == "object.domain") {
    if (const auto* a = ev.account()) return a->domain ? "true" : "false";
    return std::nullopt;
  }
  return std::nullopt;
}

std::string canon_value_for_field(std::string_view field, std::string_view value) {
  if (field == "object.reg_key") return canon_reg_key(value);
  if (field == "object.path" || field == "object.module" || field == "object.reg_value" ||
      field.substr(field.find_last_of('.') + 1) == "image")
    return canon_path(value);
  if (field.substr(field.find_last_of('.') + 1) == "cmdline") return canon_cmdline(value);
  if (field == "object.account" || field == "object.reg_value_name") return to_lower(value);
  return std::string(value);
}

bool glob_match(std::string_view pattern, std::string_view text) {
  std::size_t p = 0, t = 0, star = std::string_view::npos, mark = 0;
  while (t < text.size()) {
    if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == text[t])) {
      ++p;
      ++t;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = t;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      t = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

bool eval_predicate(const Predicate& p, const AuditEvent& ev) {
  auto value = resolve_field(ev, p.field);
  if (!value) return false;
  const std::string& v = *value;

  bool hit = false;
  switch (p.op) {
    case PredOp::Equals:
      hit = !p.values.empty() && v == p.values[0];
      break;
    case PredOp::Prefix:
      hit = !p.values.empty() && v.size() >= p.values[0].size() &&
            v.compare(0, p.values[0].size(), p.values[0]) == 0;
      break;
    case PredOp::Suffix:
      hit = !p.values.empty() && v.size() >= p.values[0].size() &&
            v.compare(v.size() - p.values[0].size(), p.values[0].size(), p.values[0]) == 0;
      break;
    case PredOp::Contains:
      hit = !p.values.empty() && v.find(p.values[0]) != std::string::npos;
      break;
    case PredOp::InSet:
      hit = std::find(p.values.begin(), p.values.end(), v) != p.values.end();
      break;
    case PredOp::Glob:
      hit = !p.values.empty() && glob_match(p.values[0], v);
      break;
  }
  return p.negate ? !hit : hit;
}

bool eval_all(const std::vector<Predicate>& preds, const AuditEvent& ev) {
  for (const auto& p : preds)
    if (!eval_predicate(p, ev)) return false;
  return true;
}

namespace {

std::string_view last_path_component(std::string_view v) {
  std::size_t pos = v.find_last_of("\\/");
  return pos == std::string_view::npos ? v : v.substr(pos + 1);
}

std::optional<std::string> segment_after(std::string_view v, std::string_view seg) {
  std::size_t start = 0;
  std::string_view prev;
  while (start <= v.size()) {
    std::size_t pos = v.find_first_of("\\/", start);
    std::string_view part =
        pos == std::string_view::npos ? v.substr(start) : v.substr(start, pos - start);
    if (prev == seg && !part.empty()) return std::string(part);
    prev = part;
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::string> apply_capture(const CaptureSpec& spec, const AuditEvent& ev) {
  auto value = resolve_field(ev, spec.field);
  if (!value) return std::nullopt;
  switch (spec.transform) {
    case Transform::None:
      return value;
    case Transform::Basename:
      return std::string(last_path_component(*value));
    case Transform::SegmentAfter:
      return segment_after(*value, spec.arg);
    case Transform::TokenAfter: {
      auto toks = tokenize(*value);
      for (std::size_t i = 0; i + 1 < toks.size(); ++i)
        if (toks[i] == spec.arg) return std::string(toks[i + 1]);
      return std::nullopt;
    }
    case Transform::TokenValue: {
      for (auto tok : tokenize(*value))
        if (tok.size() > spec.arg.size() && tok.substr(0, spec.arg.size()) == spec.arg)
          return std::string(tok.substr(spec.arg.size()));
      return std::nullopt;
    }
  }
  return std::nullopt;
}

CaptureSpec parse_capture_spec(const std::string& field, const std::string& transform_text,
                               int group) {
  CaptureSpec spec;
  spec.field = field;
  spec.group = group;
  if (transform_text.empty() || transform_text == "none") {
    spec.transform = Transform::None;
  } else if (transform_text == "basename") {
    spec.transform = Transform::Basename;
  } else if (transform_text.rfind("segment_after:", 0) == 0) {
    spec.transform = Transform::SegmentAfter;
    spec.arg = transform_text.substr(14);
  } else if (transform_text.rfind("token_after:", 0) == 0) {
    spec.transform = Transform::TokenAfter;
    spec.arg = transform_text.substr(12);
  } else if (transform_text.rfind("token_value:", 0) == 0) {
    spec.transform = Transform::TokenValue;
    spec.arg = transform_text.substr(12);
  } else {
    throw RuleError("unknown capture transform: " + transform_text);
  }
  if (spec.arg.empty() && spec.transform != Transform::None &&
      spec.transform != Transform::Basename)
    throw RuleError("capture transform needs an argument: " + transform_text);
  if (!known_field(field)) throw RuleError("unknown capture field: " + field);
  return spec;
}

}  // namespace persist_trace
