#include "persist_trace/events.hpp"

#include <array>
#include <cctype>

#include "json.hpp"

namespace persist_trace {

namespace {

constexpr std::array<std::string_view, kEventTypeCount> kTypeNames = {
    "PROCESS_CREATE", "PROCESS_TERMINATE", "FILE_WRITE", "FILE_READ", "FILE_DELETE",
    "REG_SET",        "REG_READ",          "REG_DELETE", "NET_CONNECT", "NET_ACCEPT",
    "MODULE_LOAD",    "ACCOUNT_CREATE",    "LOGIN",
};

using nlohmann::json;

}  // namespace

std::string_view event_type_name(EventType t) { return kTypeNames[static_cast<int>(t)]; }

std::optional<EventType> event_type_from_name(std::string_view name) {
  for (int i = 0; i < kEventTypeCount; ++i)
    if (kTypeNames[i] == name) return static_cast<EventType>(i);
  return std::nullopt;
}

std::string_view parse_error_name(ParseErrorCode c) {
  switch (c) {
    case ParseErrorCode::MalformedDocument: return "malformed_document";
    case ParseErrorCode::MissingField: return "missing_field";
    case ParseErrorCode::BadEnum: return "bad_enum";
    case ParseErrorCode::BadTimestamp: return "bad_timestamp";
    case ParseErrorCode::InconsistentLineage: return "inconsistent_lineage";
  }
  return "unknown";
}

bool looks_windows_path(std::string_view p) {
  if (p.size() >= 2 && std::isalpha(static_cast<unsigned char>(p[0])) && p[1] == ':') return true;
  return p.find('\\') != std::string_view::npos;
}

std::string canon_path(std::string_view p) {
  if (!looks_windows_path(p)) return std::string(p);
  return to_lower(p);
}

std::string canon_reg_key(std::string_view k) {
  std::string low = to_lower(k);
  static constexpr std::pair<std::string_view, std::string_view> kAliases[] = {
      {"hkey_local_machine", "hklm"},
      {"hkey_current_user", "hkcu"},
      {"hkey_classes_root", "hkcr"},
      {"hkey_users", "hku"},
  };
  for (auto [longform, shortform] : kAliases) {
    if (low.size() >= longform.size() && std::string_view(low).substr(0, longform.size()) == longform &&
        (low.size() == longform.size() || low[longform.size()] == '\\')) {
      return std::string(shortform) + low.substr(longform.size());
    }
  }
  return low;
}

std::string canon_account(std::string_view name) { return to_lower(name); }

std::string canon_cmdline(std::string_view c) { return to_lower(c); }

std::string canon_endpoint(std::string_view ip, int port) {
  return std::string(ip) + ":" + std::to_string(port);
}

std::string object_key(EventType, const EventObject& obj) {
  if (const auto* f = std::get_if<FileObject>(&obj)) return canon_path(f->path);
  if (const auto* r = std::get_if<RegistryObject>(&obj)) return canon_reg_key(r->key);
  if (const auto* e = std::get_if<EndpointObject>(&obj)) return canon_endpoint(e->ip, e->port);
  if (const auto* m = std::get_if<ModuleObject>(&obj)) return canon_path(m->path);
  if (const auto* a = std::get_if<AccountObject>(&obj)) return "acct:" + canon_account(a->name);
  if (const auto* c = std::get_if<ProcessRef>(&obj)) return c->guid;
  return "";
}

namespace {

std::optional<std::string> get_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) return std::nullopt;
  return it->get<std::string>();
}

Expected<ProcessRef, ParseError> parse_process(const json& j, bool require_parent) {
  ProcessRef p;
  auto guid = get_string(j, "guid");
  if (!guid || guid->empty())
    return ParseError{ParseErrorCode::MissingField, "process guid"};
  p.guid = *guid;
  if (auto it = j.find("pid"); it != j.end() && it->is_number_integer()) p.pid = it->get<std::int64_t>();
  auto image = get_string(j, "image");
  if (!image || image->empty())
    return ParseError{ParseErrorCode::MissingField, "process image"};
  p.image = *image;
  if (auto c = get_string(j, "cmdline")) p.cmdline = *c;
  if (auto par = get_string(j, "parent")) p.parent_guid = *par;
  if (require_parent && p.parent_guid.empty())
    return ParseError{ParseErrorCode::MissingField, "child parent guid"};
  return p;
}

}  // namespace

Expected<AuditEvent, ParseError> parse_event(std::string_view line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    return ParseError{ParseErrorCode::MalformedDocument, "not a json object"};

  AuditEvent ev;
  auto id = get_string(j, "id");
  if (!id || id->empty()) return ParseError{ParseErrorCode::MissingField, "id"};
  ev.id = *id;

  auto ts_it = j.find("ts");
  if (ts_it == j.end()) return ParseError{ParseErrorCode::MissingField, "ts"};
  if (!ts_it->is_number_integer() || ts_it->get<std::int64_t>() < 0)
    return ParseError{ParseErrorCode::BadTimestamp, "ts must be a non-negative integer"};
  ev.ts = ts_it->get<std::int64_t>();

  auto host = get_string(j, "host");
  if (!host || host->empty()) return ParseError{ParseErrorCode::MissingField, "host"};
  ev.host = *host;

  auto type_name = get_string(j, "type");
  if (!type_name) return ParseError{ParseErrorCode::MissingField, "type"};
  auto type = event_type_from_name(*type_name);
  if (!type) return ParseError{ParseErrorCode::BadEnum, "type: " + *type_name};
  ev.type = *type;

  auto actor_it = j.find("actor");
  if (actor_it == j.end() || !actor_it->is_object())
    return ParseError{ParseErrorCode::MissingField, "actor"};
  auto actor = parse_process(*actor_it, false);
  if (!actor.ok()) return actor.error();
  ev.actor = std::move(actor.value());

  const json* obj = nullptr;
  if (auto it = j.find("object"); it != j.end() && it->is_object()) obj = &*it;

  auto need = [&](const char* what) {
    return ParseError{ParseErrorCode::MissingField, std::string("object.") + what + " for " +
                                                        std::string(event_type_name(ev.type))};
  };

  switch (ev.type) {
    case EventType::ProcessCreate: {
      if (!obj || !obj->contains("child") || !(*obj)["child"].is_object()) return need("child");
      auto child = parse_process((*obj)["child"], true);
      if (!child.ok()) return child.error();
      if (child.value().parent_guid != ev.actor.guid)
        return ParseError{ParseErrorCode::InconsistentLineage,
                          "child.parent != actor.guid for event " + ev.id};
      ev.object = std::move(child.value());
      break;
    }
    case EventType::ProcessTerminate:
      ev.object = NoObject{};
      break;
    case EventType::FileWrite:
    case EventType::FileRead:
    case EventType::FileDelete: {
      if (!obj) return need("path");
      auto path = get_string(*obj, "path");
      if (!path || path->empty()) return need("path");
      ev.object = FileObject{*path};
      break;
    }
    case EventType::RegSet:
    case EventType::RegRead:
    case EventType::RegDelete: {
      if (!obj) return need("reg_key");
      auto key = get_string(*obj, "reg_key");
      if (!key || key->empty()) return need("reg_key");
      RegistryObject r;
      r.key = *key;
      if (auto v = get_string(*obj, "value_name")) r.value_name = *v;
      if (auto v = get_string(*obj, "value")) r.value = *v;
      ev.object = std::move(r);
      break;
    }
    case EventType::NetConnect:
    case EventType::NetAccept: {
      if (!obj) return need("ip");
      auto ip = get_string(*obj, "ip");
      if (!ip || ip->empty()) return need("ip");
      EndpointObject e;
      e.ip = *ip;
      auto port = obj->find("port");
      if (port == obj->end() || !port->is_number_integer()) return need("port");
      e.port = port->get<int>();
      e.direction = ev.type == EventType::NetConnect ? "out" : "in";
      if (auto d = get_string(*obj, "direction")) e.direction = *d;
      ev.object = std::move(e);
      break;
    }
    case EventType::ModuleLoad: {
      if (!obj) return need("module");
      auto path = get_string(*obj, "module");
      if (!path || path->empty()) return need("module");
      ev.object = ModuleObject{*path};
      break;
    }
    case EventType::AccountCreate:
    case EventType::Login: {
      if (!obj) return need("account");
      auto name = get_string(*obj, "account");
      if (!name || name->empty()) return need("account");
      AccountObject a;
      a.name = *name;
      if (auto d = obj->find("domain"); d != obj->end() && d->is_boolean()) a.domain = d->get<bool>();
      if (auto ip = get_string(*obj, "ip")) a.ip = *ip;
      if (auto p = obj->find("port"); p != obj->end() && p->is_number_integer()) a.port = p->get<int>();
      ev.object = std::move(a);
      break;
    }
  }

  ev.okey = object_key(ev.type, ev.object);
  return ev;
}

namespace {

json process_to_json(const ProcessRef& p) {
  json j;
  j["guid"] = p.guid;
  j["pid"] = p.pid;
  j["image"] = p.image;
  if (!p.cmdline.empty()) j["cmdline"] = p.cmdline;
  if (!p.parent_guid.empty()) j["parent"] = p.parent_guid;
  return j;
}

}  // namespace

std::string serialize_event(const AuditEvent& ev) {
  json j;
  j["id"] = ev.id;
  j["ts"] = ev.ts;
  j["host"] = ev.host;
  j["type"] = event_type_name(ev.type);
  j["actor"] = process_to_json(ev.actor);

  if (const auto* f = ev.file()) {
    j["object"] = {{"path", f->path}};
  } else if (const auto* r = ev.reg()) {
    json o;
    o["reg_key"] = r->key;
    if (!r->value_name.empty()) o["value_name"] = r->value_name;
    if (!r->value.empty()) o["value"] = r->value;
    j["object"] = std::move(o);
  } else if (const auto* e = ev.endpoint()) {
    j["object"] = {{"ip", e->ip}, {"port", e->port}, {"direction", e->direction}};
  } else if (const auto* m = ev.module_()) {
    j["object"] = {{"module", m->path}};
  } else if (const auto* a = ev.account()) {
    json o;
    o["account"] = a->name;
    o["domain"] = a->domain;
    if (!a->ip.empty()) o["ip"] = a->ip;
    if (a->port >= 0) o["port"] = a->port;
    j["object"] = std::move(o);
  } else if (const auto* c = ev.child()) {
    j["object"] = {{"child", process_to_json(*c)}};
  }

  return j.dump();
}

}  // namespace persist_trace
