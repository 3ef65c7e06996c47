#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "persist_trace/common.hpp"

namespace persist_trace {

enum class EventType : std::uint8_t {
  ProcessCreate,
  ProcessTerminate,
  FileWrite,
  FileRead,
  FileDelete,
  RegSet,
  RegRead,
  RegDelete,
  NetConnect,
  NetAccept,
  ModuleLoad,
  AccountCreate,
  Login,
};
inline constexpr int kEventTypeCount = 13;

std::string_view event_type_name(EventType t);
std::optional<EventType> event_type_from_name(std::string_view name);

struct ProcessRef {
  std::string guid;
  std::int64_t pid = 0;
  std::string image;
  std::string cmdline;
  std::string parent_guid;

  bool operator==(const ProcessRef&) const = default;
};

struct FileObject {
  std::string path;
  bool operator==(const FileObject&) const = default;
};

struct RegistryObject {
  std::string key;
  std::string value_name;
  std::string value;
  bool operator==(const RegistryObject&) const = default;
};

// Remote endpoint as recorded by the sensor. direction "out" for connects,
// "in" for accepts; both sides of an in-LAN session record the server
// endpoint, which is what stitches cross-host traces.
struct EndpointObject {
  std::string ip;
  int port = 0;
  std::string direction;
  bool operator==(const EndpointObject&) const = default;
};

struct ModuleObject {
  std::string path;
  bool operator==(const ModuleObject&) const = default;
};

// ACCOUNT_CREATE and LOGIN. For logins, ip/port carry the source endpoint
// when the session is network-borne.
struct AccountObject {
  std::string name;
  bool domain = false;
  std::string ip;
  int port = -1;
  bool operator==(const AccountObject&) const = default;
};

struct NoObject {
  bool operator==(const NoObject&) const = default;
};

using EventObject = std::variant<NoObject, FileObject, RegistryObject, EndpointObject,
                                 ModuleObject, AccountObject, ProcessRef>;

enum class ParseErrorCode {
  MalformedDocument,
  MissingField,
  BadEnum,
  BadTimestamp,
  InconsistentLineage,
};

struct ParseError {
  ParseErrorCode code;
  std::string detail;
};

std::string_view parse_error_name(ParseErrorCode c);

struct AuditEvent {
  std::string id;
  TimeMs ts = 0;
  std::string host;
  EventType type = EventType::ProcessCreate;
  ProcessRef actor;
  EventObject object;

  // Canonical object key (normalized path / registry key / endpoint / account
  // / child guid), host-independent. Computed once at parse time.
  std::string okey;

  bool operator==(const AuditEvent& o) const {
    return id == o.id && ts == o.ts && host == o.host && type == o.type && actor == o.actor &&
           object == o.object;
  }

  const FileObject* file() const { return std::get_if<FileObject>(&object); }
  const RegistryObject* reg() const { return std::get_if<RegistryObject>(&object); }
  const EndpointObject* endpoint() const { return std::get_if<EndpointObject>(&object); }
  const ModuleObject* module_() const { return std::get_if<ModuleObject>(&object); }
  const AccountObject* account() const { return std::get_if<AccountObject>(&object); }
  const ProcessRef* child() const { return std::get_if<ProcessRef>(&object); }
};

// Canonicalization. Windows paths and registry keys are case-insensitive and
// lowercased; POSIX paths are untouched. Hive aliases collapse to the short
// form (hkey_local_machine -> hklm).
bool looks_windows_path(std::string_view p);
std::string canon_path(std::string_view p);
std::string canon_reg_key(std::string_view k);
std::string canon_account(std::string_view name);
std::string canon_cmdline(std::string_view c);
std::string canon_endpoint(std::string_view ip, int port);

// Canonical object key for indexing; "" for events without an object.
std::string object_key(EventType type, const EventObject& obj);

Expected<AuditEvent, ParseError> parse_event(std::string_view ndjson_line);
std::string serialize_event(const AuditEvent& ev);

}  // namespace persist_trace
