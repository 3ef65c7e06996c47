#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "persist_trace/events.hpp"

namespace persist_trace {

inline constexpr std::string_view kStoreHeader = "persist-trace-store v1";

enum class LoadMode { Strict, Lenient };

struct LoadStats {
  std::size_t loaded = 0;
  std::size_t skipped = 0;
  std::vector<std::string> errors;  // first few, for diagnostics
};

struct QueryFilter {
  std::optional<EventType> type;
  std::optional<std::string> actor_guid;
  std::optional<std::string> object_key;  // canonical form
  std::optional<std::string> host;
  std::optional<std::pair<TimeMs, TimeMs>> time_window;  // [lo, hi] inclusive
};

// Ordered event collection. Iteration order is (ts, event_id), ties broken by
// id, regardless of input stream order.
class EventStore {
public:
  static Expected<EventStore, std::string> load_corpus(const std::vector<std::string>& paths,
                                                       LoadMode mode, LoadStats* stats = nullptr);
  static EventStore from_events(std::vector<AuditEvent> events);

  // Store directory: store.meta (versioned header + counts), events.ndjson
  // (canonical serialization in iteration order), sidecar indexes. The
  // sidecar format is private to the tool.
  void save(const std::string& dir) const;
  static EventStore open(const std::string& dir);

  std::vector<const AuditEvent*> query(const QueryFilter& f) const;

  const std::vector<AuditEvent>& events() const { return events_; }
  std::size_t size() const { return events_.size(); }
  const AuditEvent& at(std::size_t i) const { return events_[i]; }

  const AuditEvent* by_id(const std::string& event_id) const;
  const std::vector<std::uint32_t>& by_type(EventType t) const {
    return by_type_[static_cast<int>(t)];
  }
  const std::vector<std::uint32_t>* by_actor(const std::string& guid) const;
  const std::vector<std::uint32_t>* by_object(const std::string& okey) const;

  // True when `image_okey` (canonical path) was FILE_WRITten strictly before
  // `before_ts`.
  bool image_modified_before(const std::string& image_okey, TimeMs before_ts) const;
  // True when the object was FILE_DELETEd strictly after `after_ts`.
  bool deleted_after(const std::string& okey, TimeMs after_ts) const;

private:
  void index();

  std::vector<AuditEvent> events_;
  std::array<std::vector<std::uint32_t>, kEventTypeCount> by_type_;
  std::unordered_map<std::string, std::vector<std::uint32_t>> by_guid_;
  std::unordered_map<std::string, std::vector<std::uint32_t>> by_okey_;
  std::unordered_map<std::string, std::uint32_t> by_id_;
};

}  // namespace persist_trace
