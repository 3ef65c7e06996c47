#include "persist_trace/store.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace persist_trace {

namespace {

bool event_order(const AuditEvent& a, const AuditEvent& b) {
  if (a.ts != b.ts) return a.ts < b.ts;
  return a.id < b.id;
}

}  // namespace

Expected<EventStore, std::string> EventStore::load_corpus(const std::vector<std::string>& paths,
                                                          LoadMode mode, LoadStats* stats) {
  EventStore store;
  LoadStats local;
  LoadStats& st = stats ? *stats : local;

  std::unordered_map<std::string, std::uint32_t> seen;
  for (const auto& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::string("cannot open " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto parsed = parse_event(line);
      std::string err;
      if (!parsed.ok()) {
        err = std::string(parse_error_name(parsed.error().code)) + ": " + parsed.error().detail;
      } else if (seen.count(parsed.value().id)) {
        err = "missing_field: duplicate event id " + parsed.value().id;
      }
      if (!err.empty()) {
        if (mode == LoadMode::Strict)
          return path + ":" + std::to_string(lineno) + ": " + err;
        ++st.skipped;
        if (st.errors.size() < 10)
          st.errors.push_back(path + ":" + std::to_string(lineno) + ": " + err);
        continue;
      }
      seen.emplace(parsed.value().id, 0);
      store.events_.push_back(std::move(parsed.value()));
      ++st.loaded;
    }
  }

  std::stable_sort(store.events_.begin(), store.events_.end(), event_order);
  store.index();
  return store;
}

EventStore EventStore::from_events(std::vector<AuditEvent> events) {
  EventStore store;
  store.events_ = std::move(events);
  std::stable_sort(store.events_.begin(), store.events_.end(), event_order);
  store.index();
  return store;
}

void EventStore::index() {
  for (auto& v : by_type_) v.clear();
  by_guid_.clear();
  by_okey_.clear();
  by_id_.clear();
  by_guid_.reserve(events_.size() / 4 + 1);
  by_okey_.reserve(events_.size() / 2 + 1);
  by_id_.reserve(events_.size() + 1);
  for (std::uint32_t i = 0; i < events_.size(); ++i) {
    const auto& ev = events_[i];
    by_type_[static_cast<int>(ev.type)].push_back(i);
    by_guid_[ev.actor.guid].push_back(i);
    if (!ev.okey.empty()) by_okey_[ev.okey].push_back(i);
    if (const auto* child = ev.child()) by_guid_[child->guid].push_back(i);
    by_id_.emplace(ev.id, i);
  }
}

void EventStore::save(const std::string& dir) const {
  fs::create_directories(dir);

  {
    std::ofstream out(fs::path(dir) / "events.ndjson", std::ios::binary);
    if (!out) throw IoError("cannot write events.ndjson in " + dir);
    for (const auto& ev : events_) out << serialize_event(ev) << '\n';
  }

  {
    std::ostringstream meta;
    meta << kStoreHeader << '\n' << "{\"events\":" << events_.size() << "}" << '\n';
    write_file((fs::path(dir) / "store.meta").string(), meta.str());
  }

  auto dump_index = [&](const char* name, const std::unordered_map<std::string, std::vector<std::uint32_t>>& m) {
    std::vector<const std::string*> keys;
    keys.reserve(m.size());
    for (const auto& [k, _] : m) keys.push_back(&k);
    std::sort(keys.begin(), keys.end(), [](auto* a, auto* b) { return *a < *b; });
    std::ofstream out(fs::path(dir) / name, std::ios::binary);
    if (!out) throw IoError(std::string("cannot write ") + name);
    out << kStoreHeader << '\n';
    for (const auto* k : keys) {
      out << *k;
      for (auto i : m.at(*k)) out << '\t' << i;
      out << '\n';
    }
  };
  dump_index("index.actor", by_guid_);
  dump_index("index.object", by_okey_);

  {
    std::ofstream out(fs::path(dir) / "index.type", std::ios::binary);
    out << kStoreHeader << '\n';
    for (int t = 0; t < kEventTypeCount; ++t) {
      out << event_type_name(static_cast<EventType>(t));
      for (auto i : by_type_[t]) out << '\t' << i;
      out << '\n';
    }
  }
}

EventStore EventStore::open(const std::string& dir) {
  auto meta_path = fs::path(dir) / "store.meta";
  if (!fs::exists(meta_path)) throw IoError("not a store directory (no store.meta): " + dir);
  std::ifstream meta(meta_path);
  std::string header;
  std::getline(meta, header);
  if (header != kStoreHeader)
    throw IoError("unsupported store version in " + dir + ": " + header);

  LoadStats st;
  auto loaded =
      load_corpus({(fs::path(dir) / "events.ndjson").string()}, LoadMode::Strict, &st);
  if (!loaded.ok()) throw IoError("corrupt store " + dir + ": " + loaded.error());
  return std::move(loaded.value());
}

const AuditEvent* EventStore::by_id(const std::string& event_id) const {
  auto it = by_id_.find(event_id);
  return it == by_id_.end() ? nullptr : &events_[it->second];
}

const std::vector<std::uint32_t>* EventStore::by_actor(const std::string& guid) const {
  auto it = by_guid_.find(guid);
  return it == by_guid_.end() ? nullptr : &it->second;
}

const std::vector<std::uint32_t>* EventStore::by_object(const std::string& okey) const {
  auto it = by_okey_.find(okey);
  return it == by_okey_.end() ? nullptr : &it->second;
}

std::vector<const AuditEvent*> EventStore::query(const QueryFilter& f) const {
  // Candidate ordinals from the most selective available index; remaining
  // clauses are checked per event. Result order matches store order because
  // every index holds ascending ordinals.
  const std::vector<std::uint32_t>* base = nullptr;
  std::vector<std::uint32_t> all;

  if (f.object_key) base = by_object(*f.object_key);
  if (!base && f.actor_guid) base = by_actor(*f.actor_guid);
  if (!base && f.type) base = &by_type(*f.type);

  if (!base) {
    if ((f.object_key && !by_object(*f.object_key)) || (f.actor_guid && !by_actor(*f.actor_guid)))
      return {};
    all.resize(events_.size());
    for (std::uint32_t i = 0; i < all.size(); ++i) all[i] = i;
    base = &all;
  }

  std::vector<const AuditEvent*> out;
  for (auto i : *base) {
    const auto& ev = events_[i];
    if (f.type && ev.type != *f.type) continue;
    // The guid index also carries child-guid entries; the filter is strict.
    if (f.actor_guid && ev.actor.guid != *f.actor_guid) continue;
    if (f.object_key && ev.okey != *f.object_key) continue;
    if (f.host && ev.host != *f.host) continue;
    if (f.time_window && (ev.ts < f.time_window->first || ev.ts > f.time_window->second)) continue;
    out.push_back(&ev);
  }
  return out;
}

bool EventStore::image_modified_before(const std::string& image_okey, TimeMs before_ts) const {
  const auto* hits = by_object(image_okey);
  if (!hits) return false;
  for (auto i : *hits) {
    const auto& ev = events_[i];
    if (ev.ts >= before_ts) break;
    if (ev.type == EventType::FileWrite) return true;
  }
  return false;
}

bool EventStore::deleted_after(const std::string& okey, TimeMs after_ts) const {
  const auto* hits = by_object(okey);
  if (!hits) return false;
  for (auto it = hits->rbegin(); it != hits->rend(); ++it) {
    const auto& ev = events_[*it];
    if (ev.ts <= after_ts) break;
    if (ev.type == EventType::FileDelete) return true;
  }
  return false;
}

}  // namespace persist_trace
