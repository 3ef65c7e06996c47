#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "persist_trace/events.hpp"

namespace persist_trace {

struct ScenarioInfo {
  std::string name;
  std::string description;
};

// What the generator planted, for evaluating detector output.
struct TruthRecord {
  std::string kind;  // "attack" | "mimic"
  std::string technique;
  std::string setup_event_id;
  std::string trigger_event_id;
  std::string anchor_guid;
  std::string category;  // expected alert category
};

struct GeneratedScenario {
  std::string name;
  std::vector<AuditEvent> events;
  std::vector<TruthRecord> truth;
  // Broker-IPC chatter kept apart from the base stream so paired corpora
  // (with and without it) can be emitted for log-reduction measurements.
  std::vector<AuditEvent> ipc_events;
};

std::vector<ScenarioInfo> builtin_scenarios();

GeneratedScenario generate_scenario(const std::string& name, std::uint64_t seed);

// events.ndjson + truth.ndjson under dir (created if missing). Scenarios
// carrying ipc_events also get events-noipc.ndjson: the same stream minus
// the broker chatter.
void write_scenario(const GeneratedScenario& s, const std::string& dir);

}  // namespace persist_trace
