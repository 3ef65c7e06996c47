#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "persist_trace/graph.hpp"
#include "persist_trace/rules.hpp"
#include "persist_trace/store.hpp"

namespace persist_trace {

// Process with at least one remote (non-loopback, non-link-local) connection.
struct RemoteProcess {
  std::string guid;
  TimeMs first_conn_ts = 0;
  std::string first_event_id;
  std::string endpoint_ip;
  int endpoint_port = 0;
  bool inbound = false;
};

std::vector<RemoteProcess> find_remote_processes(const EventStore& store);

// Minimal per-phase subgraph around one match.
// Setup: Start chain from the root process to the trigger-initiating process,
// the trigger object (via the matched write and any correlated expert edge)
// and captured payload objects. Execution: broker-to-anchor Start chain, the
// matched trigger read and the anchor's first remote connection.
// indirection = Start edges on the chain, floored at 1. The chain root stops
// below the first allowlisted ancestor so OS scaffolding never counts.
struct AtomicGraph {
  ProvenanceGraph sub;
  std::string anchor_event_id;
  RulePhase phase = RulePhase::Setup;
  int indirection = 1;
  std::string root_key;       // setup: chain root; execution: broker process
  std::string initiator_key;  // setup: trigger-initiating process
};

struct MatchLite {
  std::string event_id;
  std::string rule_id;
  std::string technique;
  TimeMs ts = 0;
  std::map<std::string, std::string> captures;
  std::string anchor_guid;
};

struct PseudoEdge {
  std::string id;
  std::string technique;
  MatchLite setup;
  MatchLite execution;
  AtomicGraph setup_graph;
  AtomicGraph execution_graph;
  std::string src_key;  // setup-initiating chain root
  std::string dst_key;  // remote-connection process
};

AtomicGraph extract_atomic_graph(const MatchRecord& match, const EventStore& store,
                                 const ProvenanceGraph& graph, const RuleSet& rules,
                                 RulePhase phase, const std::string& anchor_guid = "",
                                 const std::string& anchor_conn_event_id = "");

// The persistence attack graph: both atomic graphs plus the Pseudo edge from
// the setup-initiating process to the remote-connection process.
ProvenanceGraph build_pag(const PseudoEdge& pe);

struct DetectOptions {
  int workers = 0;  // 0: PERSIST_TRACE_THREADS or 1
};

// Two-phase alignment: per remote process, execution matches over its
// backward trace are paired with setup-table entries of the same technique
// label when execution.ts > setup.ts and all shared captures agree. A pair
// survives only if the setup event is reachable in the anchor's backward
// trace and the trigger-initiating process is not an unmodified allowlisted
// system binary. Deduplicated by (setup event, execution event); the earliest
// remote process keeps a shared execution chain.
std::vector<PseudoEdge> create_pseudo_edges(const EventStore& store, const ProvenanceGraph& graph,
                                            const RuleSet& rules, const DetectOptions& opts = {});

// The trigger-initiating process for a setup match: source of the correlated
// ExpertGuided edge into the trigger object when present, else the actor.
std::optional<std::uint32_t> setup_initiator(const MatchRecord& setup,
                                             const ProvenanceGraph& graph);

}  // namespace persist_trace
