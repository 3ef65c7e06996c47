#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "persist_trace/predicates.hpp"
#include "persist_trace/store.hpp"

namespace persist_trace {

enum class NodeKind : std::uint8_t { Process, File, RegistryKey, Socket, Account };
enum class EdgeLabel : std::uint8_t {
  Start,
  Write,
  Read,
  Delete,
  Connect,
  Accept,
  Load,
  ExpertGuided,
  Pseudo,
};

std::string_view node_kind_name(NodeKind k);
std::string_view edge_label_name(EdgeLabel l);
std::optional<NodeKind> node_kind_from_name(std::string_view s);
std::optional<EdgeLabel> edge_label_from_name(std::string_view s);

struct Node {
  NodeKind kind = NodeKind::Process;
  std::string key;      // unique: guid | host|path | host|regkey | ip:port | acct
  std::string display;  // raw path / image / endpoint for humans
  std::string host;
  // Process attributes, empty otherwise.
  std::string image;
  std::string cmdline;
  std::string parent_guid;
};

struct Edge {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  EdgeLabel label = EdgeLabel::Start;
  TimeMs ts = 0;
  std::string provenance;  // event id, or rule id for expert/pseudo edges
  bool from_rule = false;
};

// Node keys: processes by guid; files/registry keys scoped by host; sockets
// global by endpoint (this is what stitches cross-host sessions); local
// accounts host-scoped, domain accounts global.
std::string file_node_key(const std::string& host, std::string_view path);
std::string reg_node_key(const std::string& host, std::string_view key);
std::string socket_node_key(std::string_view ip, int port);
std::string account_node_key(const std::string& host, std::string_view name, bool domain);
// Node key of an event's object as used by build_graph; "" when none.
std::string event_object_node_key(const AuditEvent& ev);

struct TraversalOptions {
  int max_depth = -1;  // hops; -1 = unbounded
  std::optional<TimeMs> max_ts;  // backward: only edges at or before this
  std::optional<TimeMs> min_ts;  // forward: only edges at or after this
};

// Expert-guided edge rules: a trigger event and a later broker event that the
// logging framework cannot causally connect are joined when their correlation
// tokens match inside the pairing window.
enum class ExpertSubject : std::uint8_t { Actor, Child };
enum class ExpertSrcRole : std::uint8_t { TriggerProcess, TriggerObject };

struct ExpertEventMatcher {
  std::vector<Predicate> all;
  ExpertSubject subject = ExpertSubject::Actor;
  CaptureSpec token;
};

struct ExpertEdgeRule {
  std::string id;
  std::string technique;
  ExpertEventMatcher trigger;
  ExpertEventMatcher broker;
  TimeMs window_ms = 30000;
  ExpertSrcRole src_role = ExpertSrcRole::TriggerProcess;
};

class ProvenanceGraph {
public:
  static ProvenanceGraph build_graph(const EventStore& store);

  std::uint32_t ensure_node(Node node);
  std::optional<std::uint32_t> find_node(const std::string& key) const;
  // Adds unless an identical (src,dst,label,ts,provenance) edge exists.
  bool add_edge(Edge e);

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Node& node(std::uint32_t ix) const { return nodes_[ix]; }
  const std::vector<std::uint32_t>& out_edges(std::uint32_t node_ix) const;
  const std::vector<std::uint32_t>& in_edges(std::uint32_t node_ix) const;

  struct Trace {
    std::vector<std::uint32_t> nodes;      // discovery order, seed first
    std::vector<std::uint32_t> edge_ixs;   // sorted by (ts, provenance)
    std::vector<std::string> event_ids;    // contributing events, ts order
  };

  Trace traverse_backward(std::uint32_t seed, const TraversalOptions& opts = {}) const;
  Trace traverse_forward(std::uint32_t seed, const TraversalOptions& opts = {}) const;
  // Multi-seed union, equivalent to merging per-seed traversals.
  Trace traverse(const std::vector<std::uint32_t>& seeds, bool backward,
                 const TraversalOptions& opts) const;

  // Copies the induced subgraph; node identity is preserved via keys.
  ProvenanceGraph extract(const std::vector<std::uint32_t>& node_ixs,
                          const std::vector<std::uint32_t>& edge_ixs) const;

  // Union by node key / edge identity.
  void merge_from(const ProvenanceGraph& other);
  static ProvenanceGraph merge_graphs(const ProvenanceGraph& a, const ProvenanceGraph& b);

  // Hop distance over Start and ExpertGuided edges, undirected. nullopt when
  // disconnected; 0 iff same node.
  std::optional<int> hop_distance(std::uint32_t a, std::uint32_t b) const;
  // Distances from seed to every node (same metric); -1 = unreachable.
  std::vector<int> distances_from(std::uint32_t seed) const;

  // Applies expert rules over the store; returns edges added. Idempotent,
  // pairing is nearest-in-time first-match per trigger, one edge per
  // (trigger event, token).
  std::size_t apply_expert_edges(const EventStore& store, const std::vector<ExpertEdgeRule>& rules);

  // Earliest Start in-edge (process creation) of a process node, if any.
  std::optional<std::uint32_t> parent_start_edge(std::uint32_t node_ix) const;

  // Shortest directed path over Start/ExpertGuided edges, as node indices
  // from..to inclusive. BFS with index-ordered expansion, so deterministic.
  std::optional<std::vector<std::uint32_t>> forward_start_path(std::uint32_t from,
                                                               std::uint32_t to) const;

private:
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::unordered_map<std::string, std::uint32_t> node_by_key_;
  std::vector<std::vector<std::uint32_t>> out_, in_;
  std::unordered_set<std::string> edge_ids_;
};

}  // namespace persist_trace
