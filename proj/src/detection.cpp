#include "persist_trace/detection.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "persist_trace/common.hpp"

namespace persist_trace {

namespace {

bool is_remote_endpoint(const AuditEvent& ev) {
  const EndpointObject* ep = ev.endpoint();
  if (!ep) return false;
  return !is_loopback_or_linklocal(ep->ip);
}

// Initiator plus the expert edge that nominated it, when one applies.
struct Initiator {
  std::optional<std::uint32_t> node_ix;
  std::optional<std::uint32_t> edge_ix;
};

Initiator find_initiator(const MatchRecord& match, const ProvenanceGraph& graph) {
  Initiator out;
  const AuditEvent* ev = match.event;
  if (!ev) return out;
  std::string okey = event_object_node_key(*ev);
  if (!okey.empty()) {
    if (auto obj_ix = graph.find_node(okey)) {
      // Latest correlated expert edge not after the setup event wins; the
      // pairing step already enforced token equality via the shared object.
      std::optional<std::uint32_t> best;
      for (std::uint32_t eix : graph.in_edges(*obj_ix)) {
        const Edge& e = graph.edges()[eix];
        if (e.label != EdgeLabel::ExpertGuided || e.ts > ev->ts) continue;
        if (graph.node(e.src).kind != NodeKind::Process) continue;
        if (!best) {
          best = eix;
          continue;
        }
        const Edge& b = graph.edges()[*best];
        if (e.ts > b.ts || (e.ts == b.ts && e.provenance < b.provenance)) best = eix;
      }
      if (best) {
        out.node_ix = graph.edges()[*best].src;
        out.edge_ix = best;
        return out;
      }
    }
  }
  out.node_ix = graph.find_node(ev->actor.guid);
  return out;
}

// Walks creation edges upward, stopping below the first allowlisted ancestor.
// Returns the edges climbed; `cur` ends at the chain root.
std::vector<std::uint32_t> climb_chain(const ProvenanceGraph& graph, const RuleSet& rules,
                                       std::uint32_t& cur) {
  std::vector<std::uint32_t> chain;
  std::unordered_set<std::uint32_t> visited{cur};
  while (auto eix = graph.parent_start_edge(cur)) {
    std::uint32_t parent = graph.edges()[*eix].src;
    if (visited.count(parent)) break;
    if (rules.is_allowlisted(graph.node(parent).image)) break;
    chain.push_back(*eix);
    visited.insert(parent);
    cur = parent;
  }
  return chain;
}

std::optional<std::uint32_t> edge_for_event(const ProvenanceGraph& graph, std::uint32_t node_ix,
                                            const std::string& event_id) {
  for (std::uint32_t eix : graph.in_edges(node_ix))
    if (graph.edges()[eix].provenance == event_id) return eix;
  for (std::uint32_t eix : graph.out_edges(node_ix))
    if (graph.edges()[eix].provenance == event_id) return eix;
  return std::nullopt;
}

// Connecting edge between consecutive path nodes: earliest Start or
// ExpertGuided edge, ties by provenance.
std::optional<std::uint32_t> path_segment_edge(const ProvenanceGraph& graph, std::uint32_t a,
                                               std::uint32_t b) {
  std::optional<std::uint32_t> best;
  for (std::uint32_t eix : graph.out_edges(a)) {
    const Edge& e = graph.edges()[eix];
    if (e.dst != b) continue;
    if (e.label != EdgeLabel::Start && e.label != EdgeLabel::ExpertGuided) continue;
    if (!best) {
      best = eix;
      continue;
    }
    const Edge& cur = graph.edges()[*best];
    if (e.ts < cur.ts || (e.ts == cur.ts && e.provenance < cur.provenance)) best = eix;
  }
  return best;
}

AtomicGraph finish(const ProvenanceGraph& graph, std::set<std::uint32_t>& nset,
                   const std::set<std::uint32_t>& eset, AtomicGraph ag) {
  for (std::uint32_t eix : eset) {
    nset.insert(graph.edges()[eix].src);
    nset.insert(graph.edges()[eix].dst);
  }
  std::vector<std::uint32_t> nodes(nset.begin(), nset.end());
  std::vector<std::uint32_t> edges(eset.begin(), eset.end());
  ag.sub = graph.extract(nodes, edges);
  return ag;
}

}  // namespace

std::vector<RemoteProcess> find_remote_processes(const EventStore& store) {
  std::vector<RemoteProcess> out;
  std::unordered_set<std::string> seen;
  for (const AuditEvent& ev : store.events()) {
    if (ev.type != EventType::NetConnect && ev.type != EventType::NetAccept) continue;
    if (!is_remote_endpoint(ev)) continue;
    if (!seen.insert(ev.actor.guid).second) continue;
    const EndpointObject* ep = ev.endpoint();
    RemoteProcess rp;
    rp.guid = ev.actor.guid;
    rp.first_conn_ts = ev.ts;
    rp.first_event_id = ev.id;
    rp.endpoint_ip = ep->ip;
    rp.endpoint_port = ep->port;
    rp.inbound = ev.type == EventType::NetAccept;
    out.push_back(std::move(rp));
  }
  return out;  // store order is (ts, id), so first-connection order
}

std::optional<std::uint32_t> setup_initiator(const MatchRecord& setup,
                                             const ProvenanceGraph& graph) {
  return find_initiator(setup, graph).node_ix;
}

AtomicGraph extract_atomic_graph(const MatchRecord& match, const EventStore& store,
                                 const ProvenanceGraph& graph, const RuleSet& rules,
                                 RulePhase phase, const std::string& anchor_guid,
                                 const std::string& anchor_conn_event_id) {
  AtomicGraph ag;
  ag.phase = phase;
  ag.anchor_event_id = match.event_id;
  const AuditEvent* ev = match.event ? match.event : store.by_id(match.event_id);
  if (!ev) return ag;

  std::set<std::uint32_t> nset;
  std::set<std::uint32_t> eset;

  if (phase == RulePhase::Setup) {
    Initiator init = find_initiator(match, graph);
    if (!init.node_ix) return ag;
    std::uint32_t cur = *init.node_ix;
    ag.initiator_key = graph.node(cur).key;
    nset.insert(cur);
    auto chain = climb_chain(graph, rules, cur);
    for (std::uint32_t eix : chain) eset.insert(eix);
    ag.root_key = graph.node(cur).key;
    ag.indirection = std::max<int>(1, static_cast<int>(chain.size()));
    if (init.edge_ix) eset.insert(*init.edge_ix);

    if (auto actor_ix = graph.find_node(ev->actor.guid)) {
      nset.insert(*actor_ix);
      if (auto eix = edge_for_event(graph, *actor_ix, ev->id)) eset.insert(*eix);
    }
    std::string okey = event_object_node_key(*ev);
    if (!okey.empty()) {
      if (auto obj_ix = graph.find_node(okey)) nset.insert(*obj_ix);
    }
    // Captured payloads dropped by the chain itself stay in the picture.
    std::unordered_set<std::uint32_t> chain_nodes(nset.begin(), nset.end());
    for (const auto& [name, value] : match.captures) {
      auto pix = graph.find_node(file_node_key(ev->host, value));
      if (!pix) continue;
      std::optional<std::uint32_t> best;
      for (std::uint32_t eix : graph.in_edges(*pix)) {
        const Edge& e = graph.edges()[eix];
        if (e.label != EdgeLabel::Write || !chain_nodes.count(e.src)) continue;
        if (!best || e.ts < graph.edges()[*best].ts) best = eix;
      }
      if (best) {
        nset.insert(*pix);
        eset.insert(*best);
      }
    }
    return finish(graph, nset, eset, std::move(ag));
  }

  // Execution: broker-to-anchor chain plus the trigger read and the anchor's
  // first remote connection.
  auto anchor_ix = graph.find_node(anchor_guid);
  if (!anchor_ix) return ag;
  std::optional<std::uint32_t> subject_ix = graph.find_node(ev->actor.guid);
  std::optional<std::vector<std::uint32_t>> path;
  if (subject_ix) path = graph.forward_start_path(*subject_ix, *anchor_ix);
  if (!path && ev->child()) {
    subject_ix = graph.find_node(ev->child()->guid);
    if (subject_ix) path = graph.forward_start_path(*subject_ix, *anchor_ix);
  }
  if (!path) return ag;

  ag.root_key = graph.node(path->front()).key;
  int starts = 0;
  for (std::size_t i = 0; i + 1 < path->size(); ++i) {
    nset.insert((*path)[i]);
    if (auto eix = path_segment_edge(graph, (*path)[i], (*path)[i + 1])) {
      eset.insert(*eix);
      if (graph.edges()[*eix].label == EdgeLabel::Start) ++starts;
    }
  }
  nset.insert(path->back());
  ag.indirection = std::max(1, starts);

  if (auto eix = edge_for_event(graph, path->front(), ev->id)) eset.insert(*eix);
  std::string okey = event_object_node_key(*ev);
  if (!okey.empty()) {
    if (auto obj_ix = graph.find_node(okey)) nset.insert(*obj_ix);
  }
  if (!anchor_conn_event_id.empty()) {
    if (auto eix = edge_for_event(graph, *anchor_ix, anchor_conn_event_id)) eset.insert(*eix);
  }
  return finish(graph, nset, eset, std::move(ag));
}

ProvenanceGraph build_pag(const PseudoEdge& pe) {
  ProvenanceGraph pag = ProvenanceGraph::merge_graphs(pe.setup_graph.sub, pe.execution_graph.sub);
  auto src = pag.find_node(pe.src_key);
  auto dst = pag.find_node(pe.dst_key);
  if (src && dst) {
    Edge e;
    e.src = *src;
    e.dst = *dst;
    e.label = EdgeLabel::Pseudo;
    e.ts = pe.execution.ts;
    e.provenance = pe.id;
    e.from_rule = true;
    pag.add_edge(e);
  }
  return pag;
}

std::vector<PseudoEdge> create_pseudo_edges(const EventStore& store, const ProvenanceGraph& graph,
                                            const RuleSet& rules, const DetectOptions& opts) {
  std::vector<MatchRecord> setups = match_setup(store, rules);
  std::vector<RemoteProcess> remotes = find_remote_processes(store);

  // Gate: a setup initiated by an untouched allowlisted binary is system
  // housekeeping, not an implant. Evaluated once per setup entry.
  std::vector<bool> suppressed(setups.size(), false);
  std::unordered_map<std::string, std::vector<std::size_t>> setups_by_label;
  for (std::size_t i = 0; i < setups.size(); ++i) {
    const MatchRecord& s = setups[i];
    Initiator init = find_initiator(s, graph);
    if (init.node_ix) {
      const Node& n = graph.node(*init.node_ix);
      if (rules.is_allowlisted(n.image) && !store.image_modified_before(n.image, s.ts))
        suppressed[i] = true;
    }
    setups_by_label[s.label].push_back(i);
  }

  struct Pair {
    std::size_t setup_ix;
    MatchRecord exec;
  };
  std::vector<std::vector<Pair>> per_remote(remotes.size());

  parallel_for(remotes.size(), resolve_workers(opts.workers), [&](std::size_t ri) {
    const RemoteProcess& rp = remotes[ri];
    auto anchor_ix = graph.find_node(rp.guid);
    if (!anchor_ix) return;
    TraversalOptions topt;
    topt.max_ts = rp.first_conn_ts;
    ProvenanceGraph::Trace trace = graph.traverse_backward(*anchor_ix, topt);

    std::unordered_set<std::string> trace_ids(trace.event_ids.begin(), trace.event_ids.end());
    std::vector<const AuditEvent*> evs;
    evs.reserve(trace.event_ids.size() + 1);
    for (const std::string& id : trace.event_ids)
      if (const AuditEvent* e = store.by_id(id)) evs.push_back(e);
    // The anchor's own connection opens its execution window even though it
    // is an outgoing edge the backward pass never crosses.
    if (!trace_ids.count(rp.first_event_id))
      if (const AuditEvent* ce = store.by_id(rp.first_event_id)) evs.push_back(ce);

    std::vector<MatchRecord> execs = match_execution(evs, rp.guid, graph, rules);
    for (const MatchRecord& ex : execs) {
      auto it = setups_by_label.find(ex.label);
      if (it == setups_by_label.end()) continue;
      for (std::size_t si : it->second) {
        const MatchRecord& s = setups[si];
        if (ex.ts <= s.ts) continue;
        // Alignment: the two phases must agree on every capture they share,
        // and share at least one.
        std::size_t shared = 0;
        bool agree = true;
        for (const auto& [k, v] : s.captures) {
          auto cap = ex.captures.find(k);
          if (cap == ex.captures.end()) continue;
          ++shared;
          if (cap->second != v) {
            agree = false;
            break;
          }
        }
        if (!agree || shared == 0) continue;
        // Gate: execution must actually trace back to this setup event.
        if (!trace_ids.count(s.event_id)) continue;
        if (suppressed[si]) continue;
        per_remote[ri].push_back(Pair{si, ex});
      }
    }
  });

  // Earliest remote process claims a shared (setup, execution) pair.
  std::set<std::pair<std::string, std::string>> taken;
  std::vector<PseudoEdge> out;
  for (std::size_t ri = 0; ri < remotes.size(); ++ri) {
    for (const Pair& p : per_remote[ri]) {
      const MatchRecord& s = setups[p.setup_ix];
      if (!taken.emplace(s.event_id, p.exec.event_id).second) continue;
      PseudoEdge pe;
      pe.id = "pe-" + s.event_id + "-" + p.exec.event_id;
      pe.technique = s.label;
      pe.setup = MatchLite{s.event_id, s.rule_id, s.label, s.ts, s.captures, ""};
      pe.execution = MatchLite{p.exec.event_id, p.exec.rule_id,  p.exec.label,
                               p.exec.ts,       p.exec.captures, p.exec.anchor_guid};
      pe.setup_graph = extract_atomic_graph(s, store, graph, rules, RulePhase::Setup);
      pe.execution_graph = extract_atomic_graph(p.exec, store, graph, rules, RulePhase::Execution,
                                                remotes[ri].guid, remotes[ri].first_event_id);
      pe.src_key = pe.setup_graph.root_key;
      pe.dst_key = remotes[ri].guid;
      out.push_back(std::move(pe));
    }
  }
  std::sort(out.begin(), out.end(), [](const PseudoEdge& a, const PseudoEdge& b) {
    if (a.setup.ts != b.setup.ts) return a.setup.ts < b.setup.ts;
    if (a.execution.ts != b.execution.ts) return a.execution.ts < b.execution.ts;
    if (a.setup.event_id != b.setup.event_id) return a.setup.event_id < b.setup.event_id;
    return a.execution.event_id < b.execution.event_id;
  });
  return out;
}

}  // namespace persist_trace
