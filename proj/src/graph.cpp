#include "persist_trace/graph.hpp"

#include <algorithm>
#include <deque>

namespace persist_trace {

namespace {

constexpr std::string_view kNodeKindNames[] = {"process", "file", "registry", "socket", "account"};
constexpr std::string_view kEdgeLabelNames[] = {"Start",  "Write",  "Read", "Delete", "Connect",
                                                "Accept", "Load",   "ExpertGuided", "Pseudo"};

std::string_view basename_of(std::string_view p) {
  std::size_t pos = p.find_last_of("\\/");
  return pos == std::string_view::npos ? p : p.substr(pos + 1);
}

}  // namespace

std::string_view node_kind_name(NodeKind k) { return kNodeKindNames[static_cast<int>(k)]; }
std::string_view edge_label_name(EdgeLabel l) { return kEdgeLabelNames[static_cast<int>(l)]; }

std::optional<NodeKind> node_kind_from_name(std::string_view s) {
  for (int i = 0; i < 5; ++i)
    if (kNodeKindNames[i] == s) return static_cast<NodeKind>(i);
  return std::nullopt;
}

std::optional<EdgeLabel> edge_label_from_name(std::string_view s) {
  for (int i = 0; i < 9; ++i)
    if (kEdgeLabelNames[i] == s) return static_cast<EdgeLabel>(i);
  return std::nullopt;
}

std::string file_node_key(const std::string& host, std::string_view path) {
  return host + "|" + canon_path(path);
}
std::string reg_node_key(const std::string& host, std::string_view key) {
  return host + "|" + canon_reg_key(key);
}
std::string socket_node_key(std::string_view ip, int port) {
  return canon_endpoint(ip, port);
}
std::string account_node_key(const std::string& host, std::string_view name, bool domain) {
  std::string acct = "acct:" + canon_account(name);
  return domain ? acct : host + "|" + acct;
}

std::string event_object_node_key(const AuditEvent& ev) {
  if (const auto* f = ev.file()) return file_node_key(ev.host, f->path);
  if (const auto* r = ev.reg()) return reg_node_key(ev.host, r->key);
  if (const auto* e = ev.endpoint()) return socket_node_key(e->ip, e->port);
  if (const auto* m = ev.module_()) return file_node_key(ev.host, m->path);
  if (const auto* a = ev.account()) return account_node_key(ev.host, a->name, a->domain);
  if (const auto* c = ev.child()) return c->guid;
  return "";
}

std::uint32_t ProvenanceGraph::ensure_node(Node node) {
  auto it = node_by_key_.find(node.key);
  if (it != node_by_key_.end()) {
    // Fill attributes that arrive late (e.g. a guid first seen as a parent).
    Node& existing = nodes_[it->second];
    if (existing.image.empty() && !node.image.empty()) existing.image = node.image;
    if (existing.cmdline.empty() && !node.cmdline.empty()) existing.cmdline = node.cmdline;
    if (existing.parent_guid.empty() && !node.parent_guid.empty())
      existing.parent_guid = node.parent_guid;
    if (existing.display.empty() && !node.display.empty()) existing.display = node.display;
    if (existing.host.empty() && !node.host.empty()) existing.host = node.host;
    return it->second;
  }
  std::uint32_t ix = static_cast<std::uint32_t>(nodes_.size());
  node_by_key_.emplace(node.key, ix);
  nodes_.push_back(std::move(node));
  out_.emplace_back();
  in_.emplace_back();
  return ix;
}

std::optional<std::uint32_t> ProvenanceGraph::find_node(const std::string& key) const {
  auto it = node_by_key_.find(key);
  if (it == node_by_key_.end()) return std::nullopt;
  return it->second;
}

bool ProvenanceGraph::add_edge(Edge e) {
  std::string ident = std::to_string(e.src) + ">" + std::to_string(e.dst) + ">" +
                      std::to_string(static_cast<int>(e.label)) + ">" + std::to_string(e.ts) +
                      ">" + e.provenance;
  if (!edge_ids_.insert(ident).second) return false;
  std::uint32_t ix = static_cast<std::uint32_t>(edges_.size());
  out_[e.src].push_back(ix);
  in_[e.dst].push_back(ix);
  edges_.push_back(std::move(e));
  return true;
}

const std::vector<std::uint32_t>& ProvenanceGraph::out_edges(std::uint32_t n) const {
  return out_[n];
}
const std::vector<std::uint32_t>& ProvenanceGraph::in_edges(std::uint32_t n) const {
  return in_[n];
}

namespace {

Node process_node(const ProcessRef& p, const std::string& host) {
  Node n;
  n.kind = NodeKind::Process;
  n.key = p.guid;
  n.display = std::string(basename_of(p.image));
  n.host = host;
  n.image = canon_path(p.image);
  n.cmdline = p.cmdline;
  n.parent_guid = p.parent_guid;
  return n;
}

Node object_node(NodeKind kind, std::string key, std::string display, const std::string& host) {
  Node n;
  n.kind = kind;
  n.key = std::move(key);
  n.display = std::move(display);
  n.host = host;
  return n;
}

}  // namespace

ProvenanceGraph ProvenanceGraph::build_graph(const EventStore& store) {
  ProvenanceGraph g;
  for (const auto& ev : store.events()) {
    std::uint32_t actor = g.ensure_node(process_node(ev.actor, ev.host));

    switch (ev.type) {
      case EventType::ProcessCreate: {
        std::uint32_t child = g.ensure_node(process_node(*ev.child(), ev.host));
        g.add_edge({actor, child, EdgeLabel::Start, ev.ts, ev.id, false});
        break;
      }
      case EventType::ProcessTerminate:
        // Terminations carry no information flow; the node alone suffices.
        break;
      case EventType::FileWrite: {
        std::uint32_t f = g.ensure_node(object_node(
            NodeKind::File, file_node_key(ev.host, ev.file()->path), ev.file()->path, ev.host));
        g.add_edge({actor, f, EdgeLabel::Write, ev.ts, ev.id, false});
        break;
      }
      case EventType::FileRead: {
        std::uint32_t f = g.ensure_node(object_node(
            NodeKind::File, file_node_key(ev.host, ev.file()->path), ev.file()->path, ev.host));
        g.add_edge({f, actor, EdgeLabel::Read, ev.ts, ev.id, false});
        break;
      }
      case EventType::FileDelete: {
        std::uint32_t f = g.ensure_node(object_node(
            NodeKind::File, file_node_key(ev.host, ev.file()->path), ev.file()->path, ev.host));
        g.add_edge({actor, f, EdgeLabel::Delete, ev.ts, ev.id, false});
        break;
      }
      case EventType::RegSet:
      case EventType::RegDelete: {
        std::uint32_t r = g.ensure_node(object_node(
            NodeKind::RegistryKey, reg_node_key(ev.host, ev.reg()->key), ev.reg()->key, ev.host));
        g.add_edge({actor, r,
                    ev.type == EventType::RegSet ? EdgeLabel::Write : EdgeLabel::Delete, ev.ts,
                    ev.id, false});
        break;
      }
      case EventType::RegRead: {
        std::uint32_t r = g.ensure_node(object_node(
            NodeKind::RegistryKey, reg_node_key(ev.host, ev.reg()->key), ev.reg()->key, ev.host));
        g.add_edge({r, actor, EdgeLabel::Read, ev.ts, ev.id, false});
        break;
      }
      case EventType::NetConnect: {
        const auto* e = ev.endpoint();
        std::uint32_t s = g.ensure_node(object_node(
            NodeKind::Socket, socket_node_key(e->ip, e->port), canon_endpoint(e->ip, e->port), ""));
        g.add_edge({actor, s, EdgeLabel::Connect, ev.ts, ev.id, false});
        break;
      }
      case EventType::NetAccept: {
        const auto* e = ev.endpoint();
        std::uint32_t s = g.ensure_node(object_node(
            NodeKind::Socket, socket_node_key(e->ip, e->port), canon_endpoint(e->ip, e->port), ""));
        g.add_edge({s, actor, EdgeLabel::Accept, ev.ts, ev.id, false});
        break;
      }
      case EventType::ModuleLoad: {
        std::uint32_t f = g.ensure_node(object_node(NodeKind::File,
                                                    file_node_key(ev.host, ev.module_()->path),
                                                    ev.module_()->path, ev.host));
        g.add_edge({f, actor, EdgeLabel::Load, ev.ts, ev.id, false});
        break;
      }
      case EventType::AccountCreate: {
        const auto* a = ev.account();
        std::uint32_t n = g.ensure_node(object_node(
            NodeKind::Account, account_node_key(ev.host, a->name, a->domain), a->name,
            a->domain ? "" : ev.host));
        g.add_edge({actor, n, EdgeLabel::Write, ev.ts, ev.id, false});
        break;
      }
      case EventType::Login: {
        const auto* a = ev.account();
        std::uint32_t n = g.ensure_node(object_node(
            NodeKind::Account, account_node_key(ev.host, a->name, a->domain), a->name,
            a->domain ? "" : ev.host));
        g.add_edge({n, actor, EdgeLabel::Read, ev.ts, ev.id, false});
        break;
      }
    }
  }
  return g;
}

ProvenanceGraph::Trace ProvenanceGraph::traverse(const std::vector<std::uint32_t>& seeds,
                                                 bool backward,
                                                 const TraversalOptions& opts) const {
  Trace result;
  std::vector<int> depth(nodes_.size(), -1);
  std::vector<char> edge_seen(edges_.size(), 0);
  std::deque<std::uint32_t> queue;

  for (auto seed : seeds) {
    if (depth[seed] != -1) continue;
    depth[seed] = 0;
    result.nodes.push_back(seed);
    queue.push_back(seed);
  }

  while (!queue.empty()) {
    std::uint32_t cur = queue.front();
    queue.pop_front();
    if (opts.max_depth >= 0 && depth[cur] >= opts.max_depth) continue;

    const auto& incident = backward ? in_[cur] : out_[cur];
    for (auto eix : incident) {
      const Edge& e = edges_[eix];
      if (opts.max_ts && e.ts > *opts.max_ts) continue;
      if (opts.min_ts && e.ts < *opts.min_ts) continue;
      if (!edge_seen[eix]) {
        edge_seen[eix] = 1;
        result.edge_ixs.push_back(eix);
      }
      std::uint32_t next = backward ? e.src : e.dst;
      if (depth[next] == -1) {
        depth[next] = depth[cur] + 1;
        result.nodes.push_back(next);
        queue.push_back(next);
      }
    }
  }

  std::sort(result.edge_ixs.begin(), result.edge_ixs.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (edges_[a].ts != edges_[b].ts) return edges_[a].ts < edges_[b].ts;
    return edges_[a].provenance < edges_[b].provenance;
  });
  result.event_ids.reserve(result.edge_ixs.size());
  std::string last;
  for (auto eix : result.edge_ixs) {
    const Edge& e = edges_[eix];
    if (e.from_rule) continue;
    if (e.provenance != last) {
      result.event_ids.push_back(e.provenance);
      last = e.provenance;
    }
  }
  return result;
}

ProvenanceGraph::Trace ProvenanceGraph::traverse_backward(std::uint32_t seed,
                                                          const TraversalOptions& opts) const {
  return traverse({seed}, true, opts);
}

ProvenanceGraph::Trace ProvenanceGraph::traverse_forward(std::uint32_t seed,
                                                         const TraversalOptions& opts) const {
  return traverse({seed}, false, opts);
}

ProvenanceGraph ProvenanceGraph::extract(const std::vector<std::uint32_t>& node_ixs,
                                         const std::vector<std::uint32_t>& edge_ixs) const {
  ProvenanceGraph sub;
  for (auto ix : node_ixs) sub.ensure_node(nodes_[ix]);
  for (auto eix : edge_ixs) {
    const Edge& e = edges_[eix];
    std::uint32_t s = sub.ensure_node(nodes_[e.src]);
    std::uint32_t d = sub.ensure_node(nodes_[e.dst]);
    Edge copy = e;
    copy.src = s;
    copy.dst = d;
    sub.add_edge(std::move(copy));
  }
  return sub;
}

void ProvenanceGraph::merge_from(const ProvenanceGraph& other) {
  for (const auto& n : other.nodes_) ensure_node(n);
  for (const auto& e : other.edges_) {
    Edge copy = e;
    copy.src = *find_node(other.nodes_[e.src].key);
    copy.dst = *find_node(other.nodes_[e.dst].key);
    add_edge(std::move(copy));
  }
}

ProvenanceGraph ProvenanceGraph::merge_graphs(const ProvenanceGraph& a, const ProvenanceGraph& b) {
  ProvenanceGraph out;
  out.merge_from(a);
  out.merge_from(b);
  return out;
}

std::vector<int> ProvenanceGraph::distances_from(std::uint32_t seed) const {
  std::vector<int> dist(nodes_.size(), -1);
  dist[seed] = 0;
  std::deque<std::uint32_t> queue{seed};
  while (!queue.empty()) {
    std::uint32_t cur = queue.front();
    queue.pop_front();
    auto relax = [&](const Edge& e, std::uint32_t next) {
      if (e.label != EdgeLabel::Start && e.label != EdgeLabel::ExpertGuided) return;
      if (dist[next] == -1) {
        dist[next] = dist[cur] + 1;
        queue.push_back(next);
      }
    };
    for (auto eix : out_[cur]) relax(edges_[eix], edges_[eix].dst);
    for (auto eix : in_[cur]) relax(edges_[eix], edges_[eix].src);
  }
  return dist;
}

std::optional<int> ProvenanceGraph::hop_distance(std::uint32_t a, std::uint32_t b) const {
  if (a == b) return 0;
  auto dist = distances_from(a);
  if (dist[b] == -1) return std::nullopt;
  return dist[b];
}

std::optional<std::uint32_t> ProvenanceGraph::parent_start_edge(std::uint32_t node_ix) const {
  std::optional<std::uint32_t> best;
  for (auto eix : in_[node_ix]) {
    const Edge& e = edges_[eix];
    if (e.label != EdgeLabel::Start) continue;
    if (!best || e.ts < edges_[*best].ts ||
        (e.ts == edges_[*best].ts && e.provenance < edges_[*best].provenance))
      best = eix;
  }
  return best;
}

std::optional<std::vector<std::uint32_t>> ProvenanceGraph::forward_start_path(
    std::uint32_t from, std::uint32_t to) const {
  if (from == to) return std::vector<std::uint32_t>{from};
  std::vector<std::uint32_t> prev(nodes_.size(), UINT32_MAX);
  std::deque<std::uint32_t> queue{from};
  prev[from] = from;
  while (!queue.empty()) {
    std::uint32_t cur = queue.front();
    queue.pop_front();
    for (auto eix : out_[cur]) {
      const Edge& e = edges_[eix];
      if (e.label != EdgeLabel::Start && e.label != EdgeLabel::ExpertGuided) continue;
      if (prev[e.dst] != UINT32_MAX) continue;
      prev[e.dst] = cur;
      if (e.dst == to) {
        std::vector<std::uint32_t> path{to};
        for (std::uint32_t n = to; n != from; n = prev[n]) path.push_back(prev[n]);
        std::reverse(path.begin(), path.end());
        return path;
      }
      queue.push_back(e.dst);
    }
  }
  return std::nullopt;
}

std::size_t ProvenanceGraph::apply_expert_edges(const EventStore& store,
                                                const std::vector<ExpertEdgeRule>& rules) {
  std::size_t added = 0;

  for (const auto& rule : rules) {
    struct Hit {
      const AuditEvent* ev;
      std::string token;
    };
    std::vector<Hit> triggers;
    std::unordered_map<std::string, std::vector<const AuditEvent*>> brokers_by_token;

    for (const auto& ev : store.events()) {
      if (eval_all(rule.trigger.all, ev)) {
        if (auto tok = apply_capture(rule.trigger.token, ev); tok && !tok->empty())
          triggers.push_back({&ev, *tok});
      }
      if (eval_all(rule.broker.all, ev)) {
        if (auto tok = apply_capture(rule.broker.token, ev); tok && !tok->empty())
          brokers_by_token[*tok].push_back(&ev);
      }
    }

    for (const auto& trig : triggers) {
      auto it = brokers_by_token.find(trig.token);
      if (it == brokers_by_token.end()) continue;
      // Store order is (ts, id): the first broker inside the window is the
      // nearest-in-time match.
      const AuditEvent* broker = nullptr;
      for (const AuditEvent* b : it->second) {
        if (b->ts < trig.ev->ts) continue;
        if (b->ts - trig.ev->ts > rule.window_ms) break;
        broker = b;
        break;
      }
      if (!broker) continue;

      std::string src_key;
      if (rule.src_role == ExpertSrcRole::TriggerProcess) {
        const ProcessRef* proc = rule.trigger.subject == ExpertSubject::Child
                                     ? trig.ev->child()
                                     : &trig.ev->actor;
        if (!proc) continue;
        src_key = proc->guid;
      } else {
        src_key = event_object_node_key(*trig.ev);
      }
      std::string dst_key = event_object_node_key(*broker);
      if (src_key.empty() || dst_key.empty()) continue;

      auto src = find_node(src_key);
      auto dst = find_node(dst_key);
      if (!src || !dst) continue;
      if (add_edge({*src, *dst, EdgeLabel::ExpertGuided, broker->ts, rule.id, true})) ++added;
    }
  }
  return added;
}

}  // namespace persist_trace
