#pragma once

// Reference implementations the suites compare the library against, written
// for directness rather than speed: linear scans, plain BFS, full cross
// products, long-double arithmetic. Shared primitives (rule matchers) are
// reused only where a separate criterion already covers them.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "corpus.hpp"
#include "persist_trace/detection.hpp"
#include "persist_trace/graph.hpp"
#include "persist_trace/rules.hpp"
#include "persist_trace/store.hpp"

namespace pt_test {

// ---------------------------------------------------------------------------
// Store query: single linear scan in store order.

inline std::vector<const AuditEvent*> oracle_query(const EventStore& s, const QueryFilter& f) {
  std::vector<const AuditEvent*> out;
  for (const AuditEvent& ev : s.events()) {
    if (f.type && ev.type != *f.type) continue;
    if (f.actor_guid && ev.actor.guid != *f.actor_guid) continue;
    if (f.object_key && ev.okey != *f.object_key) continue;
    if (f.host && ev.host != *f.host) continue;
    if (f.time_window && (ev.ts < f.time_window->first || ev.ts > f.time_window->second)) continue;
    out.push_back(&ev);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Graph traversal: BFS with the documented rules. Edges incident to any node
// expanded within the depth bound and passing the time filter are collected;
// nodes join at the depth their first discovery assigns.

struct OracleTrace {
  std::set<std::uint32_t> nodes;
  std::set<std::uint32_t> edges;
  std::vector<std::string> event_ids;  // (ts, id) order, rule edges excluded
};

inline OracleTrace oracle_traverse(const ProvenanceGraph& g, std::vector<std::uint32_t> seeds,
                                   bool backward, const TraversalOptions& o) {
  OracleTrace out;
  std::map<std::uint32_t, int> depth;
  std::queue<std::uint32_t> q;
  for (std::uint32_t s : seeds) {
    if (depth.count(s)) continue;
    depth[s] = 0;
    out.nodes.insert(s);
    q.push(s);
  }
  while (!q.empty()) {
    std::uint32_t cur = q.front();
    q.pop();
    if (o.max_depth >= 0 && depth[cur] >= o.max_depth) continue;
    const auto& incident = backward ? g.in_edges(cur) : g.out_edges(cur);
    for (std::uint32_t eix : incident) {
      const Edge& e = g.edges()[eix];
      if (o.max_ts && e.ts > *o.max_ts) continue;
      if (o.min_ts && e.ts < *o.min_ts) continue;
      out.edges.insert(eix);
      std::uint32_t next = backward ? e.src : e.dst;
      if (!depth.count(next)) {
        depth[next] = depth[cur] + 1;
        out.nodes.insert(next);
        q.push(next);
      }
    }
  }
  std::vector<std::pair<std::pair<TimeMs, std::string>, std::string>> keyed;
  for (std::uint32_t eix : out.edges) {
    const Edge& e = g.edges()[eix];
    if (e.from_rule) continue;
    keyed.push_back({{e.ts, e.provenance}, e.provenance});
  }
  std::sort(keyed.begin(), keyed.end());
  for (const auto& [k, id] : keyed)
    if (out.event_ids.empty() || out.event_ids.back() != id) out.event_ids.push_back(id);
  return out;
}

// Undirected BFS over Start and ExpertGuided edges only.
inline std::optional<int> oracle_hop_distance(const ProvenanceGraph& g, std::uint32_t a,
                                              std::uint32_t b) {
  std::map<std::uint32_t, int> dist{{a, 0}};
  std::queue<std::uint32_t> q;
  q.push(a);
  while (!q.empty()) {
    std::uint32_t cur = q.front();
    q.pop();
    if (cur == b) return dist[cur];
    auto cross = [&](std::uint32_t eix, bool out_dir) {
      const Edge& e = g.edges()[eix];
      if (e.label != EdgeLabel::Start && e.label != EdgeLabel::ExpertGuided) return;
      std::uint32_t next = out_dir ? e.dst : e.src;
      if (!dist.count(next)) {
        dist[next] = dist[cur] + 1;
        q.push(next);
      }
    };
    for (std::uint32_t eix : g.out_edges(cur)) cross(eix, true);
    for (std::uint32_t eix : g.in_edges(cur)) cross(eix, false);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Two-phase pairing, brute force. Setup and execution matchers are the
// library's own (their behaviour has dedicated suites); everything downstream
// of them -- remote-process discovery, per-anchor tracing, alignment, both
// gates, claiming, ordering -- is recomputed here from the documented
// contract and compared field by field.

struct OracleEdge {
  std::string id;
  std::string technique;
  std::string setup_event_id, setup_rule_id;
  std::string exec_event_id, exec_rule_id;
  TimeMs setup_ts = 0, exec_ts = 0;
  std::string src_key, dst_key, anchor_guid;
  std::map<std::string, std::string> captures;

  bool operator==(const OracleEdge&) const = default;
  bool operator<(const OracleEdge& o) const {
    return std::tie(setup_ts, exec_ts, setup_event_id, exec_event_id) <
           std::tie(o.setup_ts, o.exec_ts, o.setup_event_id, o.exec_event_id);
  }
};

inline std::string describe(const OracleEdge& e) {
  return e.id + " [" + e.technique + "] src=" + e.src_key + " dst=" + e.dst_key;
}

inline std::optional<std::uint32_t> oracle_initiator(const MatchRecord& s,
                                                     const ProvenanceGraph& g) {
  std::string okey = event_object_node_key(*s.event);
  if (!okey.empty()) {
    if (auto obj = g.find_node(okey)) {
      std::optional<std::uint32_t> best;
      for (std::uint32_t eix : g.in_edges(*obj)) {
        const Edge& e = g.edges()[eix];
        if (e.label != EdgeLabel::ExpertGuided || e.ts > s.event->ts) continue;
        if (g.node(e.src).kind != NodeKind::Process) continue;
        if (!best) {
          best = eix;
          continue;
        }
        const Edge& b = g.edges()[*best];
        if (e.ts > b.ts || (e.ts == b.ts && e.provenance < b.provenance)) best = eix;
      }
      if (best) return g.edges()[*best].src;
    }
  }
  return g.find_node(s.event->actor.guid);
}

// Creation-chain root: repeatedly climb the earliest Start in-edge, stopping
// below allowlisted ancestors and on cycles.
inline std::uint32_t oracle_chain_root(const ProvenanceGraph& g, const RuleSet& rules,
                                       std::uint32_t from) {
  std::set<std::uint32_t> visited{from};
  std::uint32_t cur = from;
  for (;;) {
    std::optional<std::uint32_t> best;
    for (std::uint32_t eix : g.in_edges(cur)) {
      const Edge& e = g.edges()[eix];
      if (e.label != EdgeLabel::Start) continue;
      if (!best) {
        best = eix;
        continue;
      }
      const Edge& b = g.edges()[*best];
      if (e.ts < b.ts || (e.ts == b.ts && e.provenance < b.provenance)) best = eix;
    }
    if (!best) return cur;
    std::uint32_t parent = g.edges()[*best].src;
    if (visited.count(parent)) return cur;
    if (rules.is_allowlisted(g.node(parent).image)) return cur;
    visited.insert(parent);
    cur = parent;
  }
}

inline std::vector<OracleEdge> oracle_pseudo_edges(const EventStore& store,
                                                   const ProvenanceGraph& graph,
                                                   const RuleSet& rules) {
  std::vector<MatchRecord> setups = match_setup(store, rules);

  // First remote (non-loopback, non-link-local) connection per process guid,
  // in store order.
  struct Remote {
    std::string guid, event_id;
    TimeMs ts;
  };
  std::vector<Remote> remotes;
  std::set<std::string> seen_guids;
  for (const AuditEvent& ev : store.events()) {
    if (ev.type != EventType::NetConnect && ev.type != EventType::NetAccept) continue;
    const EndpointObject* ep = ev.endpoint();
    if (!ep || is_loopback_or_linklocal(ep->ip)) continue;
    if (!seen_guids.insert(ev.actor.guid).second) continue;
    remotes.push_back({ev.actor.guid, ev.id, ev.ts});
  }

  std::set<std::pair<std::string, std::string>> claimed;
  std::vector<OracleEdge> out;
  for (const Remote& rp : remotes) {
    auto anchor = graph.find_node(rp.guid);
    if (!anchor) continue;
    TraversalOptions topt;
    topt.max_ts = rp.ts;
    OracleTrace trace = oracle_traverse(graph, {*anchor}, true, topt);
    std::set<std::string> trace_ids(trace.event_ids.begin(), trace.event_ids.end());

    std::vector<const AuditEvent*> evs;
    for (const std::string& id : trace.event_ids)
      if (const AuditEvent* e = store.by_id(id)) evs.push_back(e);
    if (!trace_ids.count(rp.event_id))
      if (const AuditEvent* ce = store.by_id(rp.event_id)) evs.push_back(ce);

    for (const MatchRecord& ex : match_execution(evs, rp.guid, graph, rules)) {
      for (const MatchRecord& s : setups) {
        if (s.label != ex.label) continue;
        if (ex.ts <= s.ts) continue;
        std::size_t shared = 0;
        bool agree = true;
        for (const auto& [k, v] : s.captures) {
          auto it = ex.captures.find(k);
          if (it == ex.captures.end()) continue;
          ++shared;
          if (it->second != v) agree = false;
        }
        if (shared == 0 || !agree) continue;
        if (!trace_ids.count(s.event_id)) continue;
        auto init = oracle_initiator(s, graph);
        if (init) {
          const Node& n = graph.node(*init);
          if (rules.is_allowlisted(n.image) && !store.image_modified_before(n.image, s.ts))
            continue;
        }
        if (!claimed.emplace(s.event_id, ex.event_id).second) continue;
        OracleEdge oe;
        oe.id = "pe-" + s.event_id + "-" + ex.event_id;
        oe.technique = s.label;
        oe.setup_event_id = s.event_id;
        oe.setup_rule_id = s.rule_id;
        oe.setup_ts = s.ts;
        oe.exec_event_id = ex.event_id;
        oe.exec_rule_id = ex.rule_id;
        oe.exec_ts = ex.ts;
        oe.anchor_guid = ex.anchor_guid;
        oe.dst_key = rp.guid;
        oe.src_key = init ? graph.node(oracle_chain_root(graph, rules, *init)).key : "";
        oe.captures = s.captures;
        out.push_back(std::move(oe));
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline OracleEdge flatten(const PseudoEdge& pe) {
  OracleEdge oe;
  oe.id = pe.id;
  oe.technique = pe.technique;
  oe.setup_event_id = pe.setup.event_id;
  oe.setup_rule_id = pe.setup.rule_id;
  oe.setup_ts = pe.setup.ts;
  oe.exec_event_id = pe.execution.event_id;
  oe.exec_rule_id = pe.execution.rule_id;
  oe.exec_ts = pe.execution.ts;
  oe.anchor_guid = pe.execution.anchor_guid;
  oe.src_key = pe.src_key;
  oe.dst_key = pe.dst_key;
  oe.captures = pe.setup.captures;
  return oe;
}

// ---------------------------------------------------------------------------
// Scoring, evaluated in long double through different expression shapes.

inline double oracle_chain(int ns, int ne) {
  long double a = ns < 1 ? 1.0L : static_cast<long double>(ns);
  long double b = ne < 1 ? 1.0L : static_cast<long double>(ne);
  return static_cast<double>(std::pow(a, 2.0L) * std::pow(b, 2.0L));
}

inline double oracle_indicator(double dc, int d, int freq, int var) {
  long double dd = d < 1 ? 1.0L : static_cast<long double>(d);
  return static_cast<double>(static_cast<long double>(dc) * freq * var / dd);
}

inline double oracle_combine(const std::vector<std::pair<double, double>>& vw, double rho) {
  if (vw.empty()) return 0.0;
  long double acc = 0.0L;  // log domain
  for (const auto& [v, w] : vw)
    acc += static_cast<long double>(w) * static_cast<long double>(rho) *
           std::log(static_cast<long double>(v));
  return static_cast<double>(std::exp(acc));
}

// Per-hit branch selection and max rule: a hit before or at the execution
// instant is measured from the setup side, later hits from the execution
// side; disconnected hits contribute nothing.
struct ScoredHit {
  std::optional<int> d_setup;
  std::optional<int> d_exec;
  int freq = 1;
  int var = 1;
  TimeMs ts = 0;
};

inline double oracle_best_hit(const std::vector<ScoredHit>& hits, double dc, TimeMs t_exec) {
  long double best = 0.0L;
  for (const ScoredHit& h : hits) {
    std::optional<int> d = h.ts <= t_exec ? h.d_setup : h.d_exec;
    if (!d) continue;
    long double dd = *d < 1 ? 1.0L : static_cast<long double>(*d);
    long double v = static_cast<long double>(dc) / dd * h.freq * h.var;
    if (v > best) best = v;
  }
  return static_cast<double>(best);
}

inline bool rel_close(double a, double b, double tol = 1e-12) {
  double scale = std::max({std::fabs(a), std::fabs(b), 1e-300});
  return std::fabs(a - b) / scale <= tol;
}

// ---------------------------------------------------------------------------
// Randomized corpora for the pairing-equivalence fuzz. Plants and firings
// reuse the bundled rule shapes; tokens collide across plants on purpose so
// alignment, both gates, claiming and deduplication all get exercised.

inline std::vector<AuditEvent> random_corpus(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto roll = [&](std::uint64_t n) { return static_cast<std::size_t>(rng() % n); };
  auto chance = [&](int pct) { return static_cast<int>(rng() % 100) < pct; };

  Corpus c("wa", 1600000000000 + static_cast<TimeMs>(seed % 97) * 3600000);

  struct Host {
    std::string name;
    bool windows;
    ProcessRef broker_ui, broker_svc, broker_sched, broker_login;
    std::vector<ProcessRef> procs;
  };
  int guid_seq = 0;
  auto fresh = [&](const std::string& host, std::string image, std::string cmdline = "") {
    return proc(host + "-p" + std::to_string(++guid_seq), std::move(image), "",
                std::move(cmdline));
  };

  std::vector<Host> hosts;
  auto boot = [&](const std::string& name, bool windows) {
    Host h;
    h.name = name;
    h.windows = windows;
    c.on(name);
    if (windows) {
      ProcessRef wininit = fresh(name, "c:\\windows\\system32\\wininit.exe");
      h.broker_ui = fresh(name, "c:\\windows\\explorer.exe");
      h.broker_svc = fresh(name, "c:\\windows\\system32\\services.exe");
      h.broker_sched = fresh(name, "c:\\windows\\system32\\svchost.exe",
                             "svchost.exe -k netsvcs -p -s schedule");
      h.broker_login = fresh(name, "c:\\windows\\system32\\winlogon.exe");
      c.start(wininit, h.broker_ui);
      c.start(wininit, h.broker_svc);
      c.start(h.broker_svc, h.broker_sched);
      c.start(wininit, h.broker_login);
    } else {
      ProcessRef init = fresh(name, "/usr/lib/systemd/systemd");
      h.broker_ui = init;  // systemd doubles as the cgroup reader
      h.broker_svc = fresh(name, "/usr/sbin/apache2");
      h.broker_login = fresh(name, "/usr/sbin/sshd");
      c.start(init, h.broker_svc);
      c.start(init, h.broker_login);
    }
    ProcessRef seedp = fresh(name, windows ? "c:\\users\\u\\tools\\seed.exe" : "/home/u/seed");
    c.start(h.broker_ui, seedp);
    h.procs.push_back(seedp);
    return h;
  };
  hosts.push_back(boot("wa", true));
  hosts.push_back(boot("wb", true));
  hosts.push_back(boot("lx", false));

  const std::vector<std::string> tokens = {"alpha", "beta", "gamma", "delta"};
  struct Plant {
    int kind;  // 0 startup, 1 runkey, 2 task, 3 service, 4 account, 5 webshell, 6 unit
    std::size_t host;
    std::string token, path, key, vname, value, account;
  };
  std::vector<Plant> plants;

  auto startup_path = [](const std::string& tok) {
    return "c:\\users\\u\\appdata\\roaming\\microsoft\\windows\\start menu\\programs\\startup\\" +
           tok + ".lnk";
  };

  std::size_t target = 400 + roll(4000);
  int ip_seq = 0;
  while (c.events().size() < target) {
    std::size_t hi = roll(hosts.size());
    Host& h = hosts[hi];
    c.on(h.name);
    ProcessRef& actor = h.procs[roll(h.procs.size())];
    int act = static_cast<int>(rng() % 100);

    if (act < 40) {  // background noise
      switch (roll(4)) {
        case 0: c.fwrite(actor, h.windows ? "c:\\users\\u\\doc" + std::to_string(roll(40)) + ".txt"
                                          : "/home/u/f" + std::to_string(roll(40))); break;
        case 1: c.fread(actor, h.windows ? "c:\\windows\\win.ini" : "/etc/hosts"); break;
        case 2:
          if (h.windows) c.regread(actor, "hklm\\software\\misc\\state" + std::to_string(roll(9)));
          else c.fread(actor, "/proc/stat");
          break;
        default: c.connect(actor, "127.0.0.1", 9000 + static_cast<int>(roll(50))); break;
      }
    } else if (act < 55) {  // spawn
      ProcessRef child = fresh(h.name, h.windows
                                           ? "c:\\users\\u\\tools\\t" + std::to_string(roll(30)) +
                                                 ".exe"
                                           : "/home/u/t" + std::to_string(roll(30)));
      c.start(actor, child);
      if (h.procs.size() < 24) h.procs.push_back(child);
    } else if (act < 67) {  // plant a trigger
      Plant p;
      p.host = hi;
      p.token = tokens[roll(tokens.size())];
      if (!h.windows) {
        p.kind = chance(50) ? 5 : 6;
        if (p.kind == 5) {
          p.path = "/var/www/html/" + p.token + ".php";
          c.fwrite(actor, p.path);
        } else {
          p.path = "/etc/systemd/system/" + p.token + ".service";
          c.fwrite(actor, p.path);
        }
      } else {
        p.kind = static_cast<int>(roll(5));
        switch (p.kind) {
          case 0:
            p.path = startup_path(p.token);
            c.fwrite(actor, p.path);
            break;
          case 1:
            p.key = "hklm\\software\\microsoft\\windows\\currentversion\\run";
            p.vname = p.token;
            p.value = "c:\\users\\u\\" + p.token + ".exe";
            if (chance(20)) p.value += "x";  // payload variants for mismatches
            c.regset(actor, p.key, p.vname, p.value);
            break;
          case 2:
            p.path = "c:\\windows\\system32\\tasks\\" + p.token;
            c.fwrite(actor, p.path);
            break;
          case 3: {
            p.key = "hklm\\system\\currentcontrolset\\services\\" + p.token;
            p.vname = "imagepath";
            p.value = "c:\\users\\u\\" + p.token + ".exe";
            // Service entries are written by services.exe; a fraction are
            // bridged from sc.exe beforehand, a fraction have the broker
            // image tampered with, the rest stay pure housekeeping.
            if (chance(55)) {
              ProcessRef sc = fresh(h.name, "c:\\windows\\system32\\sc.exe",
                                    "sc.exe create " + p.token + " binpath= " + p.value);
              c.start(actor, sc);
              if (chance(30)) c.gap(31000);  // outside the pairing window
            } else if (chance(25)) {
              c.fwrite(actor, "c:\\windows\\system32\\services.exe");
            }
            c.regset(h.broker_svc, p.key, p.vname, p.value);
            break;
          }
          default:
            p.account = p.token + "-user";
            c.acreate(actor, p.account, false);
            break;
        }
      }
      if (chance(12) && !p.path.empty()) c.fdelete(actor, p.path);  // retracted plant
      plants.push_back(std::move(p));
    } else if (act < 82 && !plants.empty()) {  // fire a plant
      const Plant& p = plants[roll(plants.size())];
      Host& ph = hosts[p.host];
      c.on(ph.name);
      bool cross_host = chance(8) && ph.windows;
      Host& rh = cross_host ? hosts[p.host == 0 ? 1 : 0] : ph;
      ProcessRef payload = fresh(rh.name, rh.windows
                                              ? "c:\\users\\u\\" + p.token + ".exe"
                                              : "/home/u/" + p.token);
      switch (p.kind) {
        case 0:
          c.on(rh.name).fread(rh.broker_ui, p.path);
          c.start(rh.broker_ui, payload);
          break;
        case 1:
          c.on(rh.name).regread(rh.broker_ui, p.key, p.vname,
                                chance(85) ? p.value : p.value + "-stale");
          c.start(rh.broker_ui, payload);
          break;
        case 2:
          c.on(rh.name).fread(rh.broker_sched, p.path);
          c.start(rh.broker_sched, payload);
          break;
        case 3:
          c.on(rh.name).regread(rh.broker_svc, p.key, p.vname, p.value);
          c.start(rh.broker_svc, payload);
          break;
        case 4:
          c.on(rh.name).login(rh.broker_login, p.account, false,
                              chance(50) ? "203.0.113." + std::to_string(10 + roll(40))
                                         : "10.1.2." + std::to_string(2 + roll(40)),
                              3389);
          c.start(rh.broker_login, payload);
          break;
        case 5:
          c.fread(ph.broker_svc, p.path);
          c.start(ph.broker_svc, payload);
          break;
        default:
          c.fread(ph.broker_ui, "/sys/fs/cgroup/system.slice/" + p.token +
                                    ".service/cgroup.procs");
          c.start(ph.broker_ui, payload);
          break;
      }
      if (chance(75)) {
        std::string ip = chance(80) ? "198.51.100." + std::to_string(2 + (ip_seq++ % 60))
                                    : "127.0.0.1";
        if (chance(50))
          c.connect(payload, ip, 443);
        else
          c.accept(payload, ip, 4444);
      }
      if (h.procs.size() < 24) hosts[&rh - hosts.data()].procs.push_back(payload);
    } else if (act < 88) {  // broker reads with nothing planted yet
      if (h.windows) {
        const std::string& tok = tokens[roll(tokens.size())];
        if (chance(50))
          c.fread(h.broker_ui, startup_path(tok));
        else
          c.regread(h.broker_ui, "hklm\\software\\microsoft\\windows\\currentversion\\run", tok,
                    "c:\\users\\u\\" + tok + ".exe");
      } else {
        c.fread(h.broker_svc, "/var/www/html/" + tokens[roll(tokens.size())] + ".php");
      }
    } else if (act < 94) {  // stray remote traffic
      std::string ip = chance(70) ? "192.0.2." + std::to_string(2 + roll(50)) : "169.254.7.7";
      if (chance(50))
        c.connect(actor, ip, 8000 + static_cast<int>(roll(100)));
      else
        c.accept(actor, ip, 22);
    } else if (act < 98) {  // cross-host echo of a planted path
      if (!plants.empty()) {
        const Plant& p = plants[roll(plants.size())];
        if (p.kind == 0 || p.kind == 2) {
          Host& other = hosts[p.host == 0 ? 1 : 0];
          c.on(other.name).fwrite(other.procs[roll(other.procs.size())], p.path);
        }
      }
    } else {  // time skip, occasionally a terminate
      c.gap(60000 + static_cast<TimeMs>(roll(600000)));
      if (chance(30) && h.procs.size() > 1) {
        c.terminate(h.procs.back());
        h.procs.pop_back();
      }
    }
  }
  return c.events();
}

}  // namespace pt_test
