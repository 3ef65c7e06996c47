#include "persist_trace/triage.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "persist_trace/rules.hpp"

namespace persist_trace {

std::string_view alert_category_name(AlertCategory c) {
  switch (c) {
    case AlertCategory::Causality: return "causality";
    case AlertCategory::CorrelationType1: return "correlation-type1";
    case AlertCategory::CorrelationType2: return "correlation-type2";
  }
  return "causality";
}

std::optional<AlertCategory> alert_category_from_name(std::string_view s) {
  if (s == "causality") return AlertCategory::Causality;
  if (s == "correlation-type1") return AlertCategory::CorrelationType1;
  if (s == "correlation-type2") return AlertCategory::CorrelationType2;
  return std::nullopt;
}

bool TriageConfig::is_internal_ip(const std::string& ip) const {
  if (ip.empty()) return true;
  if (is_loopback_or_linklocal(ip)) return true;
  for (const Cidr& c : internal_cidrs)
    if (c.contains(ip)) return true;
  return false;
}

TriageConfig default_triage_config() {
  TriageConfig cfg;
  for (const char* c : {"10.0.0.0/8", "172.16.0.0/12", "192.168.0.0/16"})
    cfg.internal_cidrs.push_back(*Cidr::parse(c));
  return cfg;
}

TriageConfig parse_triage_config(const std::string& path) {
  TriageConfig cfg = default_triage_config();
  std::string text = read_file(path);
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw ConfigError(path + ":" + std::to_string(lineno) + ": " + msg);
  };
  auto trim = [](std::string s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    std::size_t e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  bool cidrs_set = false;
  for (const std::string& raw : split(text, '\n')) {
    ++lineno;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (val.size() >= 2 && val.front() == '"' && val.back() == '"')
      val = val.substr(1, val.size() - 2);
    auto num = [&]() {
      try {
        std::size_t used = 0;
        double d = std::stod(val, &used);
        if (used != val.size()) fail("bad number: " + val);
        return d;
      } catch (const ConfigError&) {
        throw;
      } catch (...) {
        fail("bad number: " + val);
        return 0.0;
      }
    };
    if (key == "budget") {
      cfg.budget = static_cast<int>(num());
      if (cfg.budget < 0) fail("budget must be >= 0");
    } else if (key == "rho_causality") {
      cfg.rho_causality = num();
    } else if (key == "rho_correlation") {
      cfg.rho_correlation = num();
    } else if (key == "critical_distance") {
      cfg.critical_distance = num();
    } else if (key == "illegit_source_score") {
      cfg.illegit_source_score = num();
    } else if (key == "dg_depth") {
      cfg.dg_depth = static_cast<int>(num());
      if (cfg.dg_depth < 1) fail("dg_depth must be >= 1");
    } else if (key == "internal_cidrs") {
      if (!cidrs_set) {
        cfg.internal_cidrs.clear();
        cidrs_set = true;
      }
      for (std::string part : split(val, ',')) {
        part = trim(part);
        if (part.empty()) continue;
        auto c = Cidr::parse(part);
        if (!c) fail("bad cidr: " + part);
        cfg.internal_cidrs.push_back(*c);
      }
    } else if (starts_with_ci(key, "weight.")) {
      cfg.weight_overrides[key.substr(7)] = num();
    } else {
      fail("unknown key: " + key);
    }
  }
  return cfg;
}

std::map<AlertCategory, std::vector<IndicatorSpec>> indicator_specs(const TriageConfig& cfg) {
  auto spec = [&](std::string id, IndicatorKind kind, std::vector<std::string> techniques,
                  std::vector<std::string> tactics, TimeRel when, double weight) {
    auto ov = cfg.weight_overrides.find(id);
    if (ov != cfg.weight_overrides.end()) weight = ov->second;
    return IndicatorSpec{std::move(id), kind, std::move(techniques), std::move(tactics), when,
                         weight};
  };
  std::map<AlertCategory, std::vector<IndicatorSpec>> out;
  out[AlertCategory::Causality] = {
      spec("chain-indirection", IndicatorKind::ChainIndirection, {}, {}, TimeRel::Either, 1.0),
      spec("credential-access", IndicatorKind::DgMatch, {}, {"credential-access"}, TimeRel::Either,
           1.0),
      spec("co-persistence", IndicatorKind::CoPersistence, {}, {}, TimeRel::Either, 1.0),
      spec("foothold-activity", IndicatorKind::DgMatch, {}, {"initial-access", "lateral-movement"},
           TimeRel::Before, 1.0),
      spec("discovery-before", IndicatorKind::DgMatch, {}, {"discovery"}, TimeRel::Before, 0.25),
  };
  out[AlertCategory::CorrelationType1] = {
      spec("credential-access", IndicatorKind::DgMatch, {}, {"credential-access"}, TimeRel::Either,
           1.0),
      spec("illegit-source", IndicatorKind::ConstantScore, {}, {}, TimeRel::Either, 1.0),
      spec("local-account-after", IndicatorKind::DgMatch, {"T1136"}, {}, TimeRel::After, 1.0),
      spec("rat-install", IndicatorKind::DgMatch, {"T1219"}, {}, TimeRel::Either, 1.0),
  };
  out[AlertCategory::CorrelationType2] = {
      spec("remote-discovery-before", IndicatorKind::DgMatch, {"T1018"}, {}, TimeRel::Before, 1.0),
      spec("tool-transfer-before", IndicatorKind::DgMatch, {"T1105"}, {}, TimeRel::Before, 1.0),
      spec("credential-access", IndicatorKind::DgMatch, {}, {"credential-access"}, TimeRel::Either,
           1.0),
      spec("local-account-after", IndicatorKind::DgMatch, {"T1136"}, {}, TimeRel::After, 1.0),
      spec("rat-install", IndicatorKind::DgMatch, {"T1219"}, {}, TimeRel::Either, 1.0),
  };
  return out;
}

double eq_chain_anomaly(int n_setup, int n_exec) {
  double ns = std::max(1, n_setup);
  double ne = std::max(1, n_exec);
  return ns * ns * ne * ne;
}

double eq_indicator_anomaly(double critical_distance, int hop_dist, int freq, int var) {
  double d = std::max(1, hop_dist);
  return (critical_distance / d) * static_cast<double>(freq) * static_cast<double>(var);
}

double eq_combine(const std::vector<std::pair<double, double>>& value_weight, double rho) {
  if (value_weight.empty()) return 0.0;
  double out = 1.0;
  for (const auto& [v, w] : value_weight) out *= std::pow(v, w * rho);
  return out;
}

AlertCategory classify_edge(const PseudoEdge& edge, const EventStore& store,
                            const TriageConfig& cfg) {
  static const char* kAccountTechniques[] = {"T1098", "T1136", "T1078"};
  bool account_based = false;
  for (const char* t : kAccountTechniques)
    if (edge.technique.rfind(t, 0) == 0) account_based = true;
  if (!account_based) return AlertCategory::Causality;
  const AuditEvent* exec = store.by_id(edge.execution.event_id);
  std::string ip;
  if (exec && exec->account()) ip = exec->account()->ip;
  return cfg.is_internal_ip(ip) ? AlertCategory::CorrelationType2
                                : AlertCategory::CorrelationType1;
}

namespace {

struct Hit {
  std::string event_id;
  std::string technique;
  std::string tactic;
  TimeMs ts = 0;
  std::string subject_guid;
};

bool hit_selected(const IndicatorSpec& spec, const Hit& h, TimeMs t_setup, TimeMs t_exec) {
  if (spec.when == TimeRel::Before && h.ts > t_exec) return false;
  if (spec.when == TimeRel::After && h.ts <= t_setup) return false;
  bool by_technique = false;
  for (const std::string& p : spec.technique_prefixes)
    if (h.technique.rfind(p, 0) == 0) by_technique = true;
  bool by_tactic = false;
  for (const std::string& t : spec.tactics)
    if (h.tactic == t) by_tactic = true;
  return by_technique || by_tactic;
}

}  // namespace

TriageResult triage(const EventStore& store, const ProvenanceGraph& graph, const RuleSet& rules,
                    const std::vector<PseudoEdge>& edges, const TriageConfig& cfg) {
  TriageResult result;
  result.total_edges = edges.size();
  if (edges.empty()) return result;

  // Setup matches are reused as co-persistence evidence across all alerts.
  std::vector<MatchRecord> all_setups = match_setup(store, rules);
  auto specs_by_cat = indicator_specs(cfg);

  std::vector<ScoredAlert> scored(edges.size());
  parallel_for(edges.size(), resolve_workers(cfg.workers), [&](std::size_t i) {
    const PseudoEdge& pe = edges[i];
    ScoredAlert& al = scored[i];
    al.edge = pe;
    al.category = classify_edge(pe, store, cfg);
    TimeMs t_setup = pe.setup.ts;
    TimeMs t_exec = pe.execution.ts;

    // Dependency graph: bounded history before execution plus bounded
    // aftermath once the setup existed, seeded from every alert node.
    ProvenanceGraph pag = build_pag(pe);
    std::vector<std::uint32_t> seeds;
    for (const Node& n : pag.nodes())
      if (auto ix = graph.find_node(n.key)) seeds.push_back(*ix);
    std::sort(seeds.begin(), seeds.end());
    seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());

    TraversalOptions back;
    back.max_depth = cfg.dg_depth;
    back.max_ts = t_exec;
    TraversalOptions fwd;
    fwd.max_depth = cfg.dg_depth;
    fwd.min_ts = t_setup;
    ProvenanceGraph::Trace bt = graph.traverse(seeds, true, back);
    ProvenanceGraph::Trace ft = graph.traverse(seeds, false, fwd);

    ProvenanceGraph dg = graph.extract(bt.nodes, bt.edge_ixs);
    dg.merge_from(graph.extract(ft.nodes, ft.edge_ixs));
    dg.merge_from(pag);

    std::set<std::string> dg_ids(bt.event_ids.begin(), bt.event_ids.end());
    dg_ids.insert(ft.event_ids.begin(), ft.event_ids.end());
    dg_ids.erase(pe.setup.event_id);
    dg_ids.erase(pe.execution.event_id);

    std::vector<const AuditEvent*> dg_events;
    dg_events.reserve(dg_ids.size());
    for (const std::string& id : dg_ids)
      if (const AuditEvent* e = store.by_id(id)) dg_events.push_back(e);

    std::vector<Hit> ind_hits;
    std::vector<Hit> co_hits;
    std::set<std::pair<std::string, std::string>> seen_hits;
    for (const MatchRecord& m : match_indicators(dg_events, rules)) {
      if (!seen_hits.emplace(m.event_id, m.label).second) continue;
      ind_hits.push_back(Hit{m.event_id, m.label, m.tactic, m.ts, m.event->actor.guid});
    }
    for (const MatchRecord& m : all_setups) {
      if (m.label == pe.technique) continue;
      if (!dg_ids.count(m.event_id)) continue;
      if (!seen_hits.emplace(m.event_id, m.label).second) continue;
      co_hits.push_back(Hit{m.event_id, m.label, m.tactic, m.ts, m.event->actor.guid});
    }

    std::unordered_map<std::string, int> freq;                           // technique -> hits
    std::unordered_map<std::string, std::set<std::string>> tactic_techs; // tactic -> techniques
    auto tally = [&](const std::vector<Hit>& hits) {
      for (const Hit& h : hits) {
        ++freq[h.technique];
        tactic_techs[h.tactic].insert(h.technique);
      }
    };
    tally(ind_hits);
    tally(co_hits);

    auto pstar_ix = dg.find_node(pe.setup_graph.initiator_key);
    auto anchor_ix = dg.find_node(pe.dst_key);
    auto hit_value = [&](const Hit& h) -> double {
      auto subj = dg.find_node(h.subject_guid);
      auto endpoint = h.ts <= t_exec ? pstar_ix : anchor_ix;
      if (!subj || !endpoint) return 0.0;
      auto d = dg.hop_distance(*subj, *endpoint);
      if (!d) return 0.0;  // disconnected evidence carries no weight
      int var = static_cast<int>(tactic_techs[h.tactic].size());
      return eq_indicator_anomaly(cfg.critical_distance, *d, freq[h.technique], var);
    };

    for (const IndicatorSpec& spec : specs_by_cat[al.category]) {
      Observation ob;
      ob.spec_id = spec.id;
      ob.weight = spec.weight;
      switch (spec.kind) {
        case IndicatorKind::ChainIndirection:
          ob.value = eq_chain_anomaly(pe.setup_graph.indirection, pe.execution_graph.indirection);
          break;
        case IndicatorKind::ConstantScore:
          ob.value = cfg.illegit_source_score;
          break;
        case IndicatorKind::DgMatch:
        case IndicatorKind::CoPersistence: {
          const std::vector<Hit>& pool =
              spec.kind == IndicatorKind::CoPersistence ? co_hits : ind_hits;
          for (const Hit& h : pool) {
            if (spec.kind == IndicatorKind::DgMatch && !hit_selected(spec, h, t_setup, t_exec))
              continue;
            double v = hit_value(h);
            if (v > ob.value) {
              ob.value = v;
              ob.detail = h.event_id;
            }
          }
          break;
        }
      }
      // Values at or below 1 are baseline behaviour, not anomalies.
      if (ob.value > 1.0) al.observations.push_back(std::move(ob));
    }
    std::sort(al.observations.begin(), al.observations.end(),
              [](const Observation& a, const Observation& b) { return a.spec_id < b.spec_id; });
    std::vector<std::pair<double, double>> vw;
    vw.reserve(al.observations.size());
    for (const Observation& ob : al.observations) vw.emplace_back(ob.value, ob.weight);
    double rho =
        al.category == AlertCategory::Causality ? cfg.rho_causality : cfg.rho_correlation;
    al.score = eq_combine(vw, rho);
  });

  std::sort(scored.begin(), scored.end(), [](const ScoredAlert& a, const ScoredAlert& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.edge.setup.ts != b.edge.setup.ts) return a.edge.setup.ts < b.edge.setup.ts;
    return a.edge.id < b.edge.id;
  });
  int rank = 0;
  double prev = -1.0;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    if (i == 0 || scored[i].score != prev) ++rank;
    prev = scored[i].score;
    scored[i].rank = rank;
  }
  std::size_t keep = std::min<std::size_t>(scored.size(), static_cast<std::size_t>(cfg.budget));
  scored.resize(keep);
  result.alerts = std::move(scored);
  return result;
}

}  // namespace persist_trace
