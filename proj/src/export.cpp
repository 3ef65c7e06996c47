#include "persist_trace/export.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace persist_trace {

namespace {

std::string dot_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

const char* node_shape(NodeKind k) {
  switch (k) {
    case NodeKind::Process: return "box";
    case NodeKind::Socket: return "diamond";
    default: return "ellipse";
  }
}

std::string short_edge_label(const Edge& e) {
  switch (e.label) {
    case EdgeLabel::Start: return "S";
    case EdgeLabel::Write: return "W";
    case EdgeLabel::Read: return "R";
    case EdgeLabel::Delete: return "D";
    case EdgeLabel::Connect: return "C";
    case EdgeLabel::Accept: return "A";
    case EdgeLabel::Load: return "L";
    case EdgeLabel::ExpertGuided: return "expert";
    case EdgeLabel::Pseudo: return "pseudo";
  }
  return "?";
}

std::string node_caption(const Node& n) {
  if (!n.display.empty()) return n.display;
  return n.key;
}

}  // namespace

std::string to_dot(const ProvenanceGraph& g, const std::string& title) {
  std::vector<std::uint32_t> order(g.nodes().size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return g.node(a).key < g.node(b).key;
  });
  std::vector<std::uint32_t> id_of(g.nodes().size());
  for (std::uint32_t i = 0; i < order.size(); ++i) id_of[order[i]] = i;

  std::ostringstream os;
  os << "digraph provenance {\n";
  os << "  rankdir=LR;\n";
  os << "  node [fontsize=10];\n";
  if (!title.empty()) os << "  label=\"" << dot_escape(title) << "\";\n";
  for (std::uint32_t i = 0; i < order.size(); ++i) {
    const Node& n = g.node(order[i]);
    os << "  n" << i << " [shape=" << node_shape(n.kind) << ", label=\""
       << dot_escape(node_caption(n)) << "\"];\n";
  }
  std::vector<std::uint32_t> eorder(g.edges().size());
  std::iota(eorder.begin(), eorder.end(), 0u);
  std::sort(eorder.begin(), eorder.end(), [&](std::uint32_t a, std::uint32_t b) {
    const Edge& x = g.edges()[a];
    const Edge& y = g.edges()[b];
    if (x.ts != y.ts) return x.ts < y.ts;
    if (x.provenance != y.provenance) return x.provenance < y.provenance;
    if (id_of[x.src] != id_of[y.src]) return id_of[x.src] < id_of[y.src];
    return id_of[x.dst] < id_of[y.dst];
  });
  for (std::uint32_t eix : eorder) {
    const Edge& e = g.edges()[eix];
    os << "  n" << id_of[e.src] << " -> n" << id_of[e.dst] << " [label=\"" << short_edge_label(e)
       << "\"";
    if (e.label == EdgeLabel::ExpertGuided || e.label == EdgeLabel::Pseudo)
      os << ", style=dashed";
    os << "];\n";
  }
  os << "}\n";
  return os.str();
}

nlohmann::json graph_to_json(const ProvenanceGraph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const Node& n : g.nodes()) {
    nlohmann::json jn;
    jn["kind"] = std::string(node_kind_name(n.kind));
    jn["key"] = n.key;
    if (!n.display.empty()) jn["display"] = n.display;
    if (!n.host.empty()) jn["host"] = n.host;
    if (!n.image.empty()) jn["image"] = n.image;
    if (!n.cmdline.empty()) jn["cmdline"] = n.cmdline;
    if (!n.parent_guid.empty()) jn["parent"] = n.parent_guid;
    nodes.push_back(std::move(jn));
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const Edge& e : g.edges()) {
    nlohmann::json je;
    je["src"] = e.src;
    je["dst"] = e.dst;
    je["label"] = std::string(edge_label_name(e.label));
    je["ts"] = e.ts;
    je["provenance"] = e.provenance;
    if (e.from_rule) je["from_rule"] = true;
    edges.push_back(std::move(je));
  }
  return nlohmann::json{{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

ProvenanceGraph graph_from_json(const nlohmann::json& j) {
  ProvenanceGraph g;
  for (const auto& jn : j.at("nodes")) {
    Node n;
    auto kind = node_kind_from_name(jn.at("kind").get<std::string>());
    if (!kind) throw IoError("unknown node kind: " + jn.at("kind").get<std::string>());
    n.kind = *kind;
    n.key = jn.at("key").get<std::string>();
    n.display = jn.value("display", "");
    n.host = jn.value("host", "");
    n.image = jn.value("image", "");
    n.cmdline = jn.value("cmdline", "");
    n.parent_guid = jn.value("parent", "");
    g.ensure_node(std::move(n));
  }
  for (const auto& je : j.at("edges")) {
    Edge e;
    e.src = je.at("src").get<std::uint32_t>();
    e.dst = je.at("dst").get<std::uint32_t>();
    auto label = edge_label_from_name(je.at("label").get<std::string>());
    if (!label) throw IoError("unknown edge label: " + je.at("label").get<std::string>());
    e.label = *label;
    e.ts = je.at("ts").get<TimeMs>();
    e.provenance = je.at("provenance").get<std::string>();
    e.from_rule = je.value("from_rule", false);
    if (e.src >= g.nodes().size() || e.dst >= g.nodes().size())
      throw IoError("edge endpoint out of range");
    g.add_edge(std::move(e));
  }
  return g;
}

namespace {

nlohmann::json match_lite_to_json(const MatchLite& m) {
  nlohmann::json j;
  j["event_id"] = m.event_id;
  j["rule_id"] = m.rule_id;
  j["technique"] = m.technique;
  j["ts"] = m.ts;
  if (!m.anchor_guid.empty()) j["anchor_guid"] = m.anchor_guid;
  nlohmann::json caps = nlohmann::json::object();
  for (const auto& [k, v] : m.captures) caps[k] = v;
  j["captures"] = std::move(caps);
  return j;
}

MatchLite match_lite_from_json(const nlohmann::json& j) {
  MatchLite m;
  m.event_id = j.at("event_id").get<std::string>();
  m.rule_id = j.at("rule_id").get<std::string>();
  m.technique = j.at("technique").get<std::string>();
  m.ts = j.at("ts").get<TimeMs>();
  m.anchor_guid = j.value("anchor_guid", "");
  if (j.contains("captures"))
    for (const auto& [k, v] : j.at("captures").items()) m.captures[k] = v.get<std::string>();
  return m;
}

nlohmann::json atomic_to_json(const AtomicGraph& ag) {
  nlohmann::json j;
  j["anchor_event"] = ag.anchor_event_id;
  j["phase"] = ag.phase == RulePhase::Setup ? "setup" : "execution";
  j["indirection"] = ag.indirection;
  if (!ag.root_key.empty()) j["root"] = ag.root_key;
  if (!ag.initiator_key.empty()) j["initiator"] = ag.initiator_key;
  j["graph"] = graph_to_json(ag.sub);
  return j;
}

AtomicGraph atomic_from_json(const nlohmann::json& j) {
  AtomicGraph ag;
  ag.anchor_event_id = j.at("anchor_event").get<std::string>();
  ag.phase = j.at("phase").get<std::string>() == "setup" ? RulePhase::Setup : RulePhase::Execution;
  ag.indirection = j.at("indirection").get<int>();
  ag.root_key = j.value("root", "");
  ag.initiator_key = j.value("initiator", "");
  ag.sub = graph_from_json(j.at("graph"));
  return ag;
}

}  // namespace

nlohmann::json pseudo_edge_to_json(const PseudoEdge& pe) {
  nlohmann::json j;
  j["id"] = pe.id;
  j["technique"] = pe.technique;
  j["setup"] = match_lite_to_json(pe.setup);
  j["execution"] = match_lite_to_json(pe.execution);
  j["src"] = pe.src_key;
  j["dst"] = pe.dst_key;
  j["setup_graph"] = atomic_to_json(pe.setup_graph);
  j["execution_graph"] = atomic_to_json(pe.execution_graph);
  return j;
}

PseudoEdge pseudo_edge_from_json(const nlohmann::json& j) {
  PseudoEdge pe;
  pe.id = j.at("id").get<std::string>();
  pe.technique = j.at("technique").get<std::string>();
  pe.setup = match_lite_from_json(j.at("setup"));
  pe.execution = match_lite_from_json(j.at("execution"));
  pe.src_key = j.at("src").get<std::string>();
  pe.dst_key = j.at("dst").get<std::string>();
  pe.setup_graph = atomic_from_json(j.at("setup_graph"));
  pe.execution_graph = atomic_from_json(j.at("execution_graph"));
  return pe;
}

nlohmann::json alert_to_json(const ScoredAlert& al) {
  nlohmann::json j = pseudo_edge_to_json(al.edge);
  j["category"] = std::string(alert_category_name(al.category));
  j["score"] = al.score;
  j["rank"] = al.rank;
  nlohmann::json obs = nlohmann::json::array();
  for (const Observation& ob : al.observations) {
    nlohmann::json jo;
    jo["indicator"] = ob.spec_id;
    jo["value"] = ob.value;
    jo["weight"] = ob.weight;
    if (!ob.detail.empty()) jo["evidence"] = ob.detail;
    obs.push_back(std::move(jo));
  }
  j["observations"] = std::move(obs);
  return j;
}

ScoredAlert alert_from_json(const nlohmann::json& j) {
  ScoredAlert al;
  al.edge = pseudo_edge_from_json(j);
  auto cat = alert_category_from_name(j.at("category").get<std::string>());
  if (!cat) throw IoError("unknown category: " + j.at("category").get<std::string>());
  al.category = *cat;
  al.score = j.at("score").get<double>();
  al.rank = j.at("rank").get<int>();
  for (const auto& jo : j.at("observations")) {
    Observation ob;
    ob.spec_id = jo.at("indicator").get<std::string>();
    ob.value = jo.at("value").get<double>();
    ob.weight = jo.at("weight").get<double>();
    ob.detail = jo.value("evidence", "");
    al.observations.push_back(std::move(ob));
  }
  return al;
}

namespace {

template <typename T, typename ToJson>
void write_ndjson(const std::string& path, const std::vector<T>& items, ToJson to_json) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  for (const T& item : items) os << to_json(item).dump() << "\n";
  if (!os.flush()) throw IoError("short write: " + path);
}

template <typename T, typename FromJson>
std::vector<T> read_ndjson(const std::string& path, FromJson from_json) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::vector<T> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

void write_pseudo_edges(const std::string& path, const std::vector<PseudoEdge>& edges) {
  write_ndjson(path, edges, pseudo_edge_to_json);
}

std::vector<PseudoEdge> read_pseudo_edges(const std::string& path) {
  return read_ndjson<PseudoEdge>(path, pseudo_edge_from_json);
}

void write_scored_alerts(const std::string& path, const std::vector<ScoredAlert>& alerts) {
  write_ndjson(path, alerts, alert_to_json);
}

std::vector<ScoredAlert> read_scored_alerts(const std::string& path) {
  return read_ndjson<ScoredAlert>(path, alert_from_json);
}

}  // namespace persist_trace
