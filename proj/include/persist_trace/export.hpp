#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "persist_trace/detection.hpp"
#include "persist_trace/triage.hpp"

namespace persist_trace {

// Graphviz rendering. Processes are boxes, files/registry keys/accounts
// ellipses, sockets diamonds; rule-derived edges are dashed. Output is fully
// ordered (nodes by key, edges by ts/provenance/endpoints), so equal graphs
// render to equal bytes.
std::string to_dot(const ProvenanceGraph& g, const std::string& title = "");

nlohmann::json graph_to_json(const ProvenanceGraph& g);
ProvenanceGraph graph_from_json(const nlohmann::json& j);

nlohmann::json pseudo_edge_to_json(const PseudoEdge& pe);
PseudoEdge pseudo_edge_from_json(const nlohmann::json& j);

nlohmann::json alert_to_json(const ScoredAlert& al);
ScoredAlert alert_from_json(const nlohmann::json& j);

// NDJSON, one record per line, no header.
void write_pseudo_edges(const std::string& path, const std::vector<PseudoEdge>& edges);
std::vector<PseudoEdge> read_pseudo_edges(const std::string& path);
void write_scored_alerts(const std::string& path, const std::vector<ScoredAlert>& alerts);
std::vector<ScoredAlert> read_scored_alerts(const std::string& path);

}  // namespace persist_trace
