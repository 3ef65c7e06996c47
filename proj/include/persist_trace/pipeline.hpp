#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "persist_trace/rules.hpp"
#include "persist_trace/triage.hpp"

namespace persist_trace {

inline constexpr std::string_view kSummaryHeader = "persist-trace-summary v1";

// One options bag shared by the staged subcommands and the end-to-end run;
// `run` composes the stages on the same paths and produces byte-identical
// artifacts.
struct PipelineConfig {
  std::vector<std::string> inputs;  // event ndjson files (ingest)
  std::string store_dir;
  std::string rules_dir;
  std::string expert_rules;  // extra expert-rule file or dir; "" = none
  bool use_expert = true;    // false drops every expert-edge rule
  std::string triage_config;  // "" = built-in defaults
  int budget = -1;            // >= 0 overrides the config value
  int workers = 0;
  bool lenient = false;       // ingest: skip malformed lines
  std::string edges_path;     // detect output, triage input
  std::string alerts_path;    // triage output
};

RuleSet load_rules_for(const PipelineConfig& cfg);
TriageConfig triage_config_for(const PipelineConfig& cfg);

// Store + full provenance graph with expert edges applied.
struct LoadedCase {
  EventStore store;
  ProvenanceGraph graph;
  std::size_t expert_edges = 0;
};
LoadedCase load_case(const PipelineConfig& cfg, const RuleSet& rules);

// Each stage returns the summary the CLI prints as its final
// "persist-trace-summary v1 {...}" line.
nlohmann::json run_ingest(const PipelineConfig& cfg);
nlohmann::json run_detect(const PipelineConfig& cfg);
nlohmann::json run_triage(const PipelineConfig& cfg);
nlohmann::json run_full(const PipelineConfig& cfg);

}  // namespace persist_trace
