#pragma once

#include <map>
#include <string>
#include <vector>

#include "persist_trace/common.hpp"
#include "persist_trace/detection.hpp"

namespace persist_trace {

enum class AlertCategory { Causality, CorrelationType1, CorrelationType2 };
std::string_view alert_category_name(AlertCategory c);
std::optional<AlertCategory> alert_category_from_name(std::string_view s);

// How an indicator turns evidence into an anomaly value.
enum class IndicatorKind {
  ChainIndirection,  // squared setup/execution chain lengths
  DgMatch,           // indicator-rule hits in the dependency graph
  CoPersistence,     // other persistence setups in the dependency graph
  ConstantScore,     // fixed value, e.g. login from an illegitimate source
};

enum class TimeRel { Either, Before, After };  // relative to the alert window

struct IndicatorSpec {
  std::string id;
  IndicatorKind kind = IndicatorKind::DgMatch;
  std::vector<std::string> technique_prefixes;
  std::vector<std::string> tactics;
  TimeRel when = TimeRel::Either;
  double weight = 1.0;
};

struct TriageConfig {
  int budget = 10;
  double rho_causality = 1.0;
  double rho_correlation = 0.6;
  double critical_distance = 3.0;
  double illegit_source_score = 4.0;
  int dg_depth = 8;
  std::vector<Cidr> internal_cidrs;  // beyond loopback/link-local
  std::map<std::string, double> weight_overrides;
  int workers = 0;

  bool is_internal_ip(const std::string& ip) const;
};

TriageConfig default_triage_config();
// Flat `key = value` file, # comments; weight.<spec-id> overrides a weight.
TriageConfig parse_triage_config(const std::string& path);

std::map<AlertCategory, std::vector<IndicatorSpec>> indicator_specs(const TriageConfig& cfg);

struct Observation {
  std::string spec_id;
  double value = 0.0;
  double weight = 1.0;
  std::string detail;  // best-scoring hit event, when one exists
};

struct ScoredAlert {
  PseudoEdge edge;
  AlertCategory category = AlertCategory::Causality;
  double score = 0.0;
  int rank = 0;  // dense, 1-based
  std::vector<Observation> observations;
};

struct TriageResult {
  std::vector<ScoredAlert> alerts;  // descending score, truncated to budget
  std::size_t total_edges = 0;
};

// Anomaly of one alert from its chain shape alone: (N_s * N_e)^2. Longer
// indirection chains on either side are exponentially less normal.
double eq_chain_anomaly(int n_setup, int n_exec);

// Anomaly of one indicator hit: (D_c / D) * Freq * Var, D floored at 1.
double eq_indicator_anomaly(double critical_distance, int hop_dist, int freq, int var);

// Combined alert score: product of AS_i^(w_i * rho) over observations, in the
// given order; no observations means no anomaly at all, scored 0.
double eq_combine(const std::vector<std::pair<double, double>>& value_weight, double rho);

// Account-based persistence is judged by where the login came from; anything
// else is scored on causal structure.
AlertCategory classify_edge(const PseudoEdge& edge, const EventStore& store,
                            const TriageConfig& cfg);

TriageResult triage(const EventStore& store, const ProvenanceGraph& graph, const RuleSet& rules,
                    const std::vector<PseudoEdge>& edges, const TriageConfig& cfg);

}  // namespace persist_trace
