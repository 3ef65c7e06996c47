#include "persist_trace/pipeline.hpp"

#include <chrono>

#include "persist_trace/detection.hpp"
#include "persist_trace/export.hpp"

namespace persist_trace {

namespace {

class StageClock {
 public:
  StageClock() : start_(std::chrono::steady_clock::now()) {}
  // Milliseconds since construction or the previous lap, whichever is later.
  std::int64_t lap() {
    auto now = std::chrono::steady_clock::now();
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now - start_).count();
    start_ = now;
    return ms;
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

RuleSet load_rules_for(const PipelineConfig& cfg) {
  if (cfg.rules_dir.empty()) throw ConfigError("no rules directory given");
  RuleSet rules = load_ruleset(cfg.rules_dir);
  if (!cfg.expert_rules.empty()) {
    std::vector<ExpertEdgeRule> extra = load_expert_rules(cfg.expert_rules);
    rules.expert_rules.insert(rules.expert_rules.end(), extra.begin(), extra.end());
  }
  if (!cfg.use_expert) rules.expert_rules.clear();
  return rules;
}

TriageConfig triage_config_for(const PipelineConfig& cfg) {
  TriageConfig tc =
      cfg.triage_config.empty() ? default_triage_config() : parse_triage_config(cfg.triage_config);
  if (cfg.budget >= 0) tc.budget = cfg.budget;
  if (cfg.workers > 0) tc.workers = cfg.workers;
  return tc;
}

LoadedCase load_case(const PipelineConfig& cfg, const RuleSet& rules) {
  if (cfg.store_dir.empty()) throw ConfigError("no store directory given");
  LoadedCase lc{EventStore::open(cfg.store_dir), ProvenanceGraph(), 0};
  lc.graph = ProvenanceGraph::build_graph(lc.store);
  lc.expert_edges = lc.graph.apply_expert_edges(lc.store, rules.expert_rules);
  return lc;
}

nlohmann::json run_ingest(const PipelineConfig& cfg) {
  StageClock clock;
  if (cfg.inputs.empty()) throw ConfigError("no input files given");
  if (cfg.store_dir.empty()) throw ConfigError("no store directory given");
  LoadStats stats;
  auto loaded = EventStore::load_corpus(cfg.inputs,
                                        cfg.lenient ? LoadMode::Lenient : LoadMode::Strict, &stats);
  if (!loaded) throw IoError(loaded.error());
  loaded.value().save(cfg.store_dir);
  nlohmann::json j;
  j["stage"] = "ingest";
  j["events"] = stats.loaded;
  j["skipped"] = stats.skipped;
  j["store"] = cfg.store_dir;
  j["ingest_ms"] = clock.lap();
  return j;
}

namespace {

nlohmann::json detect_summary(const PipelineConfig& cfg, const LoadedCase& lc,
                              std::size_t setup_matches, const std::vector<PseudoEdge>& edges) {
  nlohmann::json j;
  j["stage"] = "detect";
  j["events"] = lc.store.size();
  j["setup_matches"] = setup_matches;
  j["expert_edges"] = lc.expert_edges;
  j["pseudo_edges"] = edges.size();
  if (!cfg.edges_path.empty()) j["edges_file"] = cfg.edges_path;
  return j;
}

nlohmann::json triage_summary(const PipelineConfig& cfg, const TriageResult& res) {
  nlohmann::json j;
  j["stage"] = "triage";
  j["pseudo_edges"] = res.total_edges;
  j["alerts"] = res.alerts.size();
  nlohmann::json top = nlohmann::json::array();
  for (const ScoredAlert& al : res.alerts) {
    nlohmann::json ja;
    ja["id"] = al.edge.id;
    ja["technique"] = al.edge.technique;
    ja["category"] = std::string(alert_category_name(al.category));
    ja["score"] = al.score;
    ja["rank"] = al.rank;
    top.push_back(std::move(ja));
  }
  j["top"] = std::move(top);
  if (!cfg.alerts_path.empty()) j["alerts_file"] = cfg.alerts_path;
  return j;
}

std::vector<PseudoEdge> detect_edges(const PipelineConfig& cfg, const LoadedCase& lc,
                                     const RuleSet& rules) {
  DetectOptions opts;
  opts.workers = cfg.workers;
  std::vector<PseudoEdge> edges = create_pseudo_edges(lc.store, lc.graph, rules, opts);
  if (!cfg.edges_path.empty()) write_pseudo_edges(cfg.edges_path, edges);
  return edges;
}

TriageResult triage_edges(const PipelineConfig& cfg, const LoadedCase& lc, const RuleSet& rules,
                          const std::vector<PseudoEdge>& edges) {
  TriageConfig tc = triage_config_for(cfg);
  TriageResult res = triage(lc.store, lc.graph, rules, edges, tc);
  if (!cfg.alerts_path.empty()) write_scored_alerts(cfg.alerts_path, res.alerts);
  return res;
}

}  // namespace

nlohmann::json run_detect(const PipelineConfig& cfg) {
  StageClock clock;
  RuleSet rules = load_rules_for(cfg);
  LoadedCase lc = load_case(cfg, rules);
  std::size_t setup_matches = match_setup(lc.store, rules).size();
  std::vector<PseudoEdge> edges = detect_edges(cfg, lc, rules);
  nlohmann::json j = detect_summary(cfg, lc, setup_matches, edges);
  j["detect_ms"] = clock.lap();
  return j;
}

nlohmann::json run_triage(const PipelineConfig& cfg) {
  StageClock clock;
  RuleSet rules = load_rules_for(cfg);
  LoadedCase lc = load_case(cfg, rules);
  std::vector<PseudoEdge> edges;
  if (!cfg.edges_path.empty())
    edges = read_pseudo_edges(cfg.edges_path);
  else
    edges = create_pseudo_edges(lc.store, lc.graph, rules, DetectOptions{cfg.workers});
  TriageResult res = triage_edges(cfg, lc, rules, edges);
  nlohmann::json j = triage_summary(cfg, res);
  j["triage_ms"] = clock.lap();
  return j;
}

nlohmann::json run_full(const PipelineConfig& cfg) {
  nlohmann::json ji = run_ingest(cfg);
  StageClock clock;
  RuleSet rules = load_rules_for(cfg);
  LoadedCase lc = load_case(cfg, rules);
  std::size_t setup_matches = match_setup(lc.store, rules).size();
  std::int64_t detect_prep_ms = clock.lap();
  std::vector<PseudoEdge> edges = detect_edges(cfg, lc, rules);
  std::int64_t detect_ms = detect_prep_ms + clock.lap();
  TriageResult res = triage_edges(cfg, lc, rules, edges);
  std::int64_t triage_ms = clock.lap();
  nlohmann::json j = triage_summary(cfg, res);
  j["stage"] = "run";
  j["events"] = ji["events"];
  j["skipped"] = ji["skipped"];
  j["setup_matches"] = setup_matches;
  j["expert_edges"] = lc.expert_edges;
  j["ingest_ms"] = ji["ingest_ms"];
  j["detect_ms"] = detect_ms;
  j["triage_ms"] = triage_ms;
  return j;
}

}  // namespace persist_trace
