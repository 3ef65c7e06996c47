#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "persist_trace/export.hpp"
#include "persist_trace/pipeline.hpp"
#include "persist_trace/scenario.hpp"

namespace pt = persist_trace;

namespace {

// 0 ok; 101 usage, 102 config, 103 io, 104 rules/data. triage and run
// instead exit with min(alerts, 100) so scripts can branch on findings.
constexpr int kUsageExit = 101;
constexpr int kConfigExit = 102;
constexpr int kIoExit = 103;
constexpr int kDataExit = 104;

void print_summary(const nlohmann::json& j) {
  std::cout << pt::kSummaryHeader << " " << j.dump() << "\n";
}

void write_out(const std::string& out, const std::string& content) {
  if (out.empty() || out == "-")
    std::cout << content;
  else
    pt::write_file(out, content);
}

int cmd_gen(const std::string& scenario, std::uint64_t seed, const std::string& out, bool list) {
  if (list) {
    for (const pt::ScenarioInfo& s : pt::builtin_scenarios())
      std::cout << s.name << "\t" << s.description << "\n";
    return 0;
  }
  pt::GeneratedScenario s = pt::generate_scenario(scenario, seed);
  pt::write_scenario(s, out);
  nlohmann::json j;
  j["stage"] = "gen";
  j["scenario"] = s.name;
  j["seed"] = seed;
  j["events"] = s.events.size();
  j["truth_records"] = s.truth.size();
  j["dir"] = out;
  print_summary(j);
  return 0;
}

int cmd_graph(const pt::PipelineConfig& cfg, const std::string& edge_id, const std::string& format,
              const std::string& out) {
  pt::RuleSet rules = pt::load_rules_for(cfg);
  if (!edge_id.empty()) {
    if (cfg.edges_path.empty()) throw pt::ConfigError("--edge-id needs --edges");
    for (const pt::PseudoEdge& pe : pt::read_pseudo_edges(cfg.edges_path)) {
      if (pe.id != edge_id) continue;
      pt::ProvenanceGraph pag = pt::build_pag(pe);
      write_out(out, format == "json" ? pt::graph_to_json(pag).dump(2) + "\n"
                                      : pt::to_dot(pag, pe.id));
      return 0;
    }
    throw pt::IoError("no such edge in " + cfg.edges_path + ": " + edge_id);
  }
  pt::LoadedCase lc = pt::load_case(cfg, rules);
  write_out(out, format == "json" ? pt::graph_to_json(lc.graph).dump(2) + "\n"
                                  : pt::to_dot(lc.graph, "provenance"));
  return 0;
}

int cmd_rules_lint(const std::string& rules_dir) {
  std::vector<std::string> issues = pt::lint_ruleset(rules_dir);
  for (const std::string& s : issues) std::cout << s << "\n";
  nlohmann::json j;
  j["stage"] = "rules-lint";
  j["issues"] = issues.size();
  print_summary(j);
  return issues.empty() ? 0 : kDataExit;
}

int alerts_exit(const nlohmann::json& summary) {
  int n = summary.at("alerts").get<int>();
  return n > 100 ? 100 : n;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-phase persistence detector"};
  app.require_subcommand(1);

  pt::PipelineConfig cfg;
  std::string scenario, gen_out = "scenario";
  std::uint64_t seed = 1;
  bool gen_list = false;
  std::string edge_id, format = "dot", out;

  auto add_common = [&](CLI::App* c, bool rules_needed) {
    c->add_option("--store", cfg.store_dir, "event store directory");
    if (rules_needed) {
      c->add_option("--rules", cfg.rules_dir, "detection rule directory");
      c->add_option("--expert-rules", cfg.expert_rules, "extra expert-edge rules (file or dir)");
      c->add_flag("--no-expert", [&](std::int64_t) { cfg.use_expert = false; },
                  "drop all expert-edge rules");
    }
    c->add_option("--workers", cfg.workers, "worker threads (default PERSIST_TRACE_THREADS or 1)");
  };

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic scenario");
  gen->add_option("scenario", scenario, "scenario name (see --list)");
  gen->add_option("--seed", seed, "rng seed");
  gen->add_option("--out", gen_out, "output directory");
  gen->add_flag("--list", gen_list, "list scenarios");

  CLI::App* ingest = app.add_subcommand("ingest", "parse event files into a store");
  ingest->add_option("inputs", cfg.inputs, "event ndjson files")->expected(-1);
  ingest->add_flag("--lenient", cfg.lenient, "skip malformed lines");
  add_common(ingest, false);

  CLI::App* detect = app.add_subcommand("detect", "find persistence pseudo-edges");
  add_common(detect, true);
  detect->add_option("--out", cfg.edges_path, "pseudo-edge ndjson output");

  CLI::App* triage = app.add_subcommand("triage", "score and rank pseudo-edges");
  add_common(triage, true);
  triage->add_option("--edges", cfg.edges_path, "pseudo-edge ndjson from detect");
  triage->add_option("--alerts", cfg.alerts_path, "scored alert ndjson output");
  triage->add_option("--budget", cfg.budget, "max alerts (overrides config)");
  triage->add_option("--config", cfg.triage_config, "triage config file");

  CLI::App* run = app.add_subcommand("run", "ingest, detect and triage in one pass");
  run->add_option("inputs", cfg.inputs, "event ndjson files")->expected(-1);
  run->add_flag("--lenient", cfg.lenient, "skip malformed lines");
  add_common(run, true);
  run->add_option("--edges", cfg.edges_path, "pseudo-edge ndjson output");
  run->add_option("--alerts", cfg.alerts_path, "scored alert ndjson output");
  run->add_option("--budget", cfg.budget, "max alerts (overrides config)");
  run->add_option("--config", cfg.triage_config, "triage config file");

  CLI::App* graph = app.add_subcommand("graph", "export provenance or attack graphs");
  add_common(graph, true);
  graph->add_option("--edges", cfg.edges_path, "pseudo-edge ndjson from detect");
  graph->add_option("--edge-id", edge_id, "render this pseudo-edge's attack graph");
  graph->add_option("--format", format, "dot or json")
      ->check(CLI::IsMember({"dot", "json"}));
  graph->add_option("--out", out, "output file (default stdout)");

  CLI::App* rules = app.add_subcommand("rules", "rule utilities");
  rules->require_subcommand(1);
  CLI::App* lint = rules->add_subcommand("lint", "check a rule directory");
  lint->add_option("--rules", cfg.rules_dir, "detection rule directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kUsageExit;
  }

  try {
    if (gen->parsed()) {
      if (!gen_list && scenario.empty()) {
        std::cerr << "gen: scenario name required (or --list)\n";
        return kUsageExit;
      }
      return cmd_gen(scenario, seed, gen_out, gen_list);
    }
    if (ingest->parsed()) {
      print_summary(pt::run_ingest(cfg));
      return 0;
    }
    if (detect->parsed()) {
      print_summary(pt::run_detect(cfg));
      return 0;
    }
    if (triage->parsed()) {
      nlohmann::json j = pt::run_triage(cfg);
      print_summary(j);
      return alerts_exit(j);
    }
    if (run->parsed()) {
      nlohmann::json j = pt::run_full(cfg);
      print_summary(j);
      return alerts_exit(j);
    }
    if (graph->parsed()) return cmd_graph(cfg, edge_id, format, out);
    if (rules->parsed()) return cmd_rules_lint(cfg.rules_dir);
  } catch (const pt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const pt::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIoExit;
  } catch (const pt::RuleError& e) {
    std::cerr << "rule error: " << e.what() << "\n";
    return kDataExit;
  }
  return kUsageExit;
}
