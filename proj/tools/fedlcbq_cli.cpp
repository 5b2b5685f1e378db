#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "fedlcbq/diagnostics.hpp"
#include "fedlcbq/experiment.hpp"
#include "fedlcbq/generators.hpp"

namespace {

using nlohmann::json;

// Exit codes: 0 success, 2 validation error, 3 invariant/diagnostic failure,
// 4 I/O error. Errors go to stderr as a JSON object.

int report_error(const char* type, const std::string& message, int code) {
  json err = {{"error", {{"type", type}, {"message", message}}}};
  std::cerr << err.dump() << std::endl;
  return code;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw fedlcbq::IoError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw fedlcbq::IoError("failed writing '" + path + "'");
}

fedlcbq::BehaviorSpec parse_behavior_flag(const std::string& s) {
  fedlcbq::BehaviorSpec spec;
  if (s == "uniform") {
    spec.kind = fedlcbq::BehaviorKind::uniform;
    return spec;
  }
  if (s.rfind("epsilon_optimal:", 0) == 0) {
    spec.kind = fedlcbq::BehaviorKind::epsilon_optimal;
    spec.epsilon = std::stod(s.substr(16));
    return spec;
  }
  if (s.rfind("single_action:", 0) == 0) {
    spec.kind = fedlcbq::BehaviorKind::masked_uniform;
    spec.single_action = std::stoi(s.substr(14));
    return spec;
  }
  throw fedlcbq::ValidationError(
      "unknown behavior '" + s +
      "' (expected uniform, epsilon_optimal:<eps>, single_action:<a>, or split)");
}

struct Cli {
  uint64_t seed = 0;
  std::string out;
  std::string config;
};

int cmd_gen_mdp(const Cli& g, const std::string& kind, int S, int A, int H) {
  if (g.out.empty()) throw fedlcbq::ValidationError("gen-mdp needs --out <file>");
  fedlcbq::TabularMdp mdp = fedlcbq::make_mdp(kind, S, A, H, g.seed);
  fedlcbq::save_mdp(g.out, mdp);
  json j = {{"kind", kind}, {"S", mdp.S}, {"A", mdp.A}, {"H", mdp.H},
            {"seed", g.seed}, {"out", g.out}};
  std::cout << j.dump() << std::endl;
  return 0;
}

int cmd_gen_data(const Cli& g, std::string mdp_path, int K, int M, std::string behavior) {
  json cfg = g.config.empty() ? json::object() : fedlcbq::detail::parse_json_file(g.config);
  if (!mdp_path.empty()) cfg["mdp"] = mdp_path;
  if (K > 0) cfg["K"] = K;
  if (M > 0) cfg["M"] = M;
  if (!behavior.empty()) {
    if (behavior == "split")
      cfg["behavior"] = "split";
    else
      cfg["behavior"] = fedlcbq::behavior_to_json(parse_behavior_flag(behavior));
  }
  if (!cfg.contains("seed")) cfg["seed"] = g.seed;
  std::string out_dir = !g.out.empty() ? g.out : cfg.value("out", std::string{});
  if (out_dir.empty()) throw fedlcbq::ValidationError("gen-data needs --out <dir>");
  if (!cfg.contains("mdp")) throw fedlcbq::ValidationError("gen-data needs --mdp <file>");
  if (!cfg.contains("K")) throw fedlcbq::ValidationError("gen-data needs --K <episodes>");
  if (!cfg.contains("M")) cfg["M"] = 1;

  fedlcbq::TabularMdp mdp = fedlcbq::load_mdp(cfg.at("mdp").get<std::string>());
  int agents = cfg.at("M").get<int>();
  std::vector<fedlcbq::BehaviorSpec> specs =
      fedlcbq::detail::behaviors_from_config(cfg, agents, mdp.A);
  std::filesystem::create_directories(out_dir);
  json files = json::array();
  for (int m = 0; m < agents; ++m) {
    fedlcbq::StochasticPolicy mu = fedlcbq::make_behavior_policy(mdp, specs[m]);
    fedlcbq::OfflineDataset ds = fedlcbq::sample_dataset(
        mdp, mu, cfg.at("K").get<int>(), static_cast<uint32_t>(m),
        cfg.at("seed").get<uint64_t>(), fedlcbq::behavior_id(specs[m]));
    std::string path =
        (std::filesystem::path(out_dir) / ("agent_" + std::to_string(m) + ".flcqd")).string();
    fedlcbq::save_dataset(path, ds);
    files.push_back(path);
  }
  json j = {{"mdp", cfg.at("mdp")}, {"K", cfg.at("K")}, {"M", agents},
            {"seed", cfg.at("seed")}, {"files", files}};
  std::cout << j.dump() << std::endl;
  return 0;
}

int cmd_run(const Cli& g, const std::string& trace_path) {
  if (g.config.empty()) throw fedlcbq::ValidationError("run needs --config <json>");
  json cfg = fedlcbq::detail::parse_json_file(g.config);
  if (g.seed != 0) {
    cfg["seed"] = g.seed;
    if (cfg.contains("gen_data")) cfg["gen_data"]["seed"] = g.seed;
  }
  if (!g.out.empty()) cfg["out"] = g.out;
  if (!trace_path.empty()) cfg["trace"] = trace_path;
  fedlcbq::RunOutcome outcome = fedlcbq::run_experiment(cfg);
  if (cfg.contains("out")) fedlcbq::write_run_outputs(outcome, cfg.at("out").get<std::string>());
  std::cout << outcome.summary.dump() << std::endl;
  return 0;
}

int cmd_sweep(const Cli& g) {
  if (g.config.empty()) throw fedlcbq::ValidationError("sweep needs --config <json>");
  json cfg = fedlcbq::detail::parse_json_file(g.config);
  if (g.seed != 0) cfg["seed"] = g.seed;
  if (!g.out.empty()) cfg["out"] = g.out;
  fedlcbq::SweepOutcome outcome = fedlcbq::run_sweep(cfg);
  if (cfg.contains("out"))
    fedlcbq::write_sweep_outputs(outcome, cfg.at("out").get<std::string>());
  std::cout << outcome.summary.dump() << std::endl;
  return 0;
}

int cmd_verify(const Cli& g, const std::string& trace_path, const std::string& mdp_path) {
  fedlcbq::RunTrace trace = fedlcbq::load_trace(trace_path);
  fedlcbq::TabularMdp mdp = fedlcbq::load_mdp(mdp_path);
  fedlcbq::DpResult star = fedlcbq::value_iteration(mdp);

  fedlcbq::WeightBoundsReport weights = fedlcbq::verify_weight_bounds(trace);
  fedlcbq::DecompositionReport decomp = fedlcbq::verify_decomposition(trace, mdp, star.pi);
  fedlcbq::D3BoundsReport d3 = fedlcbq::verify_d3_bounds(trace);
  fedlcbq::ReplayReport replay = fedlcbq::verify_replay(trace);

  bool pass = weights.pass && decomp.pass && d3.pass && replay.pass;
  json report = {{"pass", pass},
                 {"trace", trace_path},
                 {"mdp", mdp_path},
                 {"weight_bounds", weights.to_json()},
                 {"decomposition", decomp.to_json()},
                 {"d3_bounds", d3.to_json()},
                 {"replay", replay.to_json()}};
  std::cout << report.dump(2) << std::endl;
  if (!g.out.empty()) write_text_file(g.out, report.dump(2) + "\n");
  return pass ? 0 : 3;
}

int cmd_schedule(const Cli& g, const std::string& kind, int K, int H, int tau, double gamma,
                 int tau1, int S, int M, double avg_conc) {
  fedlcbq::SyncSchedule s;
  if (kind == "periodic") {
    if (tau <= 0) throw fedlcbq::ValidationError("periodic schedule needs --tau > 0");
    s = fedlcbq::periodic_schedule(K, tau);
  } else if (kind == "exponential") {
    if (!(gamma > 0)) throw fedlcbq::ValidationError("exponential schedule needs --gamma > 0");
    s = fedlcbq::exponential_schedule(K, tau1 > 0 ? tau1 : H, gamma);
  } else {
    throw fedlcbq::ValidationError("unknown schedule kind '" + kind + "'");
  }
  double bound = avg_conc > 0 && S > 0 && M > 0
                     ? fedlcbq::tau1_bound(H, S, avg_conc, K, M)
                     : std::numeric_limits<double>::infinity();
  fedlcbq::ScheduleReport rep = fedlcbq::validate_schedule(s, H, bound);
  json j = {{"kind", kind},
            {"K", K},
            {"H", H},
            {"points", s.points},
            {"intervals", s.intervals()},
            {"count", s.points.size()},
            {"communication_heavy", static_cast<int>(s.points.size()) == K},
            {"validation",
             {{"pass", rep.pass},
              {"tau1_ok", rep.tau1_ok},
              {"ratio_ok", rep.ratio_ok},
              {"first_bad_interval", rep.first_bad_interval},
              {"tau1", rep.tau1},
              {"tau1_bound", std::isfinite(rep.tau1_bound) ? json(rep.tau1_bound) : json("unbounded")},
              {"max_ratio_allowed", rep.max_ratio_allowed},
              {"message", rep.message}}}};
  if (kind == "exponential") {
    double cb = fedlcbq::exponential_count_bound(H, K);
    j["count_bound"] = cb;
    j["count_within_bound"] = static_cast<double>(s.points.size()) <= cb;
  }
  std::cout << j.dump(2) << std::endl;
  if (!g.out.empty()) write_text_file(g.out, j.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated pessimistic Q-learning simulator and diagnostics"};
  app.require_subcommand(1);

  Cli g;
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--out", g.out, "Output file or directory");
  app.add_option("--config", g.config, "JSON config file");

  auto* gen_mdp = app.add_subcommand("gen-mdp", "Generate an MDP file");
  std::string kind = "random";
  int S = 2, A = 2, H = 2;
  gen_mdp->add_option("--kind", kind, "random | chain | split")->capture_default_str();
  gen_mdp->add_option("--S", S, "states")->capture_default_str();
  gen_mdp->add_option("--A", A, "actions")->capture_default_str();
  gen_mdp->add_option("--H", H, "horizon")->capture_default_str();

  auto* gen_data = app.add_subcommand("gen-data", "Sample offline datasets from an MDP");
  std::string gd_mdp, gd_behavior;
  int gd_K = 0, gd_M = 0;
  gen_data->add_option("--mdp", gd_mdp, "MDP json file");
  gen_data->add_option("--K", gd_K, "episodes per agent");
  gen_data->add_option("--agents", gd_M, "number of agents");
  gen_data->add_option("--behavior", gd_behavior,
                       "uniform | epsilon_optimal:<eps> | single_action:<a> | split");

  auto* run = app.add_subcommand("run", "Run one experiment from a config");
  std::string run_trace;
  run->add_option("--trace", run_trace, "record the full trace to this file");

  auto* sweep = app.add_subcommand("sweep", "Run an axis sweep from a config");

  auto* verify = app.add_subcommand("verify", "Check a trace against the diagnostics suite");
  std::string v_trace, v_mdp;
  verify->add_option("--trace", v_trace, "trace file")->required();
  verify->add_option("--mdp", v_mdp, "MDP json file")->required();

  auto* schedule = app.add_subcommand("schedule", "Construct and validate a sync schedule");
  std::string sc_kind = "periodic";
  int sc_K = 0, sc_H = 0, sc_tau = 0, sc_tau1 = 0, sc_S = 0, sc_M = 0;
  double sc_gamma = 0.0, sc_conc = 0.0;
  schedule->add_option("--kind", sc_kind, "periodic | exponential")->capture_default_str();
  schedule->add_option("--K", sc_K, "episodes")->required();
  schedule->add_option("--H", sc_H, "horizon")->required();
  schedule->add_option("--tau", sc_tau, "periodic interval");
  schedule->add_option("--gamma", sc_gamma, "exponential growth rate");
  schedule->add_option("--tau1", sc_tau1, "first exponential interval (default H)");
  schedule->add_option("--S", sc_S, "states (for the tau1 bound)");
  schedule->add_option("--M", sc_M, "agents (for the tau1 bound)");
  schedule->add_option("--avg-conc", sc_conc, "average concentrability (for the tau1 bound)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int r = app.exit(e);
    return r == 0 ? 0 : 2;
  }

  try {
    if (gen_mdp->parsed()) return cmd_gen_mdp(g, kind, S, A, H);
    if (gen_data->parsed()) return cmd_gen_data(g, gd_mdp, gd_K, gd_M, gd_behavior);
    if (run->parsed()) return cmd_run(g, run_trace);
    if (sweep->parsed()) return cmd_sweep(g);
    if (verify->parsed()) return cmd_verify(g, v_trace, v_mdp);
    if (schedule->parsed())
      return cmd_schedule(g, sc_kind, sc_K, sc_H, sc_tau, sc_gamma, sc_tau1, sc_S, sc_M, sc_conc);
  } catch (const fedlcbq::ValidationError& e) {
    return report_error("validation", e.what(), 2);
  } catch (const fedlcbq::IoError& e) {
    return report_error("io", e.what(), 4);
  } catch (const fedlcbq::InvariantError& e) {
    return report_error("invariant", e.what(), 3);
  } catch (const nlohmann::json::exception& e) {
    return report_error("validation", e.what(), 2);
  } catch (const std::exception& e) {
    return report_error("invariant", e.what(), 3);
  }
  return 2;
}
