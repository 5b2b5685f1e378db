#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedlcbq/behavior.hpp"
#include "fedlcbq/dataset.hpp"
#include "fedlcbq/dp.hpp"
#include "fedlcbq/engine.hpp"
#include "fedlcbq/generators.hpp"
#include "fedlcbq/schedule.hpp"
#include "fedlcbq/trace.hpp"

namespace fedlcbq {

// Experiment harness: JSON run configs in, CSV metrics and JSON summaries out.
//
// Run config keys:
//   mdp       path to an mdp json file (or an inline mdp object)
//   datasets  list of dataset paths, one per agent
//   gen_data  {K, M, seed?, behavior | behaviors} to sample datasets in-process
//             (behavior "split" assigns the half-coverage pair from the
//             split family; otherwise a behavior object, or one per agent)
//   schedule  {kind: periodic|exponential|explicit, tau?, gamma?, tau1?, points?}
//   delta, c_B, clip_q, alpha_gate   learner hyperparameters
//   seed      fallback for gen_data.seed
//   trace     optional path: record and save the full run trace
//   out       optional directory: write metrics.csv and summary.json

namespace detail {

inline nlohmann::json parse_json_file(const std::string& path) {
  std::string bytes = read_file_bytes(path);
  nlohmann::json j = nlohmann::json::parse(bytes, nullptr, false);
  if (j.is_discarded()) throw ValidationError("malformed json in '" + path + "'");
  return j;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string num_field(double x) { return nlohmann::json(x).dump(); }

}  // namespace detail

struct MetricsRow {
  int sync_index = 0;
  int episode_k = 0;
  double value_gap = 0.0;
  double v1_pess = 0.0;
  double v1_pi_k = 0.0;
  int comm_rounds_so_far = 0;
  uint64_t payload_entries = 0;
};

struct RunOutcome {
  int S = 0, A = 0, H = 0, M = 0, K = 0;
  double v_star = 0.0;
  double final_value_gap = 0.0;
  double final_v1_pess = 0.0;
  double final_v1_policy = 0.0;
  int comm_rounds = 0;
  uint64_t payload_entries_per_sync = 0;
  std::vector<MetricsRow> rows;
  nlohmann::json summary;
};

// Entries exchanged per synchronization: M uplink Q tables, one uplink count
// table, and a downlink of the aggregated Q and V tables plus the greedy
// policy (Q-sized) back to every agent, counted once.
inline uint64_t payload_entries_per_sync(int S, int A, int H, int M) {
  uint64_t hsa = static_cast<uint64_t>(H) * S * A;
  uint64_t hs = static_cast<uint64_t>(H) * S;
  return static_cast<uint64_t>(M) * hsa + hsa + 2 * hsa + hs;
}

namespace detail {

inline std::vector<BehaviorSpec> behaviors_from_config(const nlohmann::json& gen, int M, int A) {
  std::vector<BehaviorSpec> specs;
  if (gen.contains("behaviors")) {
    const auto& arr = gen.at("behaviors");
    if (!arr.is_array() || static_cast<int>(arr.size()) != M)
      throw ValidationError("gen_data.behaviors must list one behavior per agent");
    for (const auto& b : arr) specs.push_back(behavior_from_json(b));
  } else if (gen.contains("behavior")) {
    const auto& b = gen.at("behavior");
    if (b.is_string() && b.get<std::string>() == "split") {
      for (int m = 0; m < M; ++m) specs.push_back(split_behavior(m, M, A));
    } else {
      BehaviorSpec spec = behavior_from_json(b);
      specs.assign(M, spec);
    }
  } else {
    BehaviorSpec uniform;
    uniform.kind = BehaviorKind::uniform;
    specs.assign(M, uniform);
  }
  return specs;
}

}  // namespace detail

inline RunOutcome run_experiment(const nlohmann::json& config) {
  if (!config.is_object()) throw ValidationError("run config must be a json object");

  TabularMdp mdp;
  std::string mdp_ref;
  if (!config.contains("mdp")) throw ValidationError("run config needs an 'mdp' key");
  if (config.at("mdp").is_string()) {
    mdp_ref = config.at("mdp").get<std::string>();
    mdp = load_mdp(mdp_ref);
  } else {
    mdp = mdp_from_json(config.at("mdp"));
    validate_mdp(mdp);
    mdp_ref = "(inline)";
  }

  std::vector<OfflineDataset> datasets;
  std::vector<StochasticPolicy> behavior_policies;
  bool have_behaviors = false;
  if (config.contains("datasets") && config.contains("gen_data"))
    throw ValidationError("run config cannot have both 'datasets' and 'gen_data'");
  if (config.contains("datasets")) {
    for (const auto& p : config.at("datasets"))
      datasets.push_back(load_dataset(p.get<std::string>()));
  } else if (config.contains("gen_data")) {
    const nlohmann::json& gen = config.at("gen_data");
    int K = gen.at("K").get<int>();
    int M = gen.at("M").get<int>();
    if (K < 1 || M < 1) throw ValidationError("gen_data.K and gen_data.M must be positive");
    uint64_t seed = gen.contains("seed") ? gen.at("seed").get<uint64_t>()
                                         : config.value("seed", uint64_t{0});
    std::vector<BehaviorSpec> specs = detail::behaviors_from_config(gen, M, mdp.A);
    have_behaviors = true;
    for (int m = 0; m < M; ++m) {
      StochasticPolicy mu = make_behavior_policy(mdp, specs[m]);
      behavior_policies.push_back(mu);
      datasets.push_back(sample_dataset(mdp, mu, K, static_cast<uint32_t>(m), seed,
                                        behavior_id(specs[m])));
    }
  } else {
    throw ValidationError("run config needs 'datasets' or 'gen_data'");
  }
  if (datasets.empty()) throw ValidationError("run config lists no datasets");
  const int M = static_cast<int>(datasets.size());
  const int K = static_cast<int>(datasets[0].K());

  if (!config.contains("schedule")) throw ValidationError("run config needs a 'schedule' key");
  const nlohmann::json& sj = config.at("schedule");
  std::string kind = sj.at("kind").get<std::string>();
  SyncSchedule schedule;
  if (kind == "periodic") {
    schedule = periodic_schedule(K, sj.at("tau").get<int>());
  } else if (kind == "exponential") {
    int tau1 = sj.value("tau1", mdp.H);
    schedule = exponential_schedule(K, tau1, sj.at("gamma").get<double>());
  } else if (kind == "explicit") {
    schedule = explicit_schedule(K, sj.at("points").get<std::vector<int>>());
  } else {
    throw ValidationError("unknown schedule kind '" + kind + "'");
  }

  HyperParams hyper;
  hyper.delta = config.value("delta", 0.01);
  hyper.c_B = config.value("c_B", 81.0);
  hyper.clip_q = config.value("clip_q", false);
  if (config.contains("alpha_gate"))
    hyper.alpha_gate = detail::alpha_gate_from_name(config.at("alpha_gate").get<std::string>());

  // trace: either a path string or a bool (true places trace.flcqt in out/)
  std::string trace_path;
  if (config.contains("trace")) {
    const nlohmann::json& tj = config.at("trace");
    if (tj.is_string()) {
      trace_path = tj.get<std::string>();
    } else if (tj.is_boolean()) {
      if (tj.get<bool>()) {
        if (!config.contains("out"))
          throw ValidationError("trace=true needs an 'out' directory for trace.flcqt");
        std::filesystem::create_directories(config.at("out").get<std::string>());
        trace_path = (std::filesystem::path(config.at("out").get<std::string>()) /
                      "trace.flcqt").string();
      }
    } else {
      throw ValidationError("'trace' must be a path or a boolean");
    }
  }
  bool want_trace = !trace_path.empty();
  RunResult result = run_fedlcbq(mdp.S, mdp.A, mdp.H, datasets, schedule, hyper, want_trace);

  if (want_trace) {
    RunTrace& trace = *result.trace;
    trace.header.mdp_ref = mdp_ref;
    for (const auto& ds : datasets) trace.header.behavior_ids.push_back(ds.behavior_policy_id);
    if (have_behaviors) {
      std::vector<double> flat(static_cast<size_t>(mdp.H) * mdp.S * mdp.A, 0.0);
      for (const auto& mu : behavior_policies) {
        OccupancyTables occ = occupancy_distributions(mdp, mu);
        size_t i = 0;
        for (int h = 1; h <= mdp.H; ++h)
          for (int s = 0; s < mdp.S; ++s)
            for (int a = 0; a < mdp.A; ++a, ++i) flat[i] += occ.d_sa.at(h, s, a) / M;
      }
      trace.header.d_avg = flat;
    }
    std::filesystem::path trace_parent = std::filesystem::path(trace_path).parent_path();
    if (!trace_parent.empty()) std::filesystem::create_directories(trace_parent);
    save_trace(trace_path, trace);
  }

  DpResult star = value_iteration(mdp);
  double v_star = 0.0;
  for (int s = 0; s < mdp.S; ++s) v_star += mdp.rho[s] * star.tables.V.at(1, s);

  RunOutcome out;
  out.S = mdp.S; out.A = mdp.A; out.H = mdp.H; out.M = M; out.K = K;
  out.v_star = v_star;
  out.comm_rounds = static_cast<int>(result.sync_points.size());
  out.payload_entries_per_sync = payload_entries_per_sync(mdp.S, mdp.A, mdp.H, M);
  for (size_t i = 0; i < result.sync_points.size(); ++i) {
    const SyncPoint& sp = result.sync_points[i];
    MetricsRow row;
    row.sync_index = static_cast<int>(i) + 1;
    row.episode_k = sp.k;
    for (int s = 0; s < mdp.S; ++s) row.v1_pess += mdp.rho[s] * sp.V.at(1, s);
    row.v1_pi_k = evaluate_policy(mdp, sp.policy).v1_rho;
    row.value_gap = v_star - row.v1_pi_k;
    row.comm_rounds_so_far = row.sync_index;
    row.payload_entries = out.payload_entries_per_sync;
    out.rows.push_back(row);
  }
  const MetricsRow& last = out.rows.back();
  out.final_value_gap = last.value_gap;
  out.final_v1_pess = last.v1_pess;
  out.final_v1_policy = last.v1_pi_k;

  out.summary = {{"S", mdp.S}, {"A", mdp.A}, {"H", mdp.H}, {"M", M}, {"K", K},
                 {"v_star", v_star},
                 {"final_value_gap", out.final_value_gap},
                 {"final_v1_pess", out.final_v1_pess},
                 {"final_v1_policy", out.final_v1_policy},
                 {"comm_rounds", out.comm_rounds},
                 {"payload_entries_per_sync", out.payload_entries_per_sync},
                 {"schedule_points", schedule.points},
                 {"zeta1", compute_zeta1(mdp.S, mdp.A, K, M, mdp.H, hyper.delta)},
                 {"delta", hyper.delta},
                 {"c_B", hyper.c_B},
                 {"clip_q", hyper.clip_q},
                 {"alpha_gate", detail::alpha_gate_name(hyper.alpha_gate)}};
  return out;
}

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << "sync_index,episode_k,value_gap,V1_pess,V1_pi_k,comm_rounds_so_far,payload_entries\n";
  for (const MetricsRow& r : rows)
    f << r.sync_index << ',' << r.episode_k << ',' << detail::num_field(r.value_gap) << ','
      << detail::num_field(r.v1_pess) << ',' << detail::num_field(r.v1_pi_k) << ','
      << r.comm_rounds_so_far << ',' << r.payload_entries << '\n';
  if (!f) throw IoError("failed writing '" + path + "'");
}

inline void write_run_outputs(const RunOutcome& outcome, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_metrics_csv((std::filesystem::path(out_dir) / "metrics.csv").string(), outcome.rows);
  std::ofstream f(std::filesystem::path(out_dir) / "summary.json", std::ios::binary);
  if (!f) throw IoError("cannot open summary.json for writing in '" + out_dir + "'");
  f << outcome.summary.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------
//
// Sweep config keys:
//   base          a full run config (trace/out keys are dropped per run)
//   axes          object mapping dotted config paths to value lists, e.g.
//                 {"gen_data.M": [1,2,4,8], "schedule.tau": [10,20]}
//   replications  runs per axis combination (seeds derived deterministically)
//   seed          sweep master seed
//   workers       thread count (default: hardware concurrency)
//   out           output directory for sweep_runs.csv / sweep_summary.{csv,json}

struct SweepRun {
  int combo = 0;
  int rep = 0;
  uint64_t seed = 0;
  std::string status = "ok";  // or the error message
  nlohmann::json axis_values = nlohmann::json::object();
  double final_value_gap = 0.0;
  double final_v1_pess = 0.0;
  double final_v1_policy = 0.0;
  int comm_rounds = 0;
};

struct SweepOutcome {
  std::vector<std::string> axis_keys;
  std::vector<SweepRun> runs;          // combo-major, then replication
  nlohmann::json summary;              // one entry per combo
};

namespace detail {

inline void set_dotted(nlohmann::json& j, const std::string& dotted, const nlohmann::json& v) {
  nlohmann::json* cur = &j;
  size_t start = 0;
  while (true) {
    size_t dot = dotted.find('.', start);
    std::string key = dotted.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw ValidationError("bad axis path '" + dotted + "'");
    if (dot == std::string::npos) {
      (*cur)[key] = v;
      return;
    }
    cur = &(*cur)[key];
    start = dot + 1;
  }
}

inline uint64_t derive_run_seed(uint64_t sweep_seed, int combo, int rep) {
  return splitmix64(splitmix64(sweep_seed ^ (0x9e3779b97f4a7c15ULL * (combo + 1))) ^
                    static_cast<uint64_t>(rep));
}

}  // namespace detail

inline SweepOutcome run_sweep(const nlohmann::json& config) {
  if (!config.is_object() || !config.contains("base"))
    throw ValidationError("sweep config needs a 'base' run config");
  nlohmann::json base = config.at("base");
  base.erase("trace");
  base.erase("out");

  std::vector<std::string> keys;
  std::vector<std::vector<nlohmann::json>> values;
  if (config.contains("axes")) {
    const auto& axes = config.at("axes");
    if (!axes.is_object()) throw ValidationError("sweep axes must be a json object");
    for (auto it = axes.begin(); it != axes.end(); ++it) {  // alphabetical, stable
      if (!it.value().is_array() || it.value().empty())
        throw ValidationError("sweep axis '" + it.key() + "' must be a non-empty list");
      keys.push_back(it.key());
      values.push_back(std::vector<nlohmann::json>(it.value().begin(), it.value().end()));
    }
  }
  int combos = 1;
  for (const auto& v : values) combos *= static_cast<int>(v.size());
  int reps = config.value("replications", 1);
  if (reps < 1) throw ValidationError("replications must be positive");
  uint64_t sweep_seed = config.value("seed", uint64_t{0});

  SweepOutcome out;
  out.axis_keys = keys;
  out.runs.assign(static_cast<size_t>(combos) * reps, SweepRun{});

  std::vector<nlohmann::json> combo_axis_values(combos, nlohmann::json::object());
  std::vector<nlohmann::json> combo_configs(combos);
  for (int c = 0; c < combos; ++c) {
    nlohmann::json cfg = base;
    int rem = c;
    for (size_t ax = keys.size(); ax-- > 0;) {
      int idx = rem % static_cast<int>(values[ax].size());
      rem /= static_cast<int>(values[ax].size());
      detail::set_dotted(cfg, keys[ax], values[ax][idx]);
      combo_axis_values[c][keys[ax]] = values[ax][idx];
    }
    combo_configs[c] = cfg;
  }

  std::atomic<size_t> next{0};
  auto worker = [&]() {
    while (true) {
      size_t i = next.fetch_add(1);
      if (i >= out.runs.size()) return;
      int c = static_cast<int>(i) / reps;
      int rep = static_cast<int>(i) % reps;
      SweepRun& run = out.runs[i];
      run.combo = c;
      run.rep = rep;
      run.seed = detail::derive_run_seed(sweep_seed, c, rep);
      run.axis_values = combo_axis_values[c];
      nlohmann::json cfg = combo_configs[c];
      cfg["seed"] = run.seed;
      if (cfg.contains("gen_data")) cfg["gen_data"]["seed"] = run.seed;
      try {
        RunOutcome oc = run_experiment(cfg);
        run.final_value_gap = oc.final_value_gap;
        run.final_v1_pess = oc.final_v1_pess;
        run.final_v1_policy = oc.final_v1_policy;
        run.comm_rounds = oc.comm_rounds;
      } catch (const std::exception& e) {
        run.status = e.what();
      }
    }
  };
  unsigned hw = std::thread::hardware_concurrency();
  int workers = config.value("workers", static_cast<int>(hw ? hw : 2));
  workers = std::max(1, std::min<int>(workers, static_cast<int>(out.runs.size())));
  std::vector<std::thread> pool;
  for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  out.summary = nlohmann::json::array();
  for (int c = 0; c < combos; ++c) {
    int ok = 0, failed = 0;
    double sum = 0.0, sumsq = 0.0, comm = 0.0;
    for (int rep = 0; rep < reps; ++rep) {
      const SweepRun& r = out.runs[static_cast<size_t>(c) * reps + rep];
      if (r.status == "ok") {
        ok += 1;
        sum += r.final_value_gap;
        sumsq += r.final_value_gap * r.final_value_gap;
        comm += r.comm_rounds;
      } else {
        failed += 1;
      }
    }
    double mean = ok > 0 ? sum / ok : 0.0;
    double var = ok > 1 ? std::max(0.0, (sumsq - ok * mean * mean) / (ok - 1)) : 0.0;
    out.summary.push_back({{"combo", c},
                           {"axis_values", combo_axis_values[c]},
                           {"runs_ok", ok},
                           {"runs_failed", failed},
                           {"mean_final_value_gap", mean},
                           {"stddev_final_value_gap", std::sqrt(var)},
                           {"mean_comm_rounds", ok > 0 ? comm / ok : 0.0}});
  }
  return out;
}

inline void write_sweep_outputs(const SweepOutcome& outcome, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream f(std::filesystem::path(out_dir) / "sweep_runs.csv", std::ios::binary);
    if (!f) throw IoError("cannot open sweep_runs.csv for writing in '" + out_dir + "'");
    f << "combo,rep,seed,status";
    for (const auto& k : outcome.axis_keys) f << ',' << detail::csv_field(k);
    f << ",final_value_gap,final_v1_pess,final_v1_policy,comm_rounds\n";
    for (const SweepRun& r : outcome.runs) {
      f << r.combo << ',' << r.rep << ',' << r.seed << ',' << detail::csv_field(r.status);
      for (const auto& k : outcome.axis_keys) f << ',' << detail::csv_field(r.axis_values.at(k).dump());
      f << ',' << detail::num_field(r.final_value_gap) << ',' << detail::num_field(r.final_v1_pess)
        << ',' << detail::num_field(r.final_v1_policy) << ',' << r.comm_rounds << '\n';
    }
  }
  {
    std::ofstream f(std::filesystem::path(out_dir) / "sweep_summary.csv", std::ios::binary);
    if (!f) throw IoError("cannot open sweep_summary.csv for writing in '" + out_dir + "'");
    f << "combo";
    for (const auto& k : outcome.axis_keys) f << ',' << detail::csv_field(k);
    f << ",runs_ok,runs_failed,mean_final_value_gap,stddev_final_value_gap,mean_comm_rounds\n";
    for (const auto& row : outcome.summary) {
      f << row.at("combo").get<int>();
      for (const auto& k : outcome.axis_keys)
        f << ',' << detail::csv_field(row.at("axis_values").at(k).dump());
      f << ',' << row.at("runs_ok").get<int>() << ',' << row.at("runs_failed").get<int>() << ','
        << detail::num_field(row.at("mean_final_value_gap").get<double>()) << ','
        << detail::num_field(row.at("stddev_final_value_gap").get<double>()) << ','
        << detail::num_field(row.at("mean_comm_rounds").get<double>()) << '\n';
    }
  }
  {
    std::ofstream f(std::filesystem::path(out_dir) / "sweep_summary.json", std::ios::binary);
    if (!f) throw IoError("cannot open sweep_summary.json for writing in '" + out_dir + "'");
    f << outcome.summary.dump(2) << '\n';
  }
}

}  // namespace fedlcbq
