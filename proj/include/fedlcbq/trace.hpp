#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedlcbq/dataset.hpp"
#include "fedlcbq/mdp.hpp"
#include "fedlcbq/schedule.hpp"
#include "fedlcbq/table.hpp"

namespace fedlcbq {

enum class AlphaGate { total_count, per_agent };

// One local Q update: agent m visited (h, s, a) in episode k, observed reward
// r and next state s_next, and applied learning rate eta.
struct VisitRecord {
  uint32_t k = 0;
  uint16_t m = 0, h = 0;
  uint32_t s = 0, a = 0;
  double r = 0.0;
  uint32_t s_next = 0;
  double eta = 0.0;

  bool operator==(const VisitRecord&) const = default;
};

// Server state captured right after the aggregation at episode k: the new
// global tables, the policy, the cumulative counters N and the per-round
// counters n that produced them.
struct SyncSnapshot {
  int k = 0;
  int sync_index = 0;  // 1-based position within the schedule
  Table3<double> Q;
  Table2<double> V;  // h = 1..H+1
  DeterministicPolicy policy;
  Table3<uint64_t> N;
  Table3<uint64_t> n_round;

  bool operator==(const SyncSnapshot&) const = default;
};

struct TraceHeader {
  int S = 0, A = 0, H = 0, M = 0, K = 0;
  double delta = 0.0, c_B = 0.0, zeta1 = 0.0;
  bool clip_q = false;
  AlphaGate alpha_gate = AlphaGate::total_count;
  std::vector<int> schedule_points;
  std::string q_init = "zero";  // the only initialization the analysis covers

  // Optional context: the agent-averaged behavior occupancy (flattened
  // [h][s][a], h = 1..H) when the run knew its behavior policies, plus
  // provenance strings. Absent fields stay empty.
  std::vector<double> d_avg;
  std::vector<std::string> behavior_ids;
  std::string mdp_ref;
};

struct RunTrace {
  TraceHeader header;
  std::vector<VisitRecord> visits;      // in execution order: k-major, then agent, then h
  std::vector<SyncSnapshot> snapshots;  // one per schedule point

  SyncSchedule schedule() const {
    SyncSchedule s;
    s.kind = ScheduleKind::explicit_points;
    s.K = header.K;
    s.points = header.schedule_points;
    return s;
  }
};

// ---------------------------------------------------------------------------
// Trace file format: magic "FLCQT1", u32 header length, header JSON, then a
// tagged stream in execution order: 0x01 + 36-byte visit record (little
// endian), 0x02 + u32 length + snapshot JSON block. Parse failures report the
// byte offset.
// ---------------------------------------------------------------------------

inline constexpr char kTraceMagic[] = "FLCQT1";

namespace detail {

inline const char* alpha_gate_name(AlphaGate g) {
  return g == AlphaGate::total_count ? "total_count" : "per_agent";
}

inline AlphaGate alpha_gate_from_name(const std::string& name) {
  if (name == "total_count") return AlphaGate::total_count;
  if (name == "per_agent") return AlphaGate::per_agent;
  throw ValidationError("unknown alpha gate: " + name);
}

// Tables are flattened h-major starting at h = 1 (the unused slot 0 is not
// serialized).
template <typename T>
nlohmann::json table3_to_json(const Table3<T>& t) {
  nlohmann::json arr = nlohmann::json::array();
  for (int h = 1; h <= t.max_h; ++h)
    for (int s = 0; s < t.S; ++s)
      for (int a = 0; a < t.A; ++a) arr.push_back(t.at(h, s, a));
  return arr;
}

template <typename T>
Table3<T> table3_from_json(const nlohmann::json& arr, int max_h, int S, int A) {
  Table3<T> t(max_h, S, A);
  size_t expect = static_cast<size_t>(max_h) * S * A;
  if (arr.size() != expect)
    throw ValidationError("snapshot table has wrong length");
  size_t i = 0;
  for (int h = 1; h <= max_h; ++h)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) t.at(h, s, a) = arr[i++].get<T>();
  return t;
}

template <typename T>
nlohmann::json table2_to_json(const Table2<T>& t) {
  nlohmann::json arr = nlohmann::json::array();
  for (int h = 1; h <= t.max_h; ++h)
    for (int s = 0; s < t.S; ++s) arr.push_back(t.at(h, s));
  return arr;
}

template <typename T>
Table2<T> table2_from_json(const nlohmann::json& arr, int max_h, int S) {
  Table2<T> t(max_h, S);
  size_t expect = static_cast<size_t>(max_h) * S;
  if (arr.size() != expect)
    throw ValidationError("snapshot table has wrong length");
  size_t i = 0;
  for (int h = 1; h <= max_h; ++h)
    for (int s = 0; s < S; ++s) t.at(h, s) = arr[i++].get<T>();
  return t;
}

}  // namespace detail

inline nlohmann::json snapshot_to_json(const SyncSnapshot& snap) {
  nlohmann::json j;
  j["k"] = snap.k;
  j["sync_index"] = snap.sync_index;
  j["Q"] = detail::table3_to_json(snap.Q);
  j["V"] = detail::table2_to_json(snap.V);
  j["policy"] = detail::table2_to_json(snap.policy.action);
  j["N"] = detail::table3_to_json(snap.N);
  j["n_round"] = detail::table3_to_json(snap.n_round);
  return j;
}

inline SyncSnapshot snapshot_from_json(const nlohmann::json& j, int S, int A, int H) {
  SyncSnapshot snap;
  try {
    snap.k = j.at("k").get<int>();
    snap.sync_index = j.at("sync_index").get<int>();
    snap.Q = detail::table3_from_json<double>(j.at("Q"), H, S, A);
    snap.V = detail::table2_from_json<double>(j.at("V"), H + 1, S);
    snap.policy.S = S; snap.policy.A = A; snap.policy.H = H;
    snap.policy.action = detail::table2_from_json<int>(j.at("policy"), H, S);
    snap.N = detail::table3_from_json<uint64_t>(j.at("N"), H, S, A);
    snap.n_round = detail::table3_from_json<uint64_t>(j.at("n_round"), H, S, A);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed snapshot block: ") + e.what());
  }
  return snap;
}

inline void save_trace(const std::string& path, const RunTrace& trace) {
  const TraceHeader& hd = trace.header;
  nlohmann::json j;
  j["S"] = hd.S; j["A"] = hd.A; j["H"] = hd.H; j["M"] = hd.M; j["K"] = hd.K;
  j["delta"] = hd.delta;
  j["c_B"] = hd.c_B;
  j["zeta1"] = hd.zeta1;
  j["clip_q"] = hd.clip_q;
  j["alpha_gate"] = detail::alpha_gate_name(hd.alpha_gate);
  j["schedule"] = hd.schedule_points;
  j["q_init"] = hd.q_init;
  if (!hd.d_avg.empty()) j["d_avg"] = hd.d_avg;
  if (!hd.behavior_ids.empty()) j["behavior_ids"] = hd.behavior_ids;
  if (!hd.mdp_ref.empty()) j["mdp_ref"] = hd.mdp_ref;
  std::string header_bytes = j.dump();

  std::string buf;
  buf.reserve(6 + 4 + header_bytes.size() + trace.visits.size() * 37 + trace.snapshots.size() * 256);
  buf.append(kTraceMagic, 6);
  detail::put_u32(buf, static_cast<uint32_t>(header_bytes.size()));
  buf += header_bytes;

  size_t next_snap = 0;
  auto emit_snapshots_at = [&](uint32_t k) {
    while (next_snap < trace.snapshots.size() &&
           trace.snapshots[next_snap].k == static_cast<int>(k)) {
      std::string snap_bytes = snapshot_to_json(trace.snapshots[next_snap]).dump();
      buf.push_back(static_cast<char>(0x02));
      detail::put_u32(buf, static_cast<uint32_t>(snap_bytes.size()));
      buf += snap_bytes;
      ++next_snap;
    }
  };
  uint32_t last_k = 0;
  for (const VisitRecord& v : trace.visits) {
    if (v.k != last_k) {
      emit_snapshots_at(last_k);
      last_k = v.k;
    }
    buf.push_back(static_cast<char>(0x01));
    detail::put_u32(buf, v.k);
    detail::put_u16(buf, v.m);
    detail::put_u16(buf, v.h);
    detail::put_u32(buf, v.s);
    detail::put_u32(buf, v.a);
    detail::put_f64(buf, v.r);
    detail::put_u32(buf, v.s_next);
    detail::put_f64(buf, v.eta);
  }
  emit_snapshots_at(last_k);
  // snapshots not tied to the last visited episode (e.g. empty sync rounds)
  for (; next_snap < trace.snapshots.size(); ++next_snap) {
    std::string snap_bytes = snapshot_to_json(trace.snapshots[next_snap]).dump();
    buf.push_back(static_cast<char>(0x02));
    detail::put_u32(buf, static_cast<uint32_t>(snap_bytes.size()));
    buf += snap_bytes;
  }
  detail::write_file_bytes(path, buf);
}

inline RunTrace load_trace(const std::string& path) {
  std::string buf = detail::read_file_bytes(path);
  detail::ByteReader rd{buf, 0, path};
  rd.need(6);
  if (std::memcmp(buf.data(), kTraceMagic, 6) != 0)
    throw IoError(path + ": bad magic at byte offset 0, expected FLCQT1");
  rd.pos = 6;

  RunTrace trace;
  uint32_t header_len = rd.u32();
  rd.need(header_len);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.substr(rd.pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": bad header json at byte offset " + std::to_string(rd.pos) +
                  ": " + e.what());
  }
  rd.pos += header_len;

  TraceHeader& hd = trace.header;
  try {
    hd.S = j.at("S").get<int>();
    hd.A = j.at("A").get<int>();
    hd.H = j.at("H").get<int>();
    hd.M = j.at("M").get<int>();
    hd.K = j.at("K").get<int>();
    hd.delta = j.at("delta").get<double>();
    hd.c_B = j.at("c_B").get<double>();
    hd.zeta1 = j.at("zeta1").get<double>();
    hd.clip_q = j.at("clip_q").get<bool>();
    hd.alpha_gate = detail::alpha_gate_from_name(j.at("alpha_gate").get<std::string>());
    hd.schedule_points = j.at("schedule").get<std::vector<int>>();
    hd.q_init = j.at("q_init").get<std::string>();
    if (j.contains("d_avg")) hd.d_avg = j.at("d_avg").get<std::vector<double>>();
    if (j.contains("behavior_ids"))
      hd.behavior_ids = j.at("behavior_ids").get<std::vector<std::string>>();
    if (j.contains("mdp_ref")) hd.mdp_ref = j.at("mdp_ref").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("trace header missing fields: " + std::string(e.what()));
  }
  if (hd.q_init != "zero")
    throw ValidationError("trace has q_init=" + hd.q_init +
                          "; only zero-initialized traces are supported");

  while (rd.pos < buf.size()) {
    size_t tag_offset = rd.pos;
    uint8_t tag = rd.u8();
    if (tag == 0x01) {
      VisitRecord v;
      v.k = rd.u32();
      v.m = rd.u16();
      v.h = rd.u16();
      v.s = rd.u32();
      v.a = rd.u32();
      v.r = rd.f64();
      v.s_next = rd.u32();
      v.eta = rd.f64();
      trace.visits.push_back(v);
    } else if (tag == 0x02) {
      uint32_t len = rd.u32();
      rd.need(len);
      nlohmann::json sj;
      try {
        sj = nlohmann::json::parse(buf.substr(rd.pos, len));
      } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": bad snapshot json at byte offset " + std::to_string(rd.pos) +
                      ": " + e.what());
      }
      rd.pos += len;
      trace.snapshots.push_back(snapshot_from_json(sj, hd.S, hd.A, hd.H));
    } else {
      throw IoError(path + ": unknown record tag " + std::to_string(tag) +
                    " at byte offset " + std::to_string(tag_offset));
    }
  }
  return trace;
}

}  // namespace fedlcbq
