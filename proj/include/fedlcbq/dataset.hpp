#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedlcbq/errors.hpp"
#include "fedlcbq/mdp.hpp"
#include "fedlcbq/rng.hpp"

namespace fedlcbq {

struct Transition {
  uint32_t s = 0, a = 0;
  double r = 0.0;
  uint32_t s_next = 0;

  bool operator==(const Transition&) const = default;
};

// One episode of length H; steps chain (s_next of step h is s of step h+1).
struct Trajectory {
  std::vector<Transition> steps;

  bool operator==(const Trajectory&) const = default;
};

struct OfflineDataset {
  uint32_t agent_id = 0;
  int S = 0, A = 0, H = 0;
  uint64_t seed = 0;  // the derived per-agent stream seed
  std::string behavior_policy_id;
  std::vector<Trajectory> trajectories;  // K episodes

  int K() const { return static_cast<int>(trajectories.size()); }
};

inline void validate_dataset(const OfflineDataset& ds) {
  if (ds.S < 1 || ds.A < 1 || ds.H < 1)
    throw ValidationError("dataset dimensions must be positive");
  for (size_t k = 0; k < ds.trajectories.size(); ++k) {
    const auto& traj = ds.trajectories[k].steps;
    if (static_cast<int>(traj.size()) != ds.H)
      throw ValidationError("trajectory " + std::to_string(k + 1) + " has length " +
                            std::to_string(traj.size()) + ", expected H=" + std::to_string(ds.H));
    for (int h = 0; h < ds.H; ++h) {
      const Transition& t = traj[h];
      if (t.s >= static_cast<uint32_t>(ds.S) || t.s_next >= static_cast<uint32_t>(ds.S) ||
          t.a >= static_cast<uint32_t>(ds.A))
        throw ValidationError("trajectory " + std::to_string(k + 1) + " step " +
                              std::to_string(h + 1) + " indexes out of range");
      if (h + 1 < ds.H && traj[h + 1].s != t.s_next)
        throw ValidationError("trajectory " + std::to_string(k + 1) +
                              " breaks the chain at step " + std::to_string(h + 1));
    }
  }
}

// Samples K episodes under the behavior policy. Pure function of
// (mdp, mu, K, master_seed, agent_id): the per-agent stream seed is derived
// once and the draw order (initial state, then action/next-state per step) is
// fixed, so equal inputs give bit-identical datasets.
inline OfflineDataset sample_dataset(const TabularMdp& mdp, const StochasticPolicy& mu,
                                     int K, uint32_t agent_id, uint64_t master_seed,
                                     const std::string& behavior_policy_id) {
  validate_policy(mu, mdp.S, mdp.A, mdp.H);
  if (K < 1) throw ValidationError("sample_dataset: K must be >= 1");
  OfflineDataset ds;
  ds.agent_id = agent_id;
  ds.S = mdp.S; ds.A = mdp.A; ds.H = mdp.H;
  ds.seed = derive_agent_seed(master_seed, agent_id);
  ds.behavior_policy_id = behavior_policy_id;
  ds.trajectories.resize(K);

  Rng rng(ds.seed);
  std::vector<double> row(mdp.S);
  std::vector<double> arow(mdp.A);
  for (int k = 0; k < K; ++k) {
    auto& steps = ds.trajectories[k].steps;
    steps.resize(mdp.H);
    int s = rng.categorical(mdp.rho);
    for (int h = 1; h <= mdp.H; ++h) {
      for (int a = 0; a < mdp.A; ++a) arow[a] = mu.pi.at(h, s, a);
      int a = rng.categorical(arow);
      for (int s2 = 0; s2 < mdp.S; ++s2) row[s2] = mdp.P.at(h, s, a, s2);
      int s2 = rng.categorical(row);
      steps[h - 1] = Transition{static_cast<uint32_t>(s), static_cast<uint32_t>(a),
                                mdp.r.at(h, s, a), static_cast<uint32_t>(s2)};
      s = s2;
    }
  }
  return ds;
}

// State-action visit frequencies of the dataset (counts / K), in the same
// table shape as occupancy_distributions so the two can be diffed directly.
inline OccupancyTables empirical_occupancy(const OfflineDataset& ds) {
  validate_dataset(ds);
  OccupancyTables out;
  out.S = ds.S; out.A = ds.A; out.H = ds.H;
  out.d_state = Table2<double>(ds.H, ds.S);
  out.d_sa = Table3<double>(ds.H, ds.S, ds.A);
  double w = 1.0 / ds.trajectories.size();
  for (const auto& traj : ds.trajectories)
    for (int h = 1; h <= ds.H; ++h) {
      const Transition& t = traj.steps[h - 1];
      out.d_state.at(h, t.s) += w;
      out.d_sa.at(h, t.s, t.a) += w;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Binary persistence: little-endian, magic "FLCQD1", then K*H fixed-width
// records of (u32 s, u32 a, f64 r, u32 s_next); dimensions and provenance go
// to a JSON sidecar at <path>.meta.json.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u16(std::string& buf, uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& buf, double v) {
  put_u64(buf, std::bit_cast<uint64_t>(v));
}

// Cursor with byte-offset error reporting for the binary readers.
struct ByteReader {
  const std::string& buf;
  size_t pos = 0;
  std::string origin;

  void need(size_t n) const {
    if (pos + n > buf.size())
      throw IoError(origin + ": truncated at byte offset " + std::to_string(pos) +
                    " (need " + std::to_string(n) + " more bytes)");
  }
  uint16_t u16() {
    need(2);
    uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<uint16_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(buf[pos++]);
  }
};

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return buf;
}

inline void write_file_bytes(const std::string& path, const std::string& buf) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace detail

inline constexpr char kDatasetMagic[] = "FLCQD1";

inline void save_dataset(const std::string& path, const OfflineDataset& ds) {
  validate_dataset(ds);
  std::string buf;
  buf.reserve(6 + static_cast<size_t>(ds.K()) * ds.H * 20);
  buf.append(kDatasetMagic, 6);
  for (const auto& traj : ds.trajectories)
    for (const Transition& t : traj.steps) {
      detail::put_u32(buf, t.s);
      detail::put_u32(buf, t.a);
      detail::put_f64(buf, t.r);
      detail::put_u32(buf, t.s_next);
    }
  detail::write_file_bytes(path, buf);

  nlohmann::json meta;
  meta["agent_id"] = ds.agent_id;
  meta["K"] = ds.K();
  meta["H"] = ds.H;
  meta["S"] = ds.S;
  meta["A"] = ds.A;
  meta["seed"] = ds.seed;
  meta["behavior_policy_id"] = ds.behavior_policy_id;
  std::ofstream out(path + ".meta.json");
  if (!out) throw IoError("cannot write sidecar: " + path + ".meta.json");
  out << meta.dump(2) << "\n";
}

inline OfflineDataset load_dataset(const std::string& path) {
  std::ifstream meta_in(path + ".meta.json");
  if (!meta_in) throw IoError("cannot open sidecar: " + path + ".meta.json");
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("cannot parse sidecar " + path + ".meta.json: " + e.what());
  }

  OfflineDataset ds;
  int K = 0;
  try {
    ds.agent_id = meta.at("agent_id").get<uint32_t>();
    K = meta.at("K").get<int>();
    ds.H = meta.at("H").get<int>();
    ds.S = meta.at("S").get<int>();
    ds.A = meta.at("A").get<int>();
    ds.seed = meta.at("seed").get<uint64_t>();
    ds.behavior_policy_id = meta.at("behavior_policy_id").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("sidecar missing fields: " + std::string(e.what()));
  }
  if (K < 1 || ds.H < 1) throw ValidationError("sidecar K and H must be positive");

  std::string buf = detail::read_file_bytes(path);
  detail::ByteReader rd{buf, 0, path};
  rd.need(6);
  if (std::memcmp(buf.data(), kDatasetMagic, 6) != 0)
    throw IoError(path + ": bad magic at byte offset 0, expected FLCQD1");
  rd.pos = 6;
  size_t expect = 6 + static_cast<size_t>(K) * ds.H * 20;
  if (buf.size() != expect)
    throw IoError(path + ": size " + std::to_string(buf.size()) + " != expected " +
                  std::to_string(expect) + " for K*H records");
  ds.trajectories.resize(K);
  for (int k = 0; k < K; ++k) {
    auto& steps = ds.trajectories[k].steps;
    steps.resize(ds.H);
    for (int h = 0; h < ds.H; ++h) {
      Transition t;
      t.s = rd.u32();
      t.a = rd.u32();
      t.r = rd.f64();
      t.s_next = rd.u32();
      steps[h] = t;
    }
  }
  validate_dataset(ds);
  return ds;
}

}  // namespace fedlcbq
