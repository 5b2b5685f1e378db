#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "fedlcbq/trace.hpp"

#include "test_util.hpp"

using namespace fedlcbq;

namespace {

RunTrace make_trace(uint64_t seed) {
  testutil::FuzzConfig fc = testutil::make_fuzz_config(seed, {.max_K = 40});
  RunResult res = testutil::run_fuzz(fc);
  RunTrace trace = *res.trace;
  trace.header.behavior_ids = {"uniform"};
  trace.header.mdp_ref = "inline";
  return trace;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  EXPECT_TRUE(in.good()) << path;
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST(TraceIo, RoundTripIsExact) {
  RunTrace trace = make_trace(1);
  trace.header.d_avg.assign(static_cast<size_t>(trace.header.H) * trace.header.S * trace.header.A,
                            0.125);
  std::string path = testing::TempDir() + "trace_roundtrip.flcqt";
  save_trace(path, trace);
  RunTrace back = load_trace(path);

  EXPECT_EQ(back.header.S, trace.header.S);
  EXPECT_EQ(back.header.A, trace.header.A);
  EXPECT_EQ(back.header.H, trace.header.H);
  EXPECT_EQ(back.header.M, trace.header.M);
  EXPECT_EQ(back.header.K, trace.header.K);
  EXPECT_EQ(back.header.delta, trace.header.delta);
  EXPECT_EQ(back.header.c_B, trace.header.c_B);
  EXPECT_EQ(back.header.zeta1, trace.header.zeta1);
  EXPECT_EQ(back.header.clip_q, trace.header.clip_q);
  EXPECT_EQ(back.header.alpha_gate, trace.header.alpha_gate);
  EXPECT_EQ(back.header.schedule_points, trace.header.schedule_points);
  EXPECT_EQ(back.header.q_init, trace.header.q_init);
  EXPECT_EQ(back.header.d_avg, trace.header.d_avg);
  EXPECT_EQ(back.header.behavior_ids, trace.header.behavior_ids);
  EXPECT_EQ(back.header.mdp_ref, trace.header.mdp_ref);
  EXPECT_TRUE(back.visits == trace.visits);
  EXPECT_TRUE(back.snapshots == trace.snapshots);

  // saving the reloaded trace reproduces the file byte for byte
  std::string path2 = testing::TempDir() + "trace_roundtrip2.flcqt";
  save_trace(path2, back);
  EXPECT_EQ(file_bytes(path), file_bytes(path2));
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST(TraceIo, ScheduleAccessorRebuildsThePointList) {
  RunTrace trace = make_trace(2);
  SyncSchedule s = trace.schedule();
  EXPECT_EQ(s.K, trace.header.K);
  EXPECT_EQ(s.points, trace.header.schedule_points);
}

TEST(TraceIo, CorruptFilesReportTheByteOffset) {
  RunTrace trace = make_trace(3);
  std::string path = testing::TempDir() + "trace_corrupt.flcqt";
  save_trace(path, trace);
  std::string bytes = file_bytes(path);

  {
    std::string mangled = bytes;
    mangled[2] = 'x';
    std::ofstream out(path, std::ios::binary);
    out.write(mangled.data(), static_cast<std::streamsize>(mangled.size()));
  }
  try {
    load_trace(path);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos) << e.what();
  }

  {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
  }
  try {
    load_trace(path);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos) << e.what();
  }

  {
    // the first record tag sits right after magic + header length + header
    uint32_t header_len = 0;
    for (int i = 0; i < 4; ++i)
      header_len |= static_cast<uint32_t>(static_cast<unsigned char>(bytes[6 + i])) << (8 * i);
    size_t pos = 10 + header_len;
    ASSERT_LT(pos, bytes.size());
    ASSERT_EQ(bytes[pos], '\x01');
    std::string mangled = bytes;
    mangled[pos] = '\x07';
    std::ofstream out(path, std::ios::binary);
    out.write(mangled.data(), static_cast<std::streamsize>(mangled.size()));
  }
  try {
    load_trace(path);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("tag"), std::string::npos) << msg;
    EXPECT_NE(msg.find("byte offset"), std::string::npos) << msg;
  }
  std::remove(path.c_str());
}

TEST(TraceIo, UnsupportedInitializationIsRejected) {
  RunTrace trace = make_trace(4);
  trace.header.q_init = "ones";
  std::string path = testing::TempDir() + "trace_qinit.flcqt";
  save_trace(path, trace);
  EXPECT_THROW(load_trace(path), ValidationError);
  std::remove(path.c_str());
}
