#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "roofline/core.hpp"
#include "roofline/error.hpp"

using namespace roofline;

namespace {

PlatformProfile profile(double pi, double beta) {
  PlatformProfile p;
  p.scenario.kind = ScenarioKind::SingleSocket;
  p.peak_flops_gps = pi;
  p.peak_bandwidth_gbps = beta;
  p.label = "test";
  return p;
}

KernelMeasurement measurement(const std::string& name, std::uint64_t w, std::uint64_t q, double r) {
  KernelMeasurement m;
  m.kernel_name = name;
  m.work_flops = w;
  m.traffic_bytes = q;
  m.runtime_seconds = r;
  m.repetitions = 10;
  m.scenario.kind = ScenarioKind::SingleSocket;
  return m;
}

}  // namespace

TEST(Intensity, RatioOfWorkAndTraffic) {
  EXPECT_DOUBLE_EQ(arithmetic_intensity(2097152.0, 12582912.0), 1.0 / 6.0);
  EXPECT_DOUBLE_EQ(arithmetic_intensity(0.0, 4096.0), 0.0);
}

TEST(Intensity, ZeroTrafficIsAnError) {
  EXPECT_THROW(arithmetic_intensity(10.0, 0.0), Error);
}

TEST(Roof, RidgeAndPiecewiseCeiling) {
  const auto p = profile(1000.0, 100.0);
  EXPECT_DOUBLE_EQ(ridge_point(p), 10.0);
  EXPECT_DOUBLE_EQ(attainable_performance(p, 1.0), 100.0);
  EXPECT_DOUBLE_EQ(attainable_performance(p, 10.0), 1000.0);
  EXPECT_DOUBLE_EQ(attainable_performance(p, 1e6), 1000.0);
  EXPECT_DOUBLE_EQ(attainable_performance(p, 0.0), 0.0);
}

TEST(Roof, TieAtRidgeIsComputeBound) {
  const auto p = profile(1000.0, 100.0);
  EXPECT_EQ(classify_bound(p, 10.0), Bound::ComputeBound);
  EXPECT_EQ(classify_bound(p, std::nextafter(10.0, 0.0)), Bound::MemoryBound);
  EXPECT_DOUBLE_EQ(attainable_rc_percent(p, 10.0), 100.0);
}

TEST(Roof, NegativeOrNanIntensityRejected) {
  const auto p = profile(1000.0, 100.0);
  EXPECT_THROW(attainable_performance(p, -1.0), Error);
  EXPECT_THROW(attainable_performance(p, std::nan("")), Error);
}

TEST(Roof, RandomTriplesMatchMinFormula) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> lg(-3.0, 4.0);
  for (int i = 0; i < 2000; ++i) {
    const double pi = std::pow(10.0, lg(rng)), beta = std::pow(10.0, lg(rng));
    const double in = std::pow(10.0, lg(rng));
    const auto p = profile(pi, beta);
    ASSERT_EQ(attainable_performance(p, in), std::min(pi, in * beta));
    const double rc = attainable_rc_percent(p, in);
    ASSERT_GE(rc, 0.0);
    ASSERT_LE(rc, 100.0);
    ASSERT_EQ(classify_bound(p, in) == Bound::MemoryBound, rc < 100.0);
  }
}

TEST(Profile, ValidateRejectsNonPositivePeaks) {
  EXPECT_THROW(profile(0.0, 10.0).validate(), Error);
  EXPECT_THROW(profile(10.0, -1.0).validate(), Error);
  auto p = profile(1.0, 1.0);
  p.label.clear();
  EXPECT_THROW(p.validate(), Error);
  EXPECT_NO_THROW(profile(1.0, 1.0).validate());
}

TEST(RuntimeCompute, PercentOfPeak) {
  const auto p = profile(100.0, 10.0);
  // 1e9 FLOP in 20 ms = 50 GFLOP/s = 50 % of 100.
  const auto m = measurement("k", 1000000000, 1000, 0.02);
  EXPECT_DOUBLE_EQ(attained_gflops(m), 50.0);
  EXPECT_DOUBLE_EQ(runtime_compute_percent(m, p), 50.0);
}

TEST(RuntimeCompute, AttainableLabelFormatting) {
  // Roof at I*beta = 15.82 % of pi.
  const auto p = profile(100.0, 1.0);
  EXPECT_EQ(format_percent(attainable_rc_percent(p, 15.82)), "15.82");
  EXPECT_EQ(format_percent(attainable_rc_percent(p, 1000.0)), "100.00");
  EXPECT_EQ(format_percent(86.724), "86.72");
}

TEST(ExecutionTime, RelativeToBaseline) {
  std::vector<KernelMeasurement> group{measurement("direct", 1, 1, 2.0),
                                       measurement("winograd", 1, 1, 1.12)};
  auto et = relative_execution_time(group, "direct");
  EXPECT_EQ(et.at("direct"), 100.0);
  EXPECT_EQ(format_percent(et.at("winograd")), "56.00");
}

TEST(ExecutionTime, MissingBaselineNamesValidKernels) {
  std::vector<KernelMeasurement> group{measurement("a", 1, 1, 1.0), measurement("b", 1, 1, 1.0)};
  try {
    relative_execution_time(group, "zzz");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("a, b"), std::string::npos) << e.what();
  }
}

TEST(ExecutionTime, ScaleInvariant) {
  std::vector<KernelMeasurement> g1{measurement("a", 1, 1, 3.0), measurement("b", 1, 1, 1.7)};
  auto g2 = g1;
  for (auto& m : g2) m.runtime_seconds *= 8.0;  // power of two keeps it exact
  EXPECT_EQ(relative_execution_time(g1, "a"), relative_execution_time(g2, "a"));
}

TEST(Point, CombinesEverything) {
  const auto p = profile(100.0, 10.0);
  // W = 4e8, Q = 1e8 -> I = 4, roof 40; 20 GFLOP/s attained.
  const auto m = measurement("k", 400000000, 100000000, 0.02);
  const auto pt = make_point(m, p, 56.0);
  EXPECT_DOUBLE_EQ(pt.intensity_flops_per_byte, 4.0);
  EXPECT_DOUBLE_EQ(pt.attainable_gflops, 40.0);
  EXPECT_DOUBLE_EQ(pt.attained_gflops, 20.0);
  EXPECT_EQ(pt.bound, Bound::MemoryBound);
  EXPECT_DOUBLE_EQ(pt.rc_percent, 20.0);
  EXPECT_DOUBLE_EQ(pt.attainable_rc_percent, 40.0);
  EXPECT_EQ(pt.et_percent, 56.0);
  EXPECT_FALSE(pt.above_roof);
}

TEST(Point, AboveRoofNeedsMoreThanFivePercent) {
  const auto p = profile(100.0, 10.0);
  // Roof at I = 4 is 40 GFLOP/s; the flag starts above 42.
  auto m = measurement("k", 400000000, 100000000, 0.0096);  // 41.67 GFLOP/s
  EXPECT_FALSE(make_point(m, p).above_roof);
  m.runtime_seconds = 0.00952;  // 42.02 GFLOP/s
  EXPECT_TRUE(make_point(m, p).above_roof);
}

TEST(Enums, RoundTripText) {
  EXPECT_EQ(parse_cache_kind(to_string(CacheKind::Warm)), CacheKind::Warm);
  EXPECT_EQ(parse_cache_kind("cold"), CacheKind::Cold);
  EXPECT_THROW(parse_cache_kind("lukewarm"), Error);
}
