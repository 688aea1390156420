// Acceptance run: one PASS/FAIL/SKIP line per criterion. Hardware criteria
// need FP_ARITH and uncore IMC counters; without them they SKIP with the
// backend's own diagnostic.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "roofline/cli.hpp"
#include "roofline/codegen.hpp"
#include "roofline/core.hpp"
#include "roofline/error.hpp"
#include "roofline/harness.hpp"
#include "roofline/kernels.hpp"
#include "roofline/membench.hpp"
#include "roofline/pmu.hpp"
#include "roofline/topology.hpp"

using namespace roofline;
namespace fs = std::filesystem;

namespace {

enum class Verdict { Pass, Fail, Skip };

struct Outcome {
  Verdict verdict;
  std::string detail;
};

Outcome pass(std::string d) { return {Verdict::Pass, std::move(d)}; }
Outcome fail(std::string d) { return {Verdict::Fail, std::move(d)}; }
Outcome skip(std::string d) { return {Verdict::Skip, std::move(d)}; }

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

const fs::path kData = ROOFLINE_TEST_DATA;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PlatformProfile profile(double pi, double beta) {
  PlatformProfile p;
  p.peak_flops_gps = pi;
  p.peak_bandwidth_gbps = beta;
  p.label = "x";
  return p;
}

// ---------------------------------------------------------------------------

Outcome ac1_roofline_math() {
  std::mt19937_64 rng(20200601);
  std::uniform_real_distribution<double> lg(-3.0, 5.0);
  for (int i = 0; i < 1000; ++i) {
    const double pi = std::pow(10.0, lg(rng)), beta = std::pow(10.0, lg(rng)), in = std::pow(10.0, lg(rng));
    const auto p = profile(pi, beta);
    if (attainable_performance(p, in) != std::min(pi, in * beta)) return fail("P != min(pi, I*beta)");
    if (attainable_performance(p, ridge_point(p)) != pi) return fail("P(ridge) != pi");
    const double rc = attainable_rc_percent(p, in);
    if (!(rc >= 0.0 && rc <= 100.0)) return fail("attainable RC outside [0,100]");
    if ((classify_bound(p, in) == Bound::MemoryBound) != (rc < 100.0)) return fail("classify vs rc<100");

    // ET under a power-of-two rescale of every runtime.
    std::vector<KernelMeasurement> g(3);
    for (int k = 0; k < 3; ++k) {
      g[k].kernel_name = "k" + std::to_string(k);
      g[k].runtime_seconds = std::pow(10.0, lg(rng));
    }
    auto scaled = g;
    const double f = std::ldexp(1.0, static_cast<int>(rng() % 20) - 10);
    for (auto& m : scaled) m.runtime_seconds *= f;
    if (relative_execution_time(g, "k0") != relative_execution_time(scaled, "k0")) {
      return fail("ET not scale invariant");
    }
  }
  return pass("1000 random (pi, beta, I) triples");
}

Outcome ac2_flop_conversion() {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::uint64_t> d(0, std::uint64_t{1} << 40);
  auto random_sample = [&] {
    CounterSample s;
    s.scalar_single = d(rng);
    s.packed_128 = d(rng);
    s.packed_256 = d(rng);
    s.packed_512 = d(rng);
    return s;
  };
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_sample(), b = random_sample();
    const std::uint64_t oracle = a.scalar_single + 4 * a.packed_128 + 8 * a.packed_256 + 16 * a.packed_512;
    if (flops_from_sample(a) != oracle) return fail("weighted sum mismatch");
    if (flops_from_sample(a + b) != flops_from_sample(a) + flops_from_sample(b)) return fail("not linear");
  }
  return pass("1000 random samples, 1/4/8/16 weights, linear");
}

Outcome ac3_fma_factor_two(HardwareCounterBackend& hw) {
  if ((hw.available() & kFpCounters) != kFpCounters) {
    return skip(hw.diagnostics().empty() ? std::string("FP_ARITH counters unavailable") : hw.diagnostics().front());
  }
  const auto host = probe_host_features();
  const VectorIsa isa = detect_isa(host);
  if (isa.level == IsaLevel::Scalar) return skip("host has no FMA vector extension");
  ComputeBenchConfig cfg;
  cfg.n_accumulators = 10;
  cfg.unroll = 40;
  cfg.inner_iterations = 25000;  // N = 1e6
  const double n = 1e6;
  auto packed = [&](const CounterSample& s) {
    return static_cast<double>(isa.level == IsaLevel::Avx512   ? s.packed_512
                               : isa.level == IsaLevel::Avx256 ? s.packed_256
                                                               : s.packed_128);
  };
  pin_current_thread(current_affinity().front());
  const auto init = hw.scoped_sample([] {});
  const auto fma = emit_fma_stream(isa, cfg, StreamOp::Fma);
  const auto add = emit_fma_stream(isa, cfg, StreamOp::Add);
  const double fma_delta = packed(subtract_overhead(hw.scoped_sample([&] { fma(); }), init).sample);
  const double add_delta = packed(subtract_overhead(hw.scoped_sample([&] { add(); }), init).sample);
  const std::string d = fmt("FMA delta %.0f (expect %.0f), add delta %.0f", fma_delta, 2 * n, add_delta);
  if (std::abs(fma_delta - 2 * n) > 0.01 * 2 * n) return fail(d);
  if (std::abs(add_delta - n) > 0.01 * n) return fail(d);
  return pass(d);
}

RunPlan single_thread_plan(const std::string& kernel, std::size_t n, CacheKind cache, int reps = 10) {
  RunPlan p;
  p.scenario.kind = ScenarioKind::SingleThread;
  p.scenario.cpu_set = {current_affinity().front()};
  p.scenario.mem_nodes = {0};
  p.cache = cache == CacheKind::Cold ? CacheProtocol{} : CacheProtocol::warm();
  p.repetitions = reps;
  p.kernel_name = kernel;
  p.elements = n;
  return p;
}

Outcome ac4_sum_work(HardwareCounterBackend& hw, std::string& mock_note) {
  const std::size_t n = std::size_t{1} << 20;
  {
    CounterSample init, full;
    init.scalar_single = 12;
    full.scalar_single = 12 + (n - 1);
    std::vector<CounterSample> script{init};
    for (int r = 0; r < 10; ++r) script.push_back(full);
    MockCounterBackend mock(script);
    ScriptedRegionTimer timer({{"sum_reduction", 0.001}});
    MockAffinity affinity;
    HarnessOptions o;
    o.simulate_clobber = true;
    Harness h(mock, timer, affinity, o);
    auto k = make_kernel("sum_reduction");
    const auto m = h.measure(*k, single_thread_plan("sum_reduction", n, CacheKind::Cold));
    if (m.work_flops != n - 1) return fail("mock W " + std::to_string(m.work_flops) + " != n-1");
    mock_note = "mock W = n-1 = " + std::to_string(m.work_flops) + " exact";
  }
  if ((hw.available() & kFpCounters) != kFpCounters) {
    return skip(mock_note + "; hardware variant skipped: FP_ARITH counters unavailable");
  }
  SteadyRegionTimer timer;
  LinuxAffinity affinity;
  Harness h(hw, timer, affinity, HarnessOptions{discover().llc_bytes_of(0), false, std::nullopt});
  auto k = make_kernel("sum_reduction");
  const auto m = h.measure(*k, single_thread_plan("sum_reduction", n, CacheKind::Cold));
  const double err = std::abs(static_cast<double>(m.work_flops) - (n - 1.0)) / (n - 1.0);
  const std::string d = mock_note + fmt("; hardware W %.0f, error %.3f%%", static_cast<double>(m.work_flops), 100 * err);
  return err <= 0.02 ? pass(d) : fail(d);
}

Outcome ac5_cold_traffic(HardwareCounterBackend& hw) {
  // Flag half: no counters needed.
  CounterSample zero;
  ScriptedRegionTimer timer({{"sum_reduction", 0.001}});
  MockAffinity mock_affinity;
  std::vector<CounterSample> script(22, zero);
  MockCounterBackend mock(script);
  HarnessOptions o;
  o.simulate_clobber = true;
  Harness mh(mock, timer, mock_affinity, o);
  auto small = make_kernel("sum_reduction");
  auto big = make_kernel("sum_reduction");
  const bool small_flag =
      mh.measure(*small, single_thread_plan("sum_reduction", 65536, CacheKind::Cold)).traffic_unreliable;
  const bool big_flag =
      mh.measure(*big, single_thread_plan("sum_reduction", 262144, CacheKind::Cold)).traffic_unreliable;
  if (!small_flag || big_flag) return fail("unreliability flag wrong for 256 KiB / 1 MiB kernels");
  const std::string flag_note = "256 KiB kernel flagged, 1 MiB not";

  if ((hw.available() & kAllCounters) != kAllCounters) {
    return skip(flag_note + "; 64 MiB traffic check skipped: " +
                ((hw.available() & kImcCounters) ? "FP_ARITH" : "uncore IMC") + " counters unavailable");
  }
  const auto topo = discover();
  SteadyRegionTimer steady;
  LinuxAffinity affinity;
  HarnessOptions ho{topo.llc_bytes_of(0), false, sample_idle_baseline(hw, 0.25, [](double s) {
                      std::this_thread::sleep_for(std::chrono::duration<double>(s));
                    })};
  Harness h(hw, steady, affinity, ho);
  auto k = make_kernel("sum_reduction");
  const std::size_t n = std::size_t{16} << 20;  // 64 MiB of floats
  const auto m = h.measure(*k, single_thread_plan("sum_reduction", n, CacheKind::Cold, 5));
  const double reads =
      64.0 * static_cast<double>(subtract_overhead(m.raw_full, m.raw_init_only).sample.imc_cas_reads);
  const double expect = 64.0 * (1 << 20);
  const std::string d = flag_note + fmt("; cold read traffic %.1f MiB (expect 64)", reads / (1 << 20));
  return std::abs(reads - expect) <= 0.2 * expect ? pass(d) : fail(d);
}

Outcome ac6_warm_vs_cold(HardwareCounterBackend& hw) {
  if ((hw.available() & kImcCounters) != kImcCounters) {
    return skip(hw.diagnostics().empty() ? std::string("uncore IMC counters unavailable") : hw.diagnostics().back());
  }
  const auto topo = discover();
  const std::uint64_t llc = topo.llc_bytes_of(0);
  // Triad footprint 12n bytes: a quarter of the LLC.
  const std::size_t n = static_cast<std::size_t>(llc / 48);
  SteadyRegionTimer timer;
  LinuxAffinity affinity;
  Harness h(hw, timer, affinity, HarnessOptions{llc, false, std::nullopt});
  auto k = make_kernel("triad");
  const auto cold = h.measure(*k, single_thread_plan("triad", n, CacheKind::Cold, 5));
  const auto warm = h.measure(*k, single_thread_plan("triad", n, CacheKind::Warm, 5));
  const std::string d = fmt("warm Q %.0f B, cold Q %.0f B", static_cast<double>(warm.traffic_bytes),
                            static_cast<double>(cold.traffic_bytes));
  return warm.traffic_bytes <= 0.5 * static_cast<double>(cold.traffic_bytes) ? pass(d) : fail(d);
}

Outcome ac7_bandwidth_protocol() {
  const std::size_t buf = kDefaultProbeBytes;
  const ProbeSchedule quick{3, 0.0};
  auto rates = [](double fill, double copy, double nt, double node1) -> PassRunner {
    return [=](const BandwidthProbe& p, const ProbeContext& c, std::uint64_t bytes) {
      const double g = p.method == BandwidthMethod::LibFill   ? fill
                       : p.method == BandwidthMethod::LibCopy ? copy
                                                              : nt;
      return static_cast<double>(bytes) / (g * (c.node == 1 ? node1 : 1.0) * 1e9);
    };
  };
  Scenario ss{ScenarioKind::SingleSocket, {0, 1, 2, 3}, {0}};
  const auto peak = peak_bandwidth(ss, buf, rates(84.0, 88.5, 104.2, 1.0), quick);
  if (peak.method != BandwidthMethod::NtFill || std::abs(peak.gbps - 104.2) > 1e-9) return fail("max-of-three");
  for (const auto& r : peak.results) {
    if (r.gbps > peak.gbps) return fail("a probe exceeds the selected peak");
  }
  if (peak_bandwidth(ss, buf, rates(50, 50, 50, 1.0), quick).method != BandwidthMethod::LibFill) {
    return fail("tie not resolved to LibFill");
  }
  const auto same_time = peak_bandwidth(ss, buf, [](auto&, auto&, std::uint64_t) { return 0.05; }, quick);
  if (same_time.results[1].bytes_accounted != 2 * same_time.results[0].bytes_accounted ||
      same_time.results[1].gbps != 2 * same_time.results[0].gbps) {
    return fail("copy accounting is not 2x fill");
  }
  const auto topo = discover(kData / "topology" / "xeon6248-2s");
  const auto two = two_socket_bandwidth(topo, make_scenario(topo, ScenarioKind::TwoSockets), buf,
                                        rates(84.0, 88.5, 104.2, 0.98), quick);
  if (two.gbps != two.per_node[0].gbps + two.per_node[1].gbps) return fail("two-socket is not the exact sum");
  return pass(fmt("peak %.1f GB/s NtFill, tie -> LibFill, copy 2x fill, two-socket %.3f GB/s = sum", peak.gbps, two.gbps));
}

Outcome ac8_max_reduction(HardwareCounterBackend& hw) {
  if ((hw.available() & kAllCounters) != kAllCounters) {
    std::string why;
    for (const auto& d : hw.diagnostics()) why += (why.empty() ? "" : "; ") + d;
    return skip("needs FP_ARITH and IMC counters: " + why);
  }
  const auto topo = discover();
  SteadyRegionTimer timer;
  LinuxAffinity affinity;
  Harness h(hw, timer, affinity, HarnessOptions{topo.llc_bytes_of(0), false, std::nullopt});
  auto k = make_kernel("max_reduction");
  const std::size_t n = std::size_t{16} << 20;
  const auto m = h.measure(*k, single_thread_plan("max_reduction", n, CacheKind::Cold, 5));
  const double w = static_cast<double>(m.work_flops), q = static_cast<double>(m.traffic_bytes);
  const std::string d = fmt("W %.0f (< %.0f), Q %.0f B", w, 0.01 * n, q) +
                        (m.work_not_measurable ? ", flagged" : ", NOT flagged");
  const bool ok = w < 0.01 * n && std::abs(q - 4.0 * n) <= 0.2 * 4.0 * n && m.work_not_measurable;
  return ok ? pass(d) : fail(d);
}

Outcome ac9_golden_determinism() {
  const auto base = fs::temp_directory_path() / ("roofline-acceptance-" + std::to_string(std::random_device{}()));
  fs::remove_all(base);
  const std::string cfg = (kData / "mock" / "pipeline.config.json").string();
  const std::string script = (kData / "mock" / "xeon6248.json").string();
  for (const char* run : {"a", "b"}) {
    const std::string out = (base / run).string();
    const char* argv[] = {"roofline", "full", "--config", cfg.c_str(), "--mock-script", script.c_str(),
                          "--out", out.c_str()};
    std::ostringstream so, se;
    if (run_cli(8, argv, so, se) != 0) {
      fs::remove_all(base);
      return fail("full mock run failed: " + se.str());
    }
  }
  std::string problem;
  for (const char* f : {"results.json", "summary.txt", "roofline_single-thread.gp", "roofline_single-socket.gp",
                        "roofline_two-sockets.gp"}) {
    const auto a = read_file(base / "a" / f), b = read_file(base / "b" / f);
    if (a.empty()) problem = std::string(f) + " missing";
    else if (a != b) problem = std::string(f) + " differs between runs";
    else if (a != read_file(kData / "golden" / f)) problem = std::string(f) + " differs from golden";
    if (!problem.empty()) break;
  }
  const auto gp = read_file(base / "a" / "roofline_single-socket.gp");
  fs::remove_all(base);
  if (!problem.empty()) return fail(problem);
  for (const char* s : {"compute bound (Peak Runtime Compute: 100%)", "RC - Runtime Compute", "ET - Execution Time"}) {
    if (gp.find(s) == std::string::npos) return fail(std::string("plot lacks \"") + s + "\"");
  }
  return pass("two runs byte-identical and equal to the committed goldens");
}

Outcome ac10_emitted_code() {
  ComputeBenchConfig cfg;
  cfg.n_accumulators = 10;
  cfg.unroll = 30;
  cfg.inner_iterations = 100000;
  const auto s = assemble_stream(VectorIsa{IsaLevel::Avx512}, cfg);
  const auto ref = read_file(kData / "codegen" / "avx512_acc10_unroll30.bin");
  if (std::string(s.bytes.begin(), s.bytes.end()) != ref) return fail("bytes differ from the reference");
  const auto scan = scan_register_hazards(s);
  if (!scan.ok()) return fail(scan.violations.front());
  return pass(std::to_string(s.bytes.size()) + " bytes match; RAW scan clean over " +
              std::to_string(scan.instructions) + " FMAs");
}

}  // namespace

int main() {
  HardwareCounterBackend hw;
  std::string mock_note;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"AC1 roofline math properties", ac1_roofline_math},
      {"AC2 FLOP conversion exactness", ac2_flop_conversion},
      {"AC3 FMA counts twice per instruction", [&] { return ac3_fma_factor_two(hw); }},
      {"AC4 sum reduction work oracle", [&] { return ac4_sum_work(hw, mock_note); }},
      {"AC5 cold traffic oracle and small-footprint flag", [&] { return ac5_cold_traffic(hw); }},
      {"AC6 warm traffic below half of cold", [&] { return ac6_warm_vs_cold(hw); }},
      {"AC7 bandwidth protocol properties", ac7_bandwidth_protocol},
      {"AC8 max reduction blind spot", [&] { return ac8_max_reduction(hw); }},
      {"AC9 determinism and golden files", ac9_golden_determinism},
      {"AC10 emitted code golden and hazard scan", ac10_emitted_code},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const char* tag = o.verdict == Verdict::Pass ? "PASS" : o.verdict == Verdict::Fail ? "FAIL" : "SKIP";
    std::printf("[%s] %s (%.2f s): %s\n", tag, name.c_str(), sec, o.detail.c_str());
    failed += o.verdict == Verdict::Fail;
  }
  return failed == 0 ? 0 : 1;
}
