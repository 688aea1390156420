#include "roofline/membench.hpp"

#include <sched.h>

#include <algorithm>
#include <barrier>
#include <chrono>
#include <cstring>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include "roofline/error.hpp"

namespace roofline {

std::string_view to_string(BandwidthMethod method) {
  switch (method) {
    case BandwidthMethod::LibFill: return "LibFill";
    case BandwidthMethod::LibCopy: return "LibCopy";
    case BandwidthMethod::NtFill: return "NtFill";
  }
  return "?";
}

BandwidthMethod parse_bandwidth_method(std::string_view text) {
  for (auto m : kAllBandwidthMethods) {
    if (to_string(m) == text) return m;
  }
  throw Error("unknown bandwidth method '" + std::string(text) + "'");
}

void BandwidthProbe::validate() const {
  if (buffer_bytes < kMinProbeBytes) {
    throw Error("probe buffer of " + std::to_string(buffer_bytes) +
                " bytes is below the 64 MiB minimum");
  }
  if (threads < 1) throw Error("probe needs at least one thread");
}

std::uint64_t bytes_per_pass(BandwidthMethod method, std::size_t buffer_bytes) {
  const auto b = static_cast<std::uint64_t>(buffer_bytes);
  return method == BandwidthMethod::LibCopy ? 2 * b : b;
}

BandwidthResult run_probe(const BandwidthProbe& probe, const ProbeContext& ctx,
                          const PassRunner& runner, const ProbeSchedule& schedule) {
  probe.validate();
  const std::uint64_t bytes = bytes_per_pass(probe.method, probe.buffer_bytes);
  double best = 0.0;
  double total = 0.0;
  int passes = 0;
  while (passes < schedule.min_passes || total < schedule.min_total_seconds) {
    const double seconds = runner(probe, ctx, bytes);
    if (!(seconds > 0.0)) throw Error("bandwidth pass reported a non-positive duration");
    best = passes == 0 ? seconds : std::min(best, seconds);
    total += seconds;
    ++passes;
  }
  BandwidthResult r;
  r.probe = probe;
  r.bytes_accounted = bytes;
  r.elapsed_seconds = best;
  r.gbps = static_cast<double>(bytes) / best / 1e9;
  r.passes = passes;
  return r;
}

PeakBandwidth select_peak(std::vector<BandwidthResult> results) {
  if (results.empty()) throw Error("no bandwidth results to select from");
  std::stable_sort(results.begin(), results.end(), [](const auto& a, const auto& b) {
    return static_cast<int>(a.probe.method) < static_cast<int>(b.probe.method);
  });
  PeakBandwidth peak;
  for (const auto& r : results) {
    if (r.gbps > peak.gbps) {
      peak.gbps = r.gbps;
      peak.method = r.probe.method;
    }
  }
  peak.results = std::move(results);
  return peak;
}

namespace {

PeakBandwidth probe_all(const ProbeContext& ctx, std::size_t buffer_bytes,
                        const PassRunner& runner, const ProbeSchedule& schedule,
                        std::barrier<>* start) {
  std::vector<BandwidthResult> results;
  std::vector<std::string> warnings;
  for (auto method : kAllBandwidthMethods) {
    BandwidthProbe probe;
    probe.method = method;
    probe.buffer_bytes = buffer_bytes;
    probe.threads = static_cast<int>(ctx.cpus.size());
    probe.node_binding = ctx.node;
    if (start != nullptr) start->arrive_and_wait();
    try {
      results.push_back(run_probe(probe, ctx, runner, schedule));
    } catch (const Error& e) {
      warnings.push_back(std::string(to_string(method)) + " probe failed on node " +
                         std::to_string(ctx.node) + ": " + e.what());
    }
  }
  if (results.empty()) {
    throw Error("all bandwidth probes failed on node " + std::to_string(ctx.node) +
                (warnings.empty() ? std::string() : ": " + warnings.front()));
  }
  auto peak = select_peak(std::move(results));
  peak.warnings = std::move(warnings);
  if (ctx.scenario == ScenarioKind::SingleThread && peak.method == BandwidthMethod::NtFill) {
    peak.warnings.push_back(
        "single-thread peak bandwidth won by NtFill; library fill/copy usually win here");
  }
  if (ctx.scenario == ScenarioKind::SingleThread) {
    peak.warnings.push_back(
        "single-thread bandwidth may understate prefetcher-assisted streams");
  }
  return peak;
}

}  // namespace

PeakBandwidth peak_bandwidth(const Scenario& scenario, std::size_t buffer_bytes,
                             const PassRunner& runner, const ProbeSchedule& schedule) {
  if (scenario.mem_nodes.size() != 1) {
    throw Error("peak_bandwidth expects a single-node scenario; use two_socket_bandwidth");
  }
  ProbeContext ctx{scenario.kind, scenario.cpu_set, scenario.mem_nodes.front()};
  return probe_all(ctx, buffer_bytes, runner, schedule, nullptr);
}

TwoSocketBandwidth two_socket_bandwidth(const MachineTopology& topo, const Scenario& scenario,
                                        std::size_t buffer_bytes, const PassRunner& runner,
                                        const ProbeSchedule& schedule) {
  if (scenario.mem_nodes.size() < 2 || topo.node_cpus.size() < 2) {
    throw Error("two-socket bandwidth needs 2 memory nodes; this machine has " +
                std::to_string(topo.node_cpus.size()) + ", use the single-socket scenario");
  }
  std::vector<ProbeContext> groups;
  for (int node : scenario.mem_nodes) {
    ProbeContext ctx{ScenarioKind::TwoSockets, {}, node};
    const auto& local = topo.node_cpus.at(node);
    for (int cpu : scenario.cpu_set) {
      if (std::find(local.begin(), local.end(), cpu) != local.end()) ctx.cpus.push_back(cpu);
    }
    if (ctx.cpus.empty()) throw Error("node " + std::to_string(node) + " has no scenario CPUs");
    groups.push_back(std::move(ctx));
  }

  TwoSocketBandwidth out;
  out.per_node.resize(groups.size());
  std::vector<std::exception_ptr> errors(groups.size());
  std::barrier start(static_cast<std::ptrdiff_t>(groups.size()));
  std::vector<std::thread> threads;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    threads.emplace_back([&, g] {
      try {
        out.per_node[g] = probe_all(groups[g], buffer_bytes, runner, schedule, &start);
      } catch (...) {
        errors[g] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (const auto& node : out.per_node) out.gbps += node.gbps;
  return out;
}

// ---------------------------------------------------------------------------

struct HardwarePassRunner::BufferCache {
  std::mutex mutex;
  std::map<std::pair<int, std::size_t>, std::shared_ptr<NodeBuffers>> buffers;
};

HardwarePassRunner::HardwarePassRunner(const MachineTopology& topo, VectorIsa isa)
    : topo_(topo), isa_(isa), cache_(std::make_shared<BufferCache>()) {
  nt_fill_ = std::make_shared<ExecutableCode>(assemble_nt_fill(isa_));
}

namespace {

std::shared_ptr<NodeBuffers> buffers_for(HardwarePassRunner::BufferCache& cache,
                                         const MachineTopology& topo, int node, std::size_t bytes,
                                         bool need_src) {
  std::shared_ptr<NodeBuffers> b;
  {
    std::lock_guard lock(cache.mutex);
    auto& slot = cache.buffers[{node, bytes}];
    if (!slot) slot = std::make_shared<NodeBuffers>();
    b = slot;
  }
  // Buffers are per node; the two socket groups never share one.
  if (b->dst.size() == 0) b->dst = bind_allocation(topo, node, bytes);
  if (need_src && b->src.size() == 0) b->src = bind_allocation(topo, node, bytes);
  return b;
}

double seconds_now() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

double HardwarePassRunner::operator()(const BandwidthProbe& probe, const ProbeContext& ctx,
                                      std::uint64_t) {
  const bool copy = probe.method == BandwidthMethod::LibCopy;
  auto buffers = buffers_for(*cache_, topo_, ctx.node, probe.buffer_bytes, copy);

  const std::size_t n = ctx.cpus.size();
  const std::size_t block = nt_fill_block_bytes(isa_);
  const std::size_t blocks = probe.buffer_bytes / block;
  std::vector<double> t0(n), t1(n);
  std::vector<std::exception_ptr> errors(n);
  std::barrier start(static_cast<std::ptrdiff_t>(n));
  auto nt_fill = nt_fill_->as<void (*)(void*, std::uint64_t)>();

  auto worker = [&](std::size_t t) {
    try {
      pin_current_thread(ctx.cpus[t]);
    } catch (...) {
      errors[t] = std::current_exception();
    }
    const std::size_t first = blocks * t / n;
    const std::size_t last = blocks * (t + 1) / n;
    std::byte* dst = buffers->dst.data() + first * block;
    const std::size_t len = (last - first) * block;
    start.arrive_and_wait();
    if (errors[t]) return;
    t0[t] = seconds_now();
    switch (probe.method) {
      case BandwidthMethod::LibFill: std::memset(dst, 1, len); break;
      case BandwidthMethod::LibCopy:
        std::memcpy(dst, buffers->src.data() + first * block, len);
        break;
      case BandwidthMethod::NtFill: nt_fill(dst, last - first); break;
    }
    t1[t] = seconds_now();
    const int cpu = sched_getcpu();
    if (std::find(ctx.cpus.begin(), ctx.cpus.end(), cpu) == ctx.cpus.end()) {
      errors[t] = std::make_exception_ptr(
          Error("bandwidth worker migrated to cpu " + std::to_string(cpu) +
                " outside the scenario"));
    }
  };

  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < n; ++t) threads.emplace_back(worker, t);
  for (auto& th : threads) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return *std::max_element(t1.begin(), t1.end()) - *std::min_element(t0.begin(), t0.end());
}

}  // namespace roofline
