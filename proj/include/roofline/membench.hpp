#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "roofline/codegen.hpp"
#include "roofline/topology.hpp"

namespace roofline {

enum class BandwidthMethod { LibFill, LibCopy, NtFill };

inline constexpr BandwidthMethod kAllBandwidthMethods[] = {
    BandwidthMethod::LibFill, BandwidthMethod::LibCopy, BandwidthMethod::NtFill};

std::string_view to_string(BandwidthMethod method);
BandwidthMethod parse_bandwidth_method(std::string_view text);

inline constexpr std::size_t kDefaultProbeBytes = std::size_t{1} << 29;  // 0.5 GiB
inline constexpr std::size_t kMinProbeBytes = std::size_t{64} << 20;

/// Marker for node_binding meaning "interleave over the scenario's nodes".
inline constexpr int kInterleaved = -1;

struct BandwidthProbe {
  BandwidthMethod method = BandwidthMethod::NtFill;
  std::size_t buffer_bytes = kDefaultProbeBytes;
  int threads = 1;
  int node_binding = 0;

  void validate() const;
};

/// Bytes one pass over the buffer moves: fill = buffer, copy = 2 x buffer
/// (read + write), streaming fill = buffer (no read-for-ownership).
std::uint64_t bytes_per_pass(BandwidthMethod method, std::size_t buffer_bytes);

struct BandwidthResult {
  BandwidthProbe probe;
  double gbps = 0.0;
  std::uint64_t bytes_accounted = 0;
  double elapsed_seconds = 0.0;
  int passes = 0;
};

struct ProbeContext {
  ScenarioKind scenario = ScenarioKind::SingleThread;
  std::vector<int> cpus;  // workers of this probe
  int node = 0;
};

struct ProbeSchedule {
  int min_passes = 3;
  double min_total_seconds = 1.0;
};

/// Executes and times one pass; returns its wall time in seconds.
using PassRunner =
    std::function<double(const BandwidthProbe&, const ProbeContext&, std::uint64_t bytes)>;

/// Repeats passes until both schedule limits are met and reports the
/// fastest pass.
BandwidthResult run_probe(const BandwidthProbe& probe, const ProbeContext& ctx,
                          const PassRunner& runner, const ProbeSchedule& schedule = {});

struct PeakBandwidth {
  double gbps = 0.0;
  BandwidthMethod method = BandwidthMethod::LibFill;
  std::vector<BandwidthResult> results;
  std::vector<std::string> warnings;
};

/// Max over the given results; ties go to the earliest method in
/// declaration order (LibFill, LibCopy, NtFill).
PeakBandwidth select_peak(std::vector<BandwidthResult> results);

/// Runs all three methods for a scenario (single node) and selects the
/// maximum. A failing probe is skipped with a warning; all failing throws.
PeakBandwidth peak_bandwidth(const Scenario& scenario, std::size_t buffer_bytes,
                             const PassRunner& runner, const ProbeSchedule& schedule = {});

/// Per-node result of the two-socket protocol plus the reported sum.
struct TwoSocketBandwidth {
  double gbps = 0.0;
  std::vector<PeakBandwidth> per_node;
};

/// Two independent probe groups, one bound to each node, run concurrently
/// from a shared start barrier; the platform peak is the sum of the two
/// per-node peaks.
TwoSocketBandwidth two_socket_bandwidth(const MachineTopology& topo, const Scenario& scenario,
                                        std::size_t buffer_bytes, const PassRunner& runner,
                                        const ProbeSchedule& schedule = {});

/// Real memory: node-bound buffers, pinned workers, affinity readback each
/// pass, libc memset/memcpy and a generated non-temporal store loop.
class HardwarePassRunner {
 public:
  HardwarePassRunner(const MachineTopology& topo, VectorIsa isa);
  double operator()(const BandwidthProbe& probe, const ProbeContext& ctx, std::uint64_t bytes);

  struct BufferCache;

 private:
  const MachineTopology& topo_;
  VectorIsa isa_;
  std::shared_ptr<ExecutableCode> nt_fill_;
  std::shared_ptr<BufferCache> cache_;  // node-bound buffers, reused across passes
};

struct NodeBuffers {
  NodeBuffer dst;
  NodeBuffer src;
};

}  // namespace roofline
