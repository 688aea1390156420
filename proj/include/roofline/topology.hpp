#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace roofline {

enum class ScenarioKind { SingleThread, SingleSocket, TwoSockets };

std::string_view to_string(ScenarioKind kind);
/// Accepts the CLI spellings: single-thread, single-socket, two-sockets.
ScenarioKind parse_scenario_kind(std::string_view text);

/// Resource envelope of one measurement: which logical CPUs may run and
/// which memory nodes may hold allocations.
struct Scenario {
  ScenarioKind kind = ScenarioKind::SingleThread;
  std::vector<int> cpu_set;
  std::vector<int> mem_nodes;

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

struct CpuLocation {
  int socket = 0;
  int core = 0;

  friend bool operator==(const CpuLocation&, const CpuLocation&) = default;
};

struct MachineTopology {
  std::map<int, CpuLocation> cpus;             // logical cpu -> (socket, core)
  std::map<int, std::vector<int>> node_cpus;   // memory node -> logical cpus
  std::map<int, std::uint64_t> llc_bytes;      // socket -> last-level cache size
  std::vector<std::string> warnings;

  int sockets() const;
  int logical_cpus() const { return static_cast<int>(cpus.size()); }
  int cores() const;
  std::vector<int> socket_cpus(int socket) const;
  /// Node whose cpu list is contained in the given socket; throws if none.
  int node_of_socket(int socket) const;
  std::uint64_t llc_bytes_of(int socket) const;
};

inline constexpr std::uint64_t kFallbackLlcBytes = 28ull << 20;

/// Parses an OS topology tree rooted at `root` (normally /sys/devices/system;
/// fixture snapshots use the same layout: cpu/cpuN/topology/...,
/// cpu/cpuN/cache/indexK/{level,size}, node/nodeN/cpulist).
MachineTopology discover(const std::filesystem::path& root = "/sys/devices/system");

struct ScenarioOptions {
  int socket = 0;
  bool one_thread_per_core = false;
};

/// Builds a scenario that honours the kind's definition or throws a
/// diagnostic; never returns a scenario that means something else.
Scenario make_scenario(const MachineTopology& topo, ScenarioKind kind,
                       const ScenarioOptions& options = {});

/// Parses the kernel's list format, e.g. "0-3,8,10-11".
std::vector<int> parse_cpu_list(std::string_view text);

/// Pins the calling thread. Returns the affinity read back from the OS,
/// which must equal {cpu}.
std::vector<int> pin_current_thread(int cpu);

/// Logical CPU set the calling thread may currently run on.
std::vector<int> current_affinity();

/// Thread placement seam: the Linux implementation talks to the
/// scheduler, the mock one only records requests.
class Affinity {
 public:
  virtual ~Affinity() = default;
  virtual std::vector<int> pin(int cpu) = 0;
  virtual std::vector<int> readback() = 0;
};

class LinuxAffinity final : public Affinity {
 public:
  std::vector<int> pin(int cpu) override { return pin_current_thread(cpu); }
  std::vector<int> readback() override { return current_affinity(); }
};

class MockAffinity final : public Affinity {
 public:
  std::vector<int> pin(int cpu) override;
  std::vector<int> readback() override;

 private:
  static thread_local int pinned_;
};

/// Anonymous mapping whose pages are bound to one memory node.
class NodeBuffer {
 public:
  NodeBuffer() = default;
  NodeBuffer(void* data, std::size_t bytes, int node, bool owned);
  NodeBuffer(NodeBuffer&& other) noexcept;
  NodeBuffer& operator=(NodeBuffer&& other) noexcept;
  NodeBuffer(const NodeBuffer&) = delete;
  NodeBuffer& operator=(const NodeBuffer&) = delete;
  ~NodeBuffer();

  std::byte* data() const { return static_cast<std::byte*>(data_); }
  std::size_t size() const { return bytes_; }
  int node() const { return node_; }
  bool mock() const { return !owned_; }

 private:
  void release();

  void* data_ = nullptr;
  std::size_t bytes_ = 0;
  int node_ = -1;
  bool owned_ = false;
};

/// Strictly binds a fresh allocation to `node` and faults every page in.
/// Fails instead of spilling to another node.
NodeBuffer bind_allocation(const MachineTopology& topo, int node, std::size_t bytes);

/// Tag-only handle for the mock backend; no memory is mapped.
NodeBuffer mock_allocation(const MachineTopology& topo, int node, std::size_t bytes);

/// Fraction of sampled pages that the OS reports resident on `node`.
double sampled_page_residency(const NodeBuffer& buffer, int node,
                              std::size_t max_samples = 256);

}  // namespace roofline
