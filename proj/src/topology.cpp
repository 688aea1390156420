#include "roofline/topology.hpp"

#include <sched.h>
#include <sys/mman.h>
#include <sys/syscall.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "roofline/error.hpp"

namespace roofline {

namespace fs = std::filesystem;

namespace {

std::optional<std::string> read_line(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::string line;
  std::getline(in, line);
  while (!line.empty() && (line.back() == '\n' || line.back() == ' ' || line.back() == '\r')) {
    line.pop_back();
  }
  return line;
}

int parse_int(std::string_view text, const std::string& what) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw Error("cannot parse integer '" + std::string(text) + "' in " + what);
  }
  return value;
}

// Indexed sysfs entries such as cpu12 or node1.
std::optional<int> entry_index(const std::string& name, std::string_view prefix) {
  if (name.size() <= prefix.size() || name.compare(0, prefix.size(), prefix) != 0) {
    return std::nullopt;
  }
  std::string_view digits(name);
  digits.remove_prefix(prefix.size());
  if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return std::nullopt;
  }
  return parse_int(digits, name);
}

// "28160K", "1M", "512"
std::uint64_t parse_cache_size(const std::string& text) {
  if (text.empty()) return 0;
  std::uint64_t scale = 1;
  std::string digits = text;
  switch (text.back()) {
    case 'K': scale = 1ull << 10; digits.pop_back(); break;
    case 'M': scale = 1ull << 20; digits.pop_back(); break;
    case 'G': scale = 1ull << 30; digits.pop_back(); break;
    default: break;
  }
  return static_cast<std::uint64_t>(parse_int(digits, "cache size")) * scale;
}

long sys_mbind(void* addr, unsigned long len, int mode, const unsigned long* nodemask,
               unsigned long maxnode, unsigned flags) {
  return syscall(SYS_mbind, addr, len, mode, nodemask, maxnode, flags);
}

constexpr int kMpolBind = 2;
constexpr unsigned kMpolMfStrict = 1u << 0;

}  // namespace

std::string_view to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::SingleThread: return "single-thread";
    case ScenarioKind::SingleSocket: return "single-socket";
    case ScenarioKind::TwoSockets: return "two-sockets";
  }
  return "unknown";
}

ScenarioKind parse_scenario_kind(std::string_view text) {
  if (text == "single-thread") return ScenarioKind::SingleThread;
  if (text == "single-socket") return ScenarioKind::SingleSocket;
  if (text == "two-sockets") return ScenarioKind::TwoSockets;
  throw Error("unknown scenario '" + std::string(text) +
              "' (expected single-thread, single-socket or two-sockets)");
}

int MachineTopology::sockets() const {
  std::set<int> ids;
  for (const auto& [cpu, loc] : cpus) ids.insert(loc.socket);
  return static_cast<int>(ids.size());
}

int MachineTopology::cores() const {
  std::set<std::pair<int, int>> ids;
  for (const auto& [cpu, loc] : cpus) ids.emplace(loc.socket, loc.core);
  return static_cast<int>(ids.size());
}

std::vector<int> MachineTopology::socket_cpus(int socket) const {
  std::vector<int> out;
  for (const auto& [cpu, loc] : cpus) {
    if (loc.socket == socket) out.push_back(cpu);
  }
  return out;
}

int MachineTopology::node_of_socket(int socket) const {
  const auto members = socket_cpus(socket);
  for (const auto& [node, list] : node_cpus) {
    if (list.empty()) continue;
    const bool inside = std::all_of(list.begin(), list.end(), [&](int cpu) {
      return std::find(members.begin(), members.end(), cpu) != members.end();
    });
    if (inside) return node;
  }
  throw Error("no memory node is local to socket " + std::to_string(socket));
}

std::uint64_t MachineTopology::llc_bytes_of(int socket) const {
  auto it = llc_bytes.find(socket);
  return it == llc_bytes.end() ? kFallbackLlcBytes : it->second;
}

std::vector<int> parse_cpu_list(std::string_view text) {
  std::vector<int> out;
  while (!text.empty()) {
    auto comma = text.find(',');
    auto item = text.substr(0, comma);
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    while (!item.empty() && item.back() == '\n') item.remove_suffix(1);
    if (item.empty()) continue;
    auto dash = item.find('-');
    if (dash == std::string_view::npos) {
      out.push_back(parse_int(item, "cpu list"));
    } else {
      int lo = parse_int(item.substr(0, dash), "cpu list");
      int hi = parse_int(item.substr(dash + 1), "cpu list");
      if (hi < lo) throw Error("descending range in cpu list: " + std::string(item));
      for (int c = lo; c <= hi; ++c) out.push_back(c);
    }
  }
  return out;
}

MachineTopology discover(const fs::path& root) {
  const fs::path cpu_dir = root / "cpu";
  if (!fs::is_directory(cpu_dir)) {
    throw Error("topology tree not readable at " + cpu_dir.string() +
                " (supply a fixture snapshot with --topology)");
  }

  MachineTopology topo;
  std::vector<int> online;
  if (auto line = read_line(cpu_dir / "online")) online = parse_cpu_list(*line);

  for (const auto& entry : fs::directory_iterator(cpu_dir)) {
    auto index = entry_index(entry.path().filename().string(), "cpu");
    if (!index || !fs::is_directory(entry.path() / "topology")) continue;
    if (!online.empty() && std::find(online.begin(), online.end(), *index) == online.end()) {
      continue;
    }
    auto pkg = read_line(entry.path() / "topology" / "physical_package_id");
    auto core = read_line(entry.path() / "topology" / "core_id");
    if (!pkg || !core) {
      throw Error("incomplete topology entry for cpu" + std::to_string(*index));
    }
    CpuLocation loc{parse_int(*pkg, "physical_package_id"), parse_int(*core, "core_id")};
    topo.cpus.emplace(*index, loc);

    if (topo.llc_bytes.count(loc.socket) == 0) {
      int best_level = 0;
      std::uint64_t best_size = 0;
      const fs::path cache_dir = entry.path() / "cache";
      if (fs::is_directory(cache_dir)) {
        for (const auto& idx : fs::directory_iterator(cache_dir)) {
          if (!entry_index(idx.path().filename().string(), "index")) continue;
          auto level = read_line(idx.path() / "level");
          auto size = read_line(idx.path() / "size");
          if (!level || !size) continue;
          int lvl = parse_int(*level, "cache level");
          if (lvl > best_level) {
            best_level = lvl;
            best_size = parse_cache_size(*size);
          }
        }
      }
      if (best_size > 0) topo.llc_bytes[loc.socket] = best_size;
    }
  }
  if (topo.cpus.empty()) throw Error("no CPUs found under " + cpu_dir.string());

  const fs::path node_dir = root / "node";
  if (fs::is_directory(node_dir)) {
    for (const auto& entry : fs::directory_iterator(node_dir)) {
      auto index = entry_index(entry.path().filename().string(), "node");
      if (!index) continue;
      auto list = read_line(entry.path() / "cpulist");
      topo.node_cpus[*index] = list ? parse_cpu_list(*list) : std::vector<int>{};
    }
  }
  if (topo.node_cpus.empty()) {
    // Non-NUMA kernels expose no node directory; everything is node 0.
    std::vector<int> all;
    for (const auto& [cpu, loc] : topo.cpus) all.push_back(cpu);
    topo.node_cpus[0] = all;
  }

  for (int socket = 0; socket < topo.sockets(); ++socket) {
    if (topo.llc_bytes.count(socket) == 0) {
      topo.llc_bytes[socket] = kFallbackLlcBytes;
      topo.warnings.push_back("LLC size of socket " + std::to_string(socket) +
                              " unknown; assuming 28 MiB");
    }
  }
  return topo;
}

Scenario make_scenario(const MachineTopology& topo, ScenarioKind kind,
                       const ScenarioOptions& options) {
  auto per_core = [&](std::vector<int> cpus) {
    if (!options.one_thread_per_core) return cpus;
    std::vector<int> out;
    std::set<std::pair<int, int>> seen;
    for (int cpu : cpus) {
      const auto& loc = topo.cpus.at(cpu);
      if (seen.emplace(loc.socket, loc.core).second) out.push_back(cpu);
    }
    return out;
  };

  std::set<int> socket_ids;
  for (const auto& [cpu, loc] : topo.cpus) socket_ids.insert(loc.socket);
  if (socket_ids.count(options.socket) == 0) {
    throw Error("socket " + std::to_string(options.socket) + " does not exist");
  }

  Scenario s;
  s.kind = kind;
  switch (kind) {
    case ScenarioKind::SingleThread: {
      s.cpu_set = {topo.socket_cpus(options.socket).front()};
      int node = topo.node_of_socket(options.socket);
      s.mem_nodes = {node};
      break;
    }
    case ScenarioKind::SingleSocket: {
      s.cpu_set = per_core(topo.socket_cpus(options.socket));
      s.mem_nodes = {topo.node_of_socket(options.socket)};
      break;
    }
    case ScenarioKind::TwoSockets: {
      if (socket_ids.size() != 2) {
        throw Error("two-sockets scenario needs exactly 2 sockets, machine has " +
                    std::to_string(socket_ids.size()) + "; use single-socket instead");
      }
      for (int socket : socket_ids) {
        auto cpus = per_core(topo.socket_cpus(socket));
        s.cpu_set.insert(s.cpu_set.end(), cpus.begin(), cpus.end());
        s.mem_nodes.push_back(topo.node_of_socket(socket));
      }
      if (s.mem_nodes[0] == s.mem_nodes[1]) {
        throw Error("two-sockets scenario needs one memory node per socket");
      }
      break;
    }
  }
  return s;
}

std::vector<int> current_affinity() {
  cpu_set_t set;
  CPU_ZERO(&set);
  if (sched_getaffinity(0, sizeof(set), &set) != 0) {
    throw Error(std::string("sched_getaffinity failed: ") + std::strerror(errno));
  }
  std::vector<int> out;
  for (int c = 0; c < CPU_SETSIZE; ++c) {
    if (CPU_ISSET(c, &set)) out.push_back(c);
  }
  return out;
}

std::vector<int> pin_current_thread(int cpu) {
  if (cpu < 0 || cpu >= CPU_SETSIZE) {
    throw Error("cannot pin to cpu " + std::to_string(cpu) + ": id out of range");
  }
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(cpu, &set);
  if (sched_setaffinity(0, sizeof(set), &set) != 0) {
    throw Error("cannot pin to cpu " + std::to_string(cpu) + ": " + std::strerror(errno));
  }
  auto readback = current_affinity();
  if (readback != std::vector<int>{cpu}) {
    throw Error("affinity readback after pinning to cpu " + std::to_string(cpu) +
                " does not match");
  }
  return readback;
}

thread_local int MockAffinity::pinned_ = -1;

std::vector<int> MockAffinity::pin(int cpu) {
  if (cpu < 0) throw Error("cannot pin to cpu " + std::to_string(cpu));
  pinned_ = cpu;
  return {cpu};
}

std::vector<int> MockAffinity::readback() {
  if (pinned_ < 0) return {};
  return {pinned_};
}

NodeBuffer::NodeBuffer(void* data, std::size_t bytes, int node, bool owned)
    : data_(data), bytes_(bytes), node_(node), owned_(owned) {}

NodeBuffer::NodeBuffer(NodeBuffer&& other) noexcept
    : data_(std::exchange(other.data_, nullptr)),
      bytes_(std::exchange(other.bytes_, 0)),
      node_(std::exchange(other.node_, -1)),
      owned_(std::exchange(other.owned_, false)) {}

NodeBuffer& NodeBuffer::operator=(NodeBuffer&& other) noexcept {
  if (this != &other) {
    release();
    data_ = std::exchange(other.data_, nullptr);
    bytes_ = std::exchange(other.bytes_, 0);
    node_ = std::exchange(other.node_, -1);
    owned_ = std::exchange(other.owned_, false);
  }
  return *this;
}

NodeBuffer::~NodeBuffer() { release(); }

void NodeBuffer::release() {
  if (owned_ && data_ != nullptr) munmap(data_, bytes_);
  data_ = nullptr;
  owned_ = false;
}

NodeBuffer bind_allocation(const MachineTopology& topo, int node, std::size_t bytes) {
  if (topo.node_cpus.count(node) == 0) {
    throw Error("memory node " + std::to_string(node) + " does not exist");
  }
  if (bytes == 0) throw Error("refusing to bind a zero-byte allocation");
  if (node >= 64) throw Error("memory node ids >= 64 are not supported");

  void* p = mmap(nullptr, bytes, PROT_READ | PROT_WRITE, MAP_PRIVATE | MAP_ANONYMOUS, -1, 0);
  if (p == MAP_FAILED) {
    throw Error("cannot map " + std::to_string(bytes) + " bytes: " + std::strerror(errno));
  }
  NodeBuffer buffer(p, bytes, node, true);
  const unsigned long mask = 1ul << node;
  if (sys_mbind(p, bytes, kMpolBind, &mask, 64, kMpolMfStrict) != 0) {
    throw Error("cannot bind allocation to node " + std::to_string(node) + ": " +
                std::strerror(errno));
  }
  // Fault in every page now: MPOL_BIND without fallback makes the kernel
  // OOM-fail here instead of silently placing pages on another node.
  const std::size_t page = static_cast<std::size_t>(sysconf(_SC_PAGESIZE));
  auto* bytes_ptr = static_cast<volatile char*>(p);
  for (std::size_t off = 0; off < bytes; off += page) bytes_ptr[off] = 0;
  return buffer;
}

NodeBuffer mock_allocation(const MachineTopology& topo, int node, std::size_t bytes) {
  if (topo.node_cpus.count(node) == 0) {
    throw Error("memory node " + std::to_string(node) + " does not exist");
  }
  if (bytes == 0) throw Error("refusing to bind a zero-byte allocation");
  return NodeBuffer(nullptr, bytes, node, false);
}

double sampled_page_residency(const NodeBuffer& buffer, int node, std::size_t max_samples) {
  if (buffer.mock()) return buffer.node() == node ? 1.0 : 0.0;
  const std::size_t page = static_cast<std::size_t>(sysconf(_SC_PAGESIZE));
  const std::size_t pages = buffer.size() / page;
  if (pages == 0) return 0.0;
  const std::size_t count = std::min(pages, max_samples);
  std::vector<void*> addrs(count);
  std::vector<int> status(count, -1);
  for (std::size_t i = 0; i < count; ++i) {
    addrs[i] = buffer.data() + (i * pages / count) * page;
  }
  if (syscall(SYS_move_pages, 0, count, addrs.data(), nullptr, status.data(), 0) != 0) {
    throw Error(std::string("page location query failed: ") + std::strerror(errno));
  }
  const auto hits = std::count(status.begin(), status.end(), node);
  return static_cast<double>(hits) / static_cast<double>(count);
}

}  // namespace roofline
