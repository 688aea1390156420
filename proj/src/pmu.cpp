#include "roofline/pmu.hpp"

#include <linux/perf_event.h>
#include <sys/ioctl.h>
#include <sys/syscall.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "roofline/error.hpp"

namespace roofline {

namespace fs = std::filesystem;

CounterSample& CounterSample::operator+=(const CounterSample& other) {
  scalar_single += other.scalar_single;
  packed_128 += other.packed_128;
  packed_256 += other.packed_256;
  packed_512 += other.packed_512;
  imc_cas_reads += other.imc_cas_reads;
  imc_cas_writes += other.imc_cas_writes;
  valid_mask &= other.valid_mask;
  return *this;
}

std::uint64_t flops_from_sample(const CounterSample& s) {
  if (!s.fp_valid()) throw Error("work not measurable: FP_ARITH counters unavailable");
  return s.scalar_single * 1 + s.packed_128 * 4 + s.packed_256 * 8 + s.packed_512 * 16;
}

std::uint64_t traffic_from_sample(const CounterSample& s) {
  if (!s.imc_valid()) throw Error("traffic not measurable: IMC uncore counters unavailable");
  return (s.imc_cas_reads + s.imc_cas_writes) * kCacheLineBytes;
}

SubtractResult subtract_overhead(const CounterSample& full, const CounterSample& init_only) {
  if (full.valid_mask != init_only.valid_mask) {
    throw Error("cannot subtract counter samples with different valid masks");
  }
  SubtractResult r;
  r.sample.valid_mask = full.valid_mask;
  auto sub = [&](std::uint64_t a, std::uint64_t b) -> std::uint64_t {
    if (b > a) {
      r.clamped = true;
      return 0;
    }
    return a - b;
  };
  r.sample.scalar_single = sub(full.scalar_single, init_only.scalar_single);
  r.sample.packed_128 = sub(full.packed_128, init_only.packed_128);
  r.sample.packed_256 = sub(full.packed_256, init_only.packed_256);
  r.sample.packed_512 = sub(full.packed_512, init_only.packed_512);
  r.sample.imc_cas_reads = sub(full.imc_cas_reads, init_only.imc_cas_reads);
  r.sample.imc_cas_writes = sub(full.imc_cas_writes, init_only.imc_cas_writes);
  return r;
}

CounterSample mean_sample(const std::vector<CounterSample>& samples) {
  if (samples.empty()) throw Error("mean of zero counter samples");
  const std::uint64_t n = samples.size();
  CounterSample sum;
  sum.valid_mask = samples.front().valid_mask;
  for (const auto& s : samples) {
    if (s.valid_mask != sum.valid_mask) throw Error("counter samples with different masks");
    sum += s;
  }
  auto avg = [n](std::uint64_t v) { return (v + n / 2) / n; };
  sum.scalar_single = avg(sum.scalar_single);
  sum.packed_128 = avg(sum.packed_128);
  sum.packed_256 = avg(sum.packed_256);
  sum.packed_512 = avg(sum.packed_512);
  sum.imc_cas_reads = avg(sum.imc_cas_reads);
  sum.imc_cas_writes = avg(sum.imc_cas_writes);
  return sum;
}

CounterSample CounterBackend::scoped_sample(const std::function<void()>& region) {
  bool expected = false;
  if (!in_scope_.compare_exchange_strong(expected, true)) {
    throw Error("nested counter scope on the same backend");
  }
  struct Reset {
    std::atomic<bool>& flag;
    ~Reset() { flag.store(false); }
  } reset{in_scope_};
  start();
  try {
    region();
  } catch (...) {
    stop();
    throw;
  }
  return stop();
}

MockCounterBackend::MockCounterBackend(std::vector<CounterSample> script)
    : script_(std::move(script)) {}

std::uint32_t MockCounterBackend::available() const {
  return script_.empty() ? kAllCounters : script_.front().valid_mask;
}

CounterSample MockCounterBackend::stop() {
  if (next_ >= script_.size()) {
    throw Error("mock counter script exhausted after " + std::to_string(next_) + " samples");
  }
  return script_[next_++];
}

// ---------------------------------------------------------------------------
// Hardware backend

namespace {

long perf_event_open(perf_event_attr* attr, pid_t pid, int cpu, int group, unsigned long flags) {
  return syscall(SYS_perf_event_open, attr, pid, cpu, group, flags);
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::string s;
  std::getline(in, s);
  return s;
}

struct CpuModel {
  int family = -1;
  int model = -1;
};

CpuModel host_cpu_model() {
  std::ifstream in("/proc/cpuinfo");
  CpuModel m;
  std::string line;
  while (std::getline(in, line) && (m.family < 0 || m.model < 0)) {
    auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    auto key = line.substr(0, colon);
    key.erase(key.find_last_not_of(" \t") + 1);
    const auto value = line.substr(colon + 1);
    if (key == "cpu family") m.family = std::atoi(value.c_str());
    if (key == "model") m.model = std::atoi(value.c_str());
  }
  return m;
}

int open_counter(std::uint32_t type, std::uint64_t config, pid_t pid, int cpu, bool inherit,
                 int& err) {
  perf_event_attr attr{};
  attr.size = sizeof(attr);
  attr.type = type;
  attr.config = config;
  attr.disabled = 1;
  attr.inherit = inherit ? 1 : 0;
  if (pid >= 0) {
    attr.exclude_kernel = 1;
    attr.exclude_hv = 1;
  }
  long fd = perf_event_open(&attr, pid, cpu, -1, 0);
  err = fd < 0 ? errno : 0;
  return static_cast<int>(fd);
}

std::uint64_t read_counter(int fd) {
  std::uint64_t value = 0;
  if (::read(fd, &value, sizeof(value)) != static_cast<ssize_t>(sizeof(value))) {
    throw Error(std::string("reading perf counter failed: ") + std::strerror(errno));
  }
  return value;
}

bool permission_errno(int err) { return err == EACCES || err == EPERM; }

}  // namespace

std::optional<FpEventTable> fp_events_for_model(int family, int model) {
  // FP_ARITH_INST_RETIRED (event 0xC7) keeps these umasks from Skylake-SP /
  // Cascade Lake (0x55) through Ice Lake-SP, Sapphire and Emerald Rapids.
  const bool known = model == 0x55 || model == 0x6A || model == 0x6C || model == 0x8F ||
                     model == 0xCF;
  if (family == 6 && known) {
    auto raw = [](std::uint64_t umask) { return EventEncoding{PERF_TYPE_RAW, 0xC7 | (umask << 8)}; };
    return FpEventTable{raw(0x02), raw(0x08), raw(0x20), raw(0x80)};
  }
  return std::nullopt;
}

std::uint64_t parse_event_spec(const std::string& spec) {
  std::uint64_t event = 0, umask = 0;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto eq = item.find('=');
    if (eq == std::string::npos) continue;
    auto key = item.substr(0, eq);
    auto value = std::stoull(item.substr(eq + 1), nullptr, 0);
    if (key == "event") event = value;
    else if (key == "umask") umask = value;
  }
  return event | (umask << 8);
}

std::optional<int> perf_paranoid_level() {
  std::ifstream in("/proc/sys/kernel/perf_event_paranoid");
  int level = 0;
  if (!(in >> level)) return std::nullopt;
  return level;
}

std::string paranoia_remediation(int required_level) {
  return "run: sudo sysctl -w kernel.perf_event_paranoid=" + std::to_string(required_level);
}

HardwareCounterBackend::HardwareCounterBackend(const std::string& sysfs_pmu_root) {
  const fs::path root(sysfs_pmu_root);
  const auto paranoid = perf_paranoid_level();

  // Core FP_ARITH events.
  std::optional<FpEventTable> table;
  const auto cpu = host_cpu_model();
  table = fp_events_for_model(cpu.family, cpu.model);
  if (!table && fs::is_directory(root / "cpu" / "events")) {
    const char* names[] = {"fp_arith_inst_retired.scalar_single",
                           "fp_arith_inst_retired.128b_packed_single",
                           "fp_arith_inst_retired.256b_packed_single",
                           "fp_arith_inst_retired.512b_packed_single"};
    FpEventTable t;
    EventEncoding* slots[] = {&t.scalar_single, &t.packed_128, &t.packed_256, &t.packed_512};
    bool all = true;
    const auto type = static_cast<std::uint32_t>(std::stoul(read_text(root / "cpu" / "type")));
    for (int i = 0; i < 4; ++i) {
      const auto file = root / "cpu" / "events" / names[i];
      if (!fs::exists(file)) {
        all = false;
        break;
      }
      *slots[i] = EventEncoding{type, parse_event_spec(read_text(file))};
    }
    if (all) table = t;
  }

  if (!table) {
    diagnostics_.push_back("FP_ARITH events unknown for cpu family " + std::to_string(cpu.family) +
                           " model " + std::to_string(cpu.model) + "; work counters masked");
  } else {
    const EventEncoding events[] = {table->scalar_single, table->packed_128, table->packed_256,
                                    table->packed_512};
    bool ok = true;
    for (int i = 0; i < 4 && ok; ++i) {
      int err = 0;
      fp_fds_[i] = open_counter(events[i].type, events[i].config, 0, -1, true, err);
      if (fp_fds_[i] < 0) {
        ok = false;
        if (permission_errno(err)) {
          for (int& fd : fp_fds_) {
            if (fd >= 0) close(fd);
            fd = -1;
          }
          throw Error("permission denied opening FP_ARITH counters (perf_event_paranoid=" +
                      (paranoid ? std::to_string(*paranoid) : std::string("?")) + "); " +
                      paranoia_remediation(2));
        }
        const std::string why = err == ENOENT || err == ENODEV
                                    ? "the OS exposes no core PMU (virtualized host?)"
                                    : std::strerror(err);
        diagnostics_.push_back("FP_ARITH counter unavailable: " + why + "; work counters masked");
      }
    }
    if (ok) {
      available_ |= kFpCounters;
    } else {
      for (int& fd : fp_fds_) {
        if (fd >= 0) close(fd);
        fd = -1;
      }
    }
  }

  // Uncore IMC CAS events, one pair per memory controller channel.
  std::vector<fs::path> imcs;
  if (fs::is_directory(root)) {
    for (const auto& e : fs::directory_iterator(root)) {
      const auto name = e.path().filename().string();
      if (name.rfind("uncore_imc_", 0) == 0 && name.find("free_running") == std::string::npos) {
        imcs.push_back(e.path());
      }
    }
  }
  std::sort(imcs.begin(), imcs.end());
  bool imc_ok = !imcs.empty();
  for (const auto& dir : imcs) {
    if (!imc_ok) break;
    const auto type = static_cast<std::uint32_t>(std::stoul(read_text(dir / "type")));
    auto cpus = read_text(dir / "cpumask");
    const int target_cpu = cpus.empty() ? 0 : std::atoi(cpus.c_str());
    std::uint64_t rd = 0x04 | (0x03 << 8), wr = 0x04 | (0x0C << 8);
    if (fs::exists(dir / "events" / "cas_count_read")) {
      rd = parse_event_spec(read_text(dir / "events" / "cas_count_read"));
    }
    if (fs::exists(dir / "events" / "cas_count_write")) {
      wr = parse_event_spec(read_text(dir / "events" / "cas_count_write"));
    }
    int err = 0;
    const int rfd = open_counter(type, rd, -1, target_cpu, false, err);
    const int wfd = rfd < 0 ? -1 : open_counter(type, wr, -1, target_cpu, false, err);
    if (rfd < 0 || wfd < 0) {
      if (rfd >= 0) close(rfd);
      imc_ok = false;
      std::string msg = std::string("IMC counter unavailable: ") + std::strerror(err);
      if (permission_errno(err)) msg += "; " + paranoia_remediation(0);
      diagnostics_.push_back(msg + "; traffic counters masked");
      break;
    }
    imc_read_fds_.push_back(rfd);
    imc_write_fds_.push_back(wfd);
  }
  if (imcs.empty()) {
    diagnostics_.push_back("no uncore_imc PMU exposed by the OS; traffic counters masked");
  }
  if (imc_ok) {
    available_ |= kImcCounters;
  } else {
    for (int fd : imc_read_fds_) close(fd);
    for (int fd : imc_write_fds_) close(fd);
    imc_read_fds_.clear();
    imc_write_fds_.clear();
  }
}

HardwareCounterBackend::~HardwareCounterBackend() {
  for (int fd : fp_fds_) {
    if (fd >= 0) close(fd);
  }
  for (int fd : imc_read_fds_) close(fd);
  for (int fd : imc_write_fds_) close(fd);
}

void HardwareCounterBackend::start() {
  auto arm = [](int fd) {
    ioctl(fd, PERF_EVENT_IOC_RESET, 0);
    ioctl(fd, PERF_EVENT_IOC_ENABLE, 0);
  };
  for (int fd : imc_read_fds_) arm(fd);
  for (int fd : imc_write_fds_) arm(fd);
  for (int fd : fp_fds_) {
    if (fd >= 0) arm(fd);
  }
}

CounterSample HardwareCounterBackend::stop() {
  for (int fd : fp_fds_) {
    if (fd >= 0) ioctl(fd, PERF_EVENT_IOC_DISABLE, 0);
  }
  for (int fd : imc_read_fds_) ioctl(fd, PERF_EVENT_IOC_DISABLE, 0);
  for (int fd : imc_write_fds_) ioctl(fd, PERF_EVENT_IOC_DISABLE, 0);

  CounterSample s;
  s.valid_mask = available_;
  if (available_ & kFpCounters) {
    s.scalar_single = read_counter(fp_fds_[0]);
    s.packed_128 = read_counter(fp_fds_[1]);
    s.packed_256 = read_counter(fp_fds_[2]);
    s.packed_512 = read_counter(fp_fds_[3]);
  }
  for (int fd : imc_read_fds_) s.imc_cas_reads += read_counter(fd);
  for (int fd : imc_write_fds_) s.imc_cas_writes += read_counter(fd);
  return s;
}

std::unique_ptr<CounterBackend> make_hardware_backend() {
  return std::make_unique<HardwareCounterBackend>();
}

}  // namespace roofline
