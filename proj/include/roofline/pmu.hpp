#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace roofline {

/// Bytes moved per IMC CAS event.
inline constexpr std::uint64_t kCacheLineBytes = 64;

enum CounterBit : std::uint32_t {
  kScalarSingle = 1u << 0,
  kPacked128 = 1u << 1,
  kPacked256 = 1u << 2,
  kPacked512 = 1u << 3,
  kImcReads = 1u << 4,
  kImcWrites = 1u << 5,
};

inline constexpr std::uint32_t kFpCounters = kScalarSingle | kPacked128 | kPacked256 | kPacked512;
inline constexpr std::uint32_t kImcCounters = kImcReads | kImcWrites;
inline constexpr std::uint32_t kAllCounters = kFpCounters | kImcCounters;

/// Raw event counts of one scoped region. A counter that could not be
/// opened is cleared from valid_mask; its value is meaningless.
struct CounterSample {
  std::uint64_t scalar_single = 0;
  std::uint64_t packed_128 = 0;
  std::uint64_t packed_256 = 0;
  std::uint64_t packed_512 = 0;
  std::uint64_t imc_cas_reads = 0;
  std::uint64_t imc_cas_writes = 0;
  std::uint32_t valid_mask = kAllCounters;

  bool fp_valid() const { return (valid_mask & kFpCounters) == kFpCounters; }
  bool imc_valid() const { return (valid_mask & kImcCounters) == kImcCounters; }

  CounterSample& operator+=(const CounterSample& other);
  friend CounterSample operator+(CounterSample a, const CounterSample& b) { return a += b; }
  friend bool operator==(const CounterSample&, const CounterSample&) = default;
};

/// FLOPs represented by the FP_ARITH counts: lane-weighted 1/4/8/16. An FMA
/// already increments its counter twice, so no extra doubling happens here.
std::uint64_t flops_from_sample(const CounterSample& s);

/// Bytes through the memory controllers: (reads + writes) * 64.
std::uint64_t traffic_from_sample(const CounterSample& s);

struct SubtractResult {
  CounterSample sample;
  bool clamped = false;
};

/// Field-wise saturating difference. `clamped` reports that at least one
/// field of init_only exceeded full (noise on tiny deltas).
SubtractResult subtract_overhead(const CounterSample& full, const CounterSample& init_only);

/// Rounded field-wise mean; masks must agree.
CounterSample mean_sample(const std::vector<CounterSample>& samples);

enum class BackendKind { Hardware, Mock };

/// What the next scope is about to measure; lets scripted backends answer
/// per kernel instead of by call order.
struct RegionLabel {
  std::string phase;  // "init", "full" or "idle"
  std::string kernel;
  std::string scenario;
  std::string cache;
};

class CounterBackend {
 public:
  virtual ~CounterBackend() = default;
  virtual BackendKind kind() const = 0;
  /// Counters this backend can deliver.
  virtual std::uint32_t available() const = 0;
  /// Human readable notes about unavailable counters and remediation.
  virtual std::vector<std::string> diagnostics() const { return {}; }
  virtual void annotate(const RegionLabel&) {}

  /// Resets and enables the counters, runs region, disables and reads.
  /// Not reentrant: a nested call throws.
  CounterSample scoped_sample(const std::function<void()>& region);

 protected:
  virtual void start() = 0;
  virtual CounterSample stop() = 0;

 private:
  std::atomic<bool> in_scope_{false};
};

/// Replays a scripted list of samples in order, one per scope.
class MockCounterBackend final : public CounterBackend {
 public:
  explicit MockCounterBackend(std::vector<CounterSample> script);

  BackendKind kind() const override { return BackendKind::Mock; }
  std::uint32_t available() const override;
  std::size_t consumed() const { return next_; }
  std::size_t remaining() const { return script_.size() - next_; }

 protected:
  void start() override {}
  CounterSample stop() override;

 private:
  std::vector<CounterSample> script_;
  std::size_t next_ = 0;
};

/// perf_event_open raw encoding of one event.
struct EventEncoding {
  std::uint32_t type = 4;  // PERF_TYPE_RAW
  std::uint64_t config = 0;
};

/// Encodings for the current CPU model, or nullopt when the model is not
/// in the shipped table.
struct FpEventTable {
  EventEncoding scalar_single, packed_128, packed_256, packed_512;
};
std::optional<FpEventTable> fp_events_for_model(int family, int model);

/// Parses a sysfs event description such as "event=0x04,umask=0x03".
std::uint64_t parse_event_spec(const std::string& spec);

/// The OS perf paranoia level, or nullopt if unreadable.
std::optional<int> perf_paranoid_level();
std::string paranoia_remediation(int required_level);

/// Linux perf_event_open backend: FP_ARITH events follow the calling
/// process (inherited by threads created inside the scope), IMC CAS events
/// are system wide on every uncore_imc_* PMU.
class HardwareCounterBackend final : public CounterBackend {
 public:
  explicit HardwareCounterBackend(const std::string& sysfs_pmu_root =
                                      "/sys/bus/event_source/devices");
  ~HardwareCounterBackend() override;
  HardwareCounterBackend(const HardwareCounterBackend&) = delete;
  HardwareCounterBackend& operator=(const HardwareCounterBackend&) = delete;

  BackendKind kind() const override { return BackendKind::Hardware; }
  std::uint32_t available() const override { return available_; }
  std::vector<std::string> diagnostics() const override { return diagnostics_; }
  int imc_channels() const { return static_cast<int>(imc_read_fds_.size()); }

 protected:
  void start() override;
  CounterSample stop() override;

 private:
  int fp_fds_[4] = {-1, -1, -1, -1};
  std::vector<int> imc_read_fds_;
  std::vector<int> imc_write_fds_;
  std::uint32_t available_ = 0;
  std::vector<std::string> diagnostics_;
};

/// Hardware when any counter can be opened, otherwise the caller decides.
std::unique_ptr<CounterBackend> make_hardware_backend();

}  // namespace roofline
