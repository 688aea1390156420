#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "roofline/core.hpp"
#include "roofline/kernels.hpp"
#include "roofline/pmu.hpp"
#include "roofline/topology.hpp"

namespace roofline {

struct CacheProtocol {
  CacheKind kind = CacheKind::Cold;
  std::uint64_t cold_clobber_bytes = 0;  // 0 = 2 x LLC
  int warm_iterations = 5;

  static CacheProtocol cold(std::uint64_t llc_bytes);
  static CacheProtocol warm(int iterations = 5);
  /// Throws when the clobber buffer is smaller than the LLC or warm_iterations < 1.
  void validate(std::uint64_t llc_bytes) const;
};

inline constexpr int kDefaultRepetitions = 10;

struct RunPlan {
  Scenario scenario;
  CacheProtocol cache;
  int repetitions = kDefaultRepetitions;
  std::string kernel_name;
  std::size_t elements = 0;
  bool baseline_subtraction = true;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Kernel buffers below this total make Q unreliable.
inline constexpr std::size_t kReliableTrafficBytes = std::size_t{1} << 20;

/// Times one execute. The mock variant runs the region and returns a
/// scripted duration.
class RegionTimer {
 public:
  virtual ~RegionTimer() = default;
  virtual double time(const RunPlan& plan, const std::function<void()>& region) = 0;
};

class SteadyRegionTimer final : public RegionTimer {
 public:
  double time(const RunPlan& plan, const std::function<void()>& region) override;
};

class ScriptedRegionTimer final : public RegionTimer {
 public:
  /// Keyed by "kernel@scenario" first, then "kernel".
  explicit ScriptedRegionTimer(std::map<std::string, double> seconds) : seconds_(std::move(seconds)) {}
  double time(const RunPlan& plan, const std::function<void()>& region) override;

 private:
  std::map<std::string, double> seconds_;
};

struct ClearResult {
  std::uint64_t bytes_written = 0;
  bool misuse = false;  // called under the warm protocol
};

/// Owns the scratch buffer used to evict caches between repetitions.
class CacheClobber {
 public:
  /// simulate: account the bytes without touching memory (mock runs).
  explicit CacheClobber(bool simulate = false) : simulate_(simulate) {}
  ClearResult clear(const CacheProtocol& protocol);

 private:
  bool simulate_;
  std::vector<unsigned char> scratch_;
};

/// IMC traffic rate of an idle process, subtracted from Q as rate x R.
struct IdleBaseline {
  double bytes_per_second = 0.0;
};

IdleBaseline sample_idle_baseline(CounterBackend& backend, double seconds,
                                  const std::function<void(double)>& sleeper);

struct HarnessOptions {
  std::uint64_t llc_bytes = kFallbackLlcBytes;
  bool simulate_clobber = false;
  std::optional<IdleBaseline> idle;
};

class Harness {
 public:
  Harness(CounterBackend& backend, RegionTimer& timer, Affinity& affinity,
          HarnessOptions options = {});

  /// Two-run protocol: one init-only scope, then per repetition the cache
  /// protocol outside any scope and one scoped, timed execute.
  KernelMeasurement measure(Kernel& kernel, const RunPlan& plan);

  const HarnessOptions& options() const { return options_; }
  std::vector<std::string> take_warnings();

 private:
  CounterBackend& backend_;
  RegionTimer& timer_;
  Affinity& affinity_;
  HarnessOptions options_;
  CacheClobber clobber_;
  std::vector<std::string> warnings_;
};

/// "name" or "name:n".
struct KernelSpec {
  std::string name;
  std::size_t elements = std::size_t{1} << 20;
};
KernelSpec parse_kernel_spec(const std::string& text);
std::vector<KernelSpec> parse_kernel_list(const std::string& comma_list);

struct CellError {
  std::string kernel;
  std::string scenario;
  std::string cache;
  std::string message;
};

struct SuiteResult {
  std::vector<KernelMeasurement> measurements;
  std::vector<CellError> errors;
  std::vector<std::string> warnings;
};

using KernelFactory = std::function<std::unique_ptr<Kernel>(const std::string&)>;

/// Kernel-major Cartesian product of specs and plans. A failing cell is
/// recorded and the suite continues.
SuiteResult run_suite(Harness& harness, const std::vector<KernelSpec>& kernels,
                      const std::vector<RunPlan>& plans, const KernelFactory& factory);

}  // namespace roofline
